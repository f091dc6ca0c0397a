//! Estimates the scene's log-radiance histogram from a dense two-stop stack
//! and plans against the estimate.

use stereohdr::planner::dense_stack_plan;
use stereohdr::radiance::{estimate_from_stack, StackFrame};
use stereohdr::compare::benchmark_scene;
use stereohdr::{capture_stack, plan, CameraId, CameraRig, PlannerConfig};

fn main() -> stereohdr::Result<()> {
    let rig = CameraRig::synthetic();
    let config = PlannerConfig::joint();
    let scene = benchmark_scene(320, 240, 5)?;
    let truth = scene.histogram(120)?;
    let dense = dense_stack_plan(&truth, &rig, 2, &config)?;
    let frames = capture_stack(&scene, &dense, &rig, 5)?;

    let view = |cam: CameraId| -> Vec<StackFrame<'_>> {
        let model = rig.camera(cam).expect("dual rig");
        frames
            .iter()
            .filter(|f| f.shot.camera == cam)
            .map(|f| {
                let g = model.gain(f.shot.iso);
                StackFrame {
                    pixels: &f.pixels,
                    t: f.shot.t,
                    g,
                    window: model.pixel_window(g, config.eta),
                    icrf: &model.icrf,
                }
            })
            .collect()
    };
    let primary = view(CameraId::Primary);
    let estimate = estimate_from_stack(&[&primary], 120)?;
    let (a, b) = (truth.range_of_interest(), estimate.range_of_interest());
    println!("range of interest: true [{:.2}, {:.2}], estimated [{:.2}, {:.2}]", a.low, a.high, b.low, b.high);
    for q in [0.1, 0.5, 0.9] {
        println!("quantile {q}: true {:.3}, estimated {:.3}", truth.quantile(q), estimate.quantile(q));
    }
    let (from_truth, from_estimate) = (plan(&truth, &rig, &config)?, plan(&estimate, &rig, &config)?);
    println!(
        "t_cap planned on truth {:.4} s, on estimate {:.4} s (dense stack {:.4} s)",
        from_truth.t_cap, from_estimate.t_cap, dense.t_cap
    );
    Ok(())
}
