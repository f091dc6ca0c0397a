//! Renders a layered stereo scene, captures the joint plan and writes everything to disk.
//!
//! ```bash
//! cargo run --release --example simulate_stack -- /tmp/stack_demo
//! ```

use std::path::PathBuf;

use stereohdr::compare::benchmark_target;
use stereohdr::{capture_stack, io, make_scene, plan, CameraRig, PlannerConfig, SceneSpec};

fn main() -> stereohdr::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("stack_demo"));
    let rig = CameraRig::synthetic();
    let scene = make_scene(&SceneSpec::desk(320, 240, benchmark_target(), 7))?;
    let p = plan(&scene.histogram(200)?, &rig, &PlannerConfig::joint())?;
    let frames = capture_stack(&scene, &p, &rig, 7)?;

    for f in &frames {
        let sat = f.pixels.as_slice().iter().filter(|&&d| d >= rig.primary.d_saturation).count();
        println!(
            "{:?} t = {:.5} s ISO {}: {:.1}% saturated",
            f.shot.camera,
            f.shot.t,
            f.shot.iso,
            100.0 * sat as f64 / f.pixels.len() as f64
        );
    }
    let mut written = io::write_scene(&out.join("scene"), &scene)?;
    written.extend(io::write_stack(&out.join("stack"), &frames)?);
    println!("wrote {} files under {}", written.len(), out.display());
    Ok(())
}
