//! Joint ICRF estimation from correspondences sampled with ground-truth disparity.

use stereohdr::camera::db_to_ratio;
use stereohdr::compare::ladder_shots;
use stereohdr::disparity::DisparityMap;
use stereohdr::icrf::{correspondences_from_disparity, estimate_joint_icrf, Anchor};
use stereohdr::sim::capture_shots;
use stereohdr::{make_scene, CameraRig, LogRadianceHistogram, SceneSpec};

fn main() -> stereohdr::Result<()> {
    let rig = CameraRig::synthetic();
    let eta = db_to_ratio(3.2);
    let scene = make_scene(&SceneSpec::desk(320, 240, LogRadianceHistogram::uniform(2.5, 10.5, 160), 1))?;
    let shots = ladder_shots(&rig, 1.6, 8, 100.0, eta)?;
    let frames = capture_shots(&scene, &shots, &rig, 1)?;
    let windows = frames.iter().map(|f| f.window(&rig, eta)).collect::<stereohdr::Result<Vec<_>>>()?;

    let disparity = DisparityMap::from_ground_truth(&scene.gt_disparity);
    let corrs = correspondences_from_disparity(&frames, &windows, &rig, &disparity, 4000, 1)?;
    let anchor = Anchor {
        index: 128,
        value: rig.primary.icrf.eval(128),
    };
    let est = estimate_joint_icrf(&corrs, 50.0, anchor)?;

    let secondary = rig.secondary.as_ref().expect("dual rig");
    let true_c = secondary.icrf.eval(128) - rig.primary.icrf.eval(128);
    println!("{} correspondences, residual {:.3}", corrs.len(), est.residual);
    println!("offset c: estimated {:.4}, true {true_c:.4}", est.offset_c);
    println!("{:>5} {:>9} {:>9}", "d", "e1 est", "e1 true");
    for d in (10..=240).step_by(23) {
        println!("{d:>5} {:>9.4} {:>9.4}", est.e1.eval(d), rig.primary.icrf.eval(d));
    }
    Ok(())
}
