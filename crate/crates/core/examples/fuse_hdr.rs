//! Warps secondary shots into the primary view and fuses primary-first.
//!
//! ```bash
//! cargo run --release --example fuse_hdr -- /tmp/fused
//! ```

use std::path::PathBuf;

use stereohdr::compare::{benchmark_scene, log_radiance_psnr, log_radiance_rmse};
use stereohdr::disparity::{tone_map, DisparityMap};
use stereohdr::fusion::{fuse, to_radiance, warp_to_primary, Source, DEFAULT_FUSION_SIGMA};
use stereohdr::{capture_stack, io, plan, CameraId, CameraRig, PlannerConfig};

fn main() -> stereohdr::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("fused"));
    std::fs::create_dir_all(&out)?;
    let rig = CameraRig::synthetic();
    let scene = benchmark_scene(320, 240, 2)?;
    let config = PlannerConfig::joint();
    let p = plan(&scene.histogram(200)?, &rig, &config)?;
    let frames = capture_stack(&scene, &p, &rig, 2)?;
    let disparity = DisparityMap::from_ground_truth(&scene.gt_disparity);

    let (mut primary, mut secondary) = (Vec::new(), Vec::new());
    for f in &frames {
        let cam = rig.camera(f.shot.camera).expect("dual rig");
        let g = cam.gain(f.shot.iso);
        let q = to_radiance(f, &cam.icrf, g, cam.pixel_window(g, config.eta));
        match f.shot.camera {
            CameraId::Primary => primary.push(q),
            CameraId::Secondary => secondary.push(warp_to_primary(&q, &disparity)),
        }
    }

    let fused = fuse(&primary, &secondary, DEFAULT_FUSION_SIGMA)?;
    let primary_only = fuse(&primary, &[], DEFAULT_FUSION_SIGMA)?;
    for (name, map) in [("primary only", &primary_only), ("both cameras", &fused)] {
        let valid = map.valid();
        let rmse = log_radiance_rmse(&map.values, &scene.log_radiance, &valid)?;
        let coverage = valid.as_slice().iter().filter(|&&v| v).count() as f64 / valid.len() as f64;
        println!(
            "{name:>13}: {:.1}% of pixels, RMSE {rmse:.3} log units, PSNR {:.1} dB",
            100.0 * coverage,
            log_radiance_psnr(rmse, &scene.log_radiance)
        );
    }
    let from_secondary = fused.source.as_slice().iter().filter(|s| matches!(s, Source::Secondary(_))).count();
    println!("{from_secondary} pixels filled from the secondary camera");

    let truth = &scene.log_radiance;
    let (lo, hi) = truth.as_slice().iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    io::write_pfm(&out.join("hdr.pfm"), &fused.values.map(|v| v.exp()))?;
    io::write_png(&out.join("hdr.png"), &tone_map(&fused.values, stereohdr::Interval::new(lo, hi)))?;
    io::write_pgm(&out.join("source.pgm"), &io::encode_sources(&fused.source))?;
    println!("wrote {}", out.display());
    Ok(())
}
