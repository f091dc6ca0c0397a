//! Plans a capture for an indoor-like radiance distribution in both regimes.
//!
//! ```bash
//! cargo run --release --example plan_capture
//! ```

use stereohdr::compare::benchmark_target;
use stereohdr::{plan, CameraRig, PlannerConfig};

fn main() -> stereohdr::Result<()> {
    let rig = CameraRig::synthetic();
    let hist = benchmark_target();
    let roi = hist.range_of_interest();
    println!("range of interest [{:.2}, {:.2}] log units", roi.low, roi.high);

    for (name, config) in [("hdr-only", PlannerConfig::hdr_only()), ("joint", PlannerConfig::joint())] {
        let p = plan(&hist, &rig, &config)?;
        println!(
            "\n{name}: {} shots, t_cap {:.4} s, predicted disparity error {:.3}, worst SNR {:.2} dB",
            p.shots.len(),
            p.t_cap,
            p.predicted_disp_err,
            p.worst_snr_db()
        );
        for s in &p.shots {
            println!(
                "  {:?} t = {:.5} s  ISO {:>3}  covers [{:.2}, {:.2}]",
                s.camera, s.t, s.iso, s.interval.low, s.interval.high
            );
        }
    }
    Ok(())
}
