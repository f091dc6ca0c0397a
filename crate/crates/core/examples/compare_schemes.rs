//! Optimal plan against fixed-compensation baselines and the dense reference stack.
//!
//! ```bash
//! cargo run --release --example compare_schemes -- 3
//! ```

use stereohdr::compare::{benchmark_scene, compare, rows_csv, CompareConfig, Scheme};
use stereohdr::CameraRig;

fn main() -> stereohdr::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let rig = CameraRig::synthetic();
    let scene = benchmark_scene(320, 240, seed)?;
    let mut config = CompareConfig {
        seed,
        ..CompareConfig::default()
    };
    config.pipeline.seed = seed;
    let rows = compare(&scene, &rig, &Scheme::all(), &config);
    print!("{}", rows_csv(&rows));

    let dense = rows.iter().find(|r| r.scheme == "dense-gt").and_then(|r| r.hdr_rmse);
    for r in &rows {
        let rel = r.hdr_rmse.zip(dense).map(|(a, b)| a / b).unwrap_or(f64::NAN);
        println!("{:>10}: t_cap {:.3} s, RMSE {rel:.2}x dense", r.scheme, r.t_cap);
    }
    Ok(())
}
