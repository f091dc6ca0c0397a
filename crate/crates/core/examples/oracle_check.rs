//! Planner against exhaustive search over power-of-two exposures and the ISO set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereohdr::planner::{brute_force_plan, PlanGrid};
use stereohdr::{plan, CameraRig, LogRadianceHistogram, PlannerConfig};

fn main() -> stereohdr::Result<()> {
    let rig = CameraRig::synthetic();
    let config = PlannerConfig {
        max_shots_per_camera: 2,
        ..PlannerConfig::joint()
    };
    let grid = PlanGrid::power_of_two(rig.primary.t_max(), 12, rig.primary.iso_set.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..8 {
        let lo = rng.random_range(3.0..6.0);
        let hi = lo + rng.random_range(3.0..7.0);
        let mid = rng.random_range(lo..hi);
        let hist = LogRadianceHistogram::gaussian_mixture(&[(1.0, mid, 1.0)], lo, hi, 200)?;
        let ours = plan(&hist, &rig, &config)?;
        match brute_force_plan(&hist, &rig, &config, &grid) {
            Ok(best) => println!(
                "[{lo:.2}, {hi:.2}]: planner {:.4} s, grid optimum {:.4} s, ratio {:.3}",
                ours.t_cap,
                best.t_cap,
                ours.t_cap / best.t_cap
            ),
            Err(e) => println!("[{lo:.2}, {hi:.2}]: planner {:.4} s, grid: {e}", ours.t_cap),
        }
    }
    Ok(())
}
