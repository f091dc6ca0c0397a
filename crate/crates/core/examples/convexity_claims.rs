//! Fixtures for the convexity structure of the constraints: coverage stays feasible
//! along segments, the disparity constraint does not.

use stereohdr::planner::{coverage_probe, disparity_counterexample, uniform_probe};

fn main() -> stereohdr::Result<()> {
    let mut covered = 0;
    for seed in 0..1000 {
        let probe = coverage_probe(seed);
        if (0..=10).all(|k| probe.covers(&probe.combination(k as f64 / 10.0))) {
            covered += 1;
        }
    }
    println!("coverage: {covered}/1000 segments feasible at every sampled point");

    let f = disparity_counterexample(0.1);
    println!(
        "disparity counterexample: endpoints {:.3} and {:.3}, midpoint {:.3} (limit {})",
        f.disparity_error(&f.a)?,
        f.disparity_error(&f.b)?,
        f.disparity_error(&f.midpoint())?,
        f.gamma_err
    );

    let u = uniform_probe(4, 0.6, 20.0);
    println!("uniform case: feasible iff ln(t4/t1) >= {:.3}", u.epsilon().ln());
    for overlaps in [[0.5, 1.5, 1.0], [1.5, 0.5, 1.0], [3.0, 2.5, 3.0], [2.5, 3.0, 3.0]] {
        let ts = u.ladder(&overlaps);
        println!(
            "  overlaps {overlaps:?}: ln(t4/t1) = {:.3}, overlap mass {:.4}, feasible {}",
            (ts[3] / ts[0]).ln(),
            u.pairwise_mass(&ts),
            u.satisfies(&ts)
        );
    }
    Ok(())
}
