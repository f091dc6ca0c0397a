//! Round trips through the on-disk formats: histogram CSV, plan JSON, PFM and PGM.

use stereohdr::compare::benchmark_target;
use stereohdr::io::{self, PlanFile};
use stereohdr::{plan, CameraRig, Grid, PlannerConfig};

fn main() -> stereohdr::Result<()> {
    let dir = std::env::temp_dir().join("stereohdr_file_io");
    std::fs::create_dir_all(&dir)?;
    let rig = CameraRig::synthetic();

    let hist_path = dir.join("hist.csv");
    io::write_histogram(&hist_path, &benchmark_target())?;
    let hist = io::read_histogram(&hist_path)?;
    println!("histogram: {} bins, roi {:?}", hist.bins(), hist.range_of_interest());

    let config = PlannerConfig::joint();
    let p = plan(&hist, &rig, &config)?;
    let plan_path = dir.join("plan.json");
    io::write_json(&plan_path, &PlanFile::from_plan(&p, &config))?;
    let back: PlanFile = io::read_json(&plan_path)?;
    println!("plan: {} shots, sha256 {}", back.shots(&rig)?.len(), io::sha256_file(&plan_path)?);

    let ramp = Grid::from_fn(64, 16, |x, y| (x as f64 * 0.1).exp() + y as f64);
    io::write_pfm(&dir.join("ramp.pfm"), &ramp)?;
    let again = io::read_pfm(&dir.join("ramp.pfm"))?;
    let worst = ramp
        .as_slice()
        .iter()
        .zip(again.as_slice())
        .map(|(a, b)| ((a - b) / a).abs())
        .fold(0.0, f64::max);
    println!("pfm: max relative error {worst:.2e} (stored as f32)");

    let gray = Grid::from_fn(64, 16, |x, _| (x * 4) as u8);
    io::write_pgm(&dir.join("ramp.pgm"), &gray)?;
    assert_eq!(io::read_pgm(&dir.join("ramp.pgm"))?, gray);
    println!("pgm: exact; files in {}", dir.display());
    Ok(())
}
