use std::path::Path;
use std::process::{Command, Output};

use stereohdr::io::{self, PlanFile, RunManifest};
use stereohdr::{CameraId, CameraRig, Grid, LdrImage, LogRadianceHistogram, Shot};

fn dualhdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualhdr"))
        .args(args)
        .env_remove("DUALHDR_CONFIG_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_hist(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("hist.csv");
    let hist = LogRadianceHistogram::gaussian_mixture(&[(0.6, 5.5, 0.8), (0.4, 8.8, 0.9)], 3.0, 11.0, 80).unwrap();
    io::write_histogram(&path, &hist).unwrap();
    path
}

#[test]
fn plan_writes_a_feasible_plan_file() {
    let dir = tempfile::tempdir().unwrap();
    let hist = write_hist(dir.path());
    let out = dir.path().join("plan.json");
    let res = dualhdr(&["plan", "--hist", s(&hist), "--mode", "joint", "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let file: PlanFile = io::read_json(&out).unwrap();
    assert!(file.metrics.predicted_disp_err <= 0.05 + 1e-9);
    assert!(file.metrics.worst_snr_db >= 3.2 - 1e-9);
    let shots = file.shots(&CameraRig::synthetic()).unwrap();
    assert!(shots.iter().any(|s| s.camera == CameraId::Secondary));
    let manifest: RunManifest = io::read_json(&dir.path().join(io::MANIFEST)).unwrap();
    assert_eq!(manifest.command, "plan");
    assert_eq!(manifest.inputs[0].sha256, io::sha256_file(&hist).unwrap());
}

#[test]
fn single_camera_plan_has_only_primary_shots() {
    let dir = tempfile::tempdir().unwrap();
    let hist = write_hist(dir.path());
    let out = dir.path().join("plan.json");
    let res = dualhdr(&["plan", "--hist", s(&hist), "--mode", "hdr-only", "--single-camera", "--out", s(&out)]);
    assert_eq!(code(&res), 0);
    let file: PlanFile = io::read_json(&out).unwrap();
    assert!(file.shots.iter().all(|s| s.camera == CameraId::Primary));
}

#[test]
fn unreachable_snr_floor_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let hist = write_hist(dir.path());
    let res = dualhdr(&["plan", "--hist", s(&hist), "--eta-db", "40", "--out", s(&dir.path().join("p.json"))]);
    assert_eq!(code(&res), 2);
}

#[test]
fn bad_input_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&dualhdr(&["plan", "--hist", s(&missing), "--out", "x.json"])), 4);
    assert_eq!(code(&dualhdr(&["frobnicate"])), 4);
    assert_eq!(code(&dualhdr(&["reconstruct", "--stack", ".", "--iters", "0", "--out", "o"])), 4);
    assert_eq!(code(&dualhdr(&["compare", "--schemes", "fastest", "--out", "c.csv"])), 4);
    assert_eq!(code(&dualhdr(&["--help"])), 0);
}

#[test]
fn unsupported_iso_in_plan_names_the_shot() {
    let dir = tempfile::tempdir().unwrap();
    let hist = write_hist(dir.path());
    let plan_path = dir.path().join("plan.json");
    assert_eq!(code(&dualhdr(&["plan", "--hist", s(&hist), "--out", s(&plan_path)])), 0);
    let mut file: PlanFile = io::read_json(&plan_path).unwrap();
    file.shots[1].iso = 333.0;
    io::write_json(&plan_path, &file).unwrap();
    let res = dualhdr(&["simulate", "--plan", s(&plan_path), "--width", "32", "--height", "24", "--out", s(&dir.path().join("sim"))]);
    assert_eq!(code(&res), 4);
    assert!(String::from_utf8_lossy(&res.stderr).contains("shot 1"));
}

#[test]
fn featureless_stack_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let rig = CameraRig::synthetic();
    let frames: Vec<LdrImage> = [CameraId::Primary, CameraId::Secondary]
        .into_iter()
        .map(|cam| LdrImage {
            pixels: Grid::filled(40, 30, 255u8),
            shot: Shot::new(&rig, cam, 0.01, 100.0, 2.0).unwrap(),
        })
        .collect();
    let stack = dir.path().join("stack");
    io::write_stack(&stack, &frames).unwrap();
    let res = dualhdr(&["reconstruct", "--stack", s(&stack), "--out", s(&dir.path().join("rec"))]);
    assert_eq!(code(&res), 3, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn simulate_then_reconstruct_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let rec = dir.path().join("rec");
    let res = dualhdr(&["simulate", "--dense-2stop", "--width", "96", "--height", "72", "--seed", "3", "--out", s(&sim)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let scene = sim.join("scene").join(io::SCENE_SPEC);
    let res = dualhdr(&[
        "reconstruct",
        "--stack",
        s(&sim.join("stack")),
        "--scene",
        s(&scene),
        "--iters",
        "1",
        "--out",
        s(&rec),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["hdr.pfm", "hdr_preview.png", "disparity.pfm", "disparity.png", "source.pgm", "icrf.json", "diagnostics.csv"] {
        assert!(rec.join(f).exists(), "{f}");
    }
    let hdr = io::read_pfm(&rec.join("hdr.pfm")).unwrap();
    assert_eq!((hdr.width(), hdr.height()), (96, 72));
    let csv = std::fs::read_to_string(rec.join("diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let manifest: RunManifest = io::read_json(&rec.join(io::MANIFEST)).unwrap();
    assert_eq!(manifest.seed, Some(0));
    assert_eq!(manifest.outputs.len(), 7);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let res = dualhdr(&["simulate", "--dense-2stop", "--width", "48", "--height", "32", "--seed", seed, "--out", s(&out)]);
        assert_eq!(code(&res), 0);
        let frames = io::read_stack(&out.join("stack")).unwrap();
        frames.into_iter().map(|f| f.pixels).collect::<Vec<_>>()
    };
    assert_eq!(run("a", "7"), run("b", "7"));
    assert_ne!(run("a", "7"), run("c", "8"));
}

#[test]
fn compare_writes_one_row_per_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp.csv");
    let res = dualhdr(&["compare", "--width", "96", "--height", "72", "--schemes", "optimal,exp-comp2", "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("optimal,"));
    assert!(rows[2].starts_with("exp-comp2,"));
}

#[test]
fn camera_files_override_the_synthetic_rig() {
    let dir = tempfile::tempdir().unwrap();
    let hist = write_hist(dir.path());
    let rig = CameraRig::synthetic();
    let (p, q) = (dir.path().join("primary.json"), dir.path().join("secondary.json"));
    let mut slow = rig.primary.clone();
    slow.exposure_range = [1e-4, 0.001];
    io::write_json(&p, &slow).unwrap();
    io::write_json(&q, rig.secondary.as_ref().unwrap()).unwrap();
    let out = dir.path().join("plan.json");
    let res = dualhdr(&["plan", "--hist", s(&hist), "--camera", s(&p), "--camera", s(&q), "--out", s(&out)]);
    assert_eq!(code(&res), 2, "{}", String::from_utf8_lossy(&res.stderr));
    let res = Command::new(env!("CARGO_BIN_EXE_dualhdr"))
        .args(["plan", "--hist", s(&hist), "--out", s(&out)])
        .env("DUALHDR_CONFIG_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&res), 2);
}
