use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use stereohdr::camera::{db_to_ratio, CameraModel};
use stereohdr::compare::{compare, rows_csv, CompareConfig, Scheme};
use stereohdr::disparity::tone_map;
use stereohdr::icrf::IcrfEstimate;
use stereohdr::io::{self, PlanFile, RunManifest};
use stereohdr::pipeline::{diagnostics_csv, run, GroundTruth, PipelineConfig};
use stereohdr::planner::{dense_stack_plan, CapturePlan, DEFAULT_ETA_DB};
use stereohdr::{capture_stack, make_scene, plan, CameraRig, Error, Interval, PlannerConfig, Result, SceneSpec};

/// Environment variable naming a directory with `primary.json` and `secondary.json`.
const CONFIG_DIR_VAR: &str = "DUALHDR_CONFIG_DIR";

#[derive(Parser, Debug)]
#[command(version, about = "Capture planning and reconstruction for dual-camera HDR and depth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    HdrOnly,
    Joint,
}

#[derive(clap::Args, Debug)]
struct CameraArgs {
    /// Camera model JSON; give it twice for primary then secondary.
    #[arg(long = "camera")]
    cameras: Vec<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct SceneArgs {
    /// Scene spec JSON; without it a layered desk scene is generated.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 320)]
    width: usize,
    #[arg(long, default_value_t = 240)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    scene_seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute a capture plan for a radiance histogram.
    Plan {
        /// Histogram CSV (bin_low,bin_high,prob) with optional JSON sidecar.
        #[arg(long)]
        hist: PathBuf,
        #[command(flatten)]
        cameras: CameraArgs,
        #[arg(long, value_enum, default_value = "joint")]
        mode: Mode,
        #[arg(long)]
        gamma_err: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_ETA_DB)]
        eta_db: f64,
        /// Plan for the primary camera alone.
        #[arg(long)]
        single_camera: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Render a scene and capture an LDR stack.
    Simulate {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long, required_unless_present = "dense_2stop")]
        plan: Option<PathBuf>,
        /// Capture the dense two-stop reference stack on both cameras instead of a plan.
        #[arg(long)]
        dense_2stop: bool,
        #[command(flatten)]
        cameras: CameraArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Recover HDR radiance, disparity and ICRFs from a stack.
    Reconstruct {
        #[arg(long)]
        stack: PathBuf,
        #[command(flatten)]
        cameras: CameraArgs,
        /// Initial ICRF estimate JSON; defaults to the camera files' ICRFs.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
        iters: u32,
        /// Scene spec for ground-truth diagnostics.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ETA_DB)]
        eta_db: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run every scheme through capture and reconstruction on one scene.
    Compare {
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        cameras: CameraArgs,
        #[arg(long, value_delimiter = ',', default_value = "exp-comp1,exp-comp2,exp-comp3,exp-intrl2,exp-intrl3,optimal,dense-gt")]
        schemes: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Infeasible(_) | Error::InfeasibleShot { .. } | Error::ShotBudgetExceeded { .. } => 2,
        Error::EmptyEstimate
        | Error::InsufficientData(_)
        | Error::RankDeficient
        | Error::NoCommonRange { .. }
        | Error::EmptyMask => 3,
        _ => 4,
    }
}

fn load_rig(args: &CameraArgs) -> Result<(CameraRig, Vec<PathBuf>)> {
    let mut files = args.cameras.clone();
    if files.is_empty() {
        if let Ok(dir) = std::env::var(CONFIG_DIR_VAR) {
            let dir = PathBuf::from(dir);
            files = ["primary.json", "secondary.json"]
                .iter()
                .map(|f| dir.join(f))
                .filter(|p| p.exists())
                .collect();
        }
    }
    let rig = match files.as_slice() {
        [] => CameraRig::synthetic(),
        [p] => CameraRig::single(io::read_json::<CameraModel>(p)?),
        [p, s] => CameraRig {
            primary: io::read_json(p)?,
            secondary: Some(io::read_json(s)?),
        },
        _ => return Err(Error::InvalidInput("at most two camera files".into())),
    };
    rig.validate()?;
    Ok((rig, files))
}

fn load_scene_spec(args: &SceneArgs) -> Result<SceneSpec> {
    match &args.scene {
        Some(p) => io::read_scene_spec(p),
        None => Ok(SceneSpec::desk(
            args.width,
            args.height,
            stereohdr::compare::benchmark_target(),
            args.scene_seed,
        )),
    }
}

fn args_vec() -> Vec<String> {
    std::env::args().skip(1).collect()
}

fn cmd_plan(
    hist: &Path,
    cameras: &CameraArgs,
    mode: Mode,
    gamma_err: Option<f64>,
    eta_db: f64,
    single_camera: bool,
    out: &Path,
) -> Result<()> {
    let (mut rig, camera_files) = load_rig(cameras)?;
    let h = io::read_histogram(hist)?;
    let preset = match mode {
        Mode::HdrOnly => PlannerConfig::hdr_only(),
        Mode::Joint => PlannerConfig::joint(),
    };
    let mut config = PlannerConfig::with(gamma_err.unwrap_or(preset.gamma_err), db_to_ratio(eta_db));
    config.refine = preset.refine;
    if single_camera {
        rig.secondary = None;
        config.gamma_err = gamma_err.unwrap_or(1.0);
    }
    let p = plan(&h, &rig, &config)?;
    let file = PlanFile::from_plan(&p, &config);
    io::write_json(out, &file)?;
    let mut manifest = RunManifest::new("plan", args_vec(), serde_json::to_value(&config)?, None);
    manifest.add_input(hist)?;
    for f in &camera_files {
        manifest.add_input(f)?;
    }
    manifest.add_outputs([&out.to_path_buf()])?;
    manifest.write(out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new(".")))?;
    println!(
        "{} shots, t_cap {:.6} s, predicted disparity error {:.4}, worst SNR {:.2} dB",
        p.shots.len(),
        p.t_cap,
        p.predicted_disp_err,
        p.worst_snr_db()
    );
    Ok(())
}

fn cmd_simulate(
    scene_args: &SceneArgs,
    plan_path: Option<&Path>,
    dense: bool,
    cameras: &CameraArgs,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let (rig, camera_files) = load_rig(cameras)?;
    let spec = load_scene_spec(scene_args)?;
    let t0 = Instant::now();
    let scene = make_scene(&spec)?;
    let hist = scene.histogram(200)?;
    let (capture, config) = match plan_path {
        Some(p) if !dense => {
            let file: PlanFile = io::read_json(p)?;
            let shots = file.shots(&rig)?;
            (CapturePlan::evaluate(shots, &hist, &rig), file.config)
        }
        _ => {
            let config = PlannerConfig::joint();
            (dense_stack_plan(&hist, &rig, 2, &config)?, config)
        }
    };
    let frames = capture_stack(&scene, &capture, &rig, seed)?;
    let render = t0.elapsed().as_secs_f64();

    let mut outputs = io::write_scene(&out.join("scene"), &scene)?;
    outputs.extend(io::write_stack(&out.join("stack"), &frames)?);
    let plan_out = out.join("plan.json");
    io::write_json(&plan_out, &PlanFile::from_plan(&capture, &config))?;
    outputs.push(plan_out);

    let mut manifest = RunManifest::new(
        "simulate",
        args_vec(),
        serde_json::json!({ "scene": spec, "dense_2stop": dense }),
        Some(seed),
    );
    if let Some(p) = plan_path {
        manifest.add_input(p)?;
    }
    for f in &camera_files {
        manifest.add_input(f)?;
    }
    manifest.add_outputs(&outputs)?;
    manifest.timings.insert("render_and_capture".into(), render);
    manifest.write(out)?;
    println!("{} frames, t_cap {:.6} s -> {}", frames.len(), capture.t_cap, out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_reconstruct(
    stack: &Path,
    cameras: &CameraArgs,
    init_path: Option<&Path>,
    iters: u32,
    scene_path: Option<&Path>,
    eta_db: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let (rig, camera_files) = load_rig(cameras)?;
    let frames = io::read_stack(stack)?;
    let init = match init_path {
        Some(p) => io::read_json::<IcrfEstimate>(p)?,
        None => IcrfEstimate::from_tables(
            &rig.primary.icrf,
            &rig.secondary.as_ref().map_or(&rig.primary, |s| s).icrf,
        ),
    };
    let gt = match scene_path {
        Some(p) => {
            let scene = make_scene(&io::read_scene_spec(p)?)?;
            Some((
                GroundTruth {
                    disparity: scene.gt_disparity.clone(),
                    mask: scene.co_visible(),
                },
                scene,
            ))
        }
        None => None,
    };
    let config = PipelineConfig {
        iterations: iters as usize,
        eta: db_to_ratio(eta_db),
        seed,
        ..PipelineConfig::default()
    };
    let t0 = Instant::now();
    let rec = run(&frames, &rig, &init, &config, gt.as_ref().map(|g| &g.0))?;
    let elapsed = t0.elapsed().as_secs_f64();

    std::fs::create_dir_all(out)?;
    let valid = rec.radiance.valid();
    let (lo, hi) = rec
        .radiance
        .values
        .as_slice()
        .iter()
        .zip(valid.as_slice())
        .filter(|(_, &ok)| ok)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (&v, _)| (a.min(v), b.max(v)));
    let paths: Vec<PathBuf> = [
        "hdr.pfm",
        "hdr_preview.png",
        "source.pgm",
        "disparity.pfm",
        "disparity.png",
        "icrf.json",
        "diagnostics.csv",
    ]
    .iter()
    .map(|f| out.join(f))
    .collect();
    io::write_pfm(&paths[0], &rec.radiance.values.map(|v| v.exp()))?;
    io::write_png(&paths[1], &tone_map(&rec.radiance.values, Interval::new(lo, hi.max(lo))))?;
    io::write_pgm(&paths[2], &io::encode_sources(&rec.radiance.source))?;
    io::write_pfm(&paths[3], &rec.disparity.values)?;
    let dmax = config.disparity.max_disparity as f64;
    io::write_png(
        &paths[4],
        &tone_map(
            &stereohdr::Grid::from_fn(rec.disparity.values.width(), rec.disparity.values.height(), |x, y| {
                if *rec.disparity.valid.get(x, y) {
                    rec.disparity.values.at(x, y)
                } else {
                    0.0
                }
            }),
            Interval::new(0.0, dmax),
        ),
    )?;
    io::write_json(&paths[5], &rec.icrf)?;
    std::fs::write(&paths[6], diagnostics_csv(&rec.diagnostics))?;

    let mut manifest = RunManifest::new("reconstruct", args_vec(), serde_json::to_value(&config)?, Some(seed));
    manifest.add_input(&stack.join(io::STACK_INDEX))?;
    for f in camera_files.iter().chain(init_path.map(Path::to_path_buf).iter()) {
        manifest.add_input(f)?;
    }
    if let Some(p) = scene_path {
        manifest.add_input(p)?;
    }
    manifest.add_outputs(&paths)?;
    manifest.timings.insert("pipeline".into(), elapsed);
    manifest.write(out)?;

    if let (Some((_, scene)), Some(last)) = (&gt, rec.diagnostics.last()) {
        let filled =
            stereohdr::pipeline::fill_unmeasured(&frames, &rig, &rec.icrf, &rec.radiance, config.eta)?;
        let all = stereohdr::Grid::filled(scene.width(), scene.height(), true);
        let rmse = stereohdr::compare::log_radiance_rmse(&filled, &scene.log_radiance, &all)?;
        println!(
            "log-radiance RMSE {rmse:.4}, disparity error {:.4}, cross-camera error {:.4}",
            last.disparity_error.unwrap_or(f64::NAN),
            last.cross_camera_radiance_error
        );
    }
    println!("c = {:.4}; outputs in {}", rec.icrf.offset_c, out.display());
    Ok(())
}

fn cmd_compare(scene_args: &SceneArgs, cameras: &CameraArgs, schemes: &[String], seed: u64, out: &Path) -> Result<()> {
    let (rig, camera_files) = load_rig(cameras)?;
    let parsed: Vec<Scheme> = schemes
        .iter()
        .map(|s| Scheme::parse(s.trim()).ok_or_else(|| Error::InvalidInput(format!("unknown scheme {s:?}"))))
        .collect::<Result<_>>()?;
    let spec = load_scene_spec(scene_args)?;
    let scene = make_scene(&spec)?;
    let config = CompareConfig {
        seed,
        pipeline: PipelineConfig {
            seed,
            ..PipelineConfig::default()
        },
        ..CompareConfig::default()
    };
    let t0 = Instant::now();
    let rows = compare(&scene, &rig, &parsed, &config);
    let csv = rows_csv(&rows);
    std::fs::write(out, &csv)?;
    let mut manifest = RunManifest::new(
        "compare",
        args_vec(),
        serde_json::json!({ "scene": spec, "compare": config, "fidelity_metric": "log-radiance RMSE against simulator ground truth" }),
        Some(seed),
    );
    for f in &camera_files {
        manifest.add_input(f)?;
    }
    manifest.add_outputs([&out.to_path_buf()])?;
    manifest.timings.insert("compare".into(), t0.elapsed().as_secs_f64());
    manifest.write(out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new(".")))?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Plan {
            hist,
            cameras,
            mode,
            gamma_err,
            eta_db,
            single_camera,
            out,
        } => cmd_plan(hist, cameras, *mode, *gamma_err, *eta_db, *single_camera, out),
        Command::Simulate {
            scene,
            plan,
            dense_2stop,
            cameras,
            seed,
            out,
        } => cmd_simulate(scene, plan.as_deref(), *dense_2stop, cameras, *seed, out),
        Command::Reconstruct {
            stack,
            cameras,
            init,
            iters,
            scene,
            eta_db,
            seed,
            out,
        } => cmd_reconstruct(stack, cameras, init.as_deref(), *iters, scene.as_deref(), *eta_db, *seed, out),
        Command::Compare {
            scene,
            cameras,
            schemes,
            seed,
            out,
        } => cmd_compare(scene, cameras, schemes, *seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
