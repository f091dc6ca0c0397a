//! Scheme comparison: plan, capture and reconstruct one scene per capture scheme.

use serde::{Deserialize, Serialize};

use crate::camera::{CameraId, CameraRig};
use crate::disparity::disparity_error;
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::icrf::IcrfEstimate;
use crate::pipeline::{fill_unmeasured, run, GroundTruth, PipelineConfig, Reconstruction};
use crate::planner::{baseline_plan, dense_stack_plan, plan, BaselineScheme, CapturePlan, PlannerConfig, Shot};
use crate::radiance::LogRadianceHistogram;
use crate::sim::{capture_stack, make_scene, SceneSpec, SyntheticScene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Optimal,
    Baseline(BaselineScheme),
    /// Dense two-stop stack on both cameras, the reference reconstruction.
    DenseGt,
}

impl Scheme {
    pub fn name(&self) -> String {
        match self {
            Scheme::Optimal => "optimal".into(),
            Scheme::Baseline(b) => b.name(),
            Scheme::DenseGt => "dense-gt".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "optimal" => Some(Scheme::Optimal),
            "dense-gt" => Some(Scheme::DenseGt),
            other => BaselineScheme::parse(other).map(Scheme::Baseline),
        }
    }

    /// `exp-comp1..3`, `exp-intrl2..3`, `optimal`, `dense-gt`.
    pub fn all() -> Vec<Scheme> {
        let mut v: Vec<Scheme> = (1..=3).map(|c| Scheme::Baseline(BaselineScheme::ExpComp(c))).collect();
        v.extend((2..=3).map(|c| Scheme::Baseline(BaselineScheme::ExpIntrl(c))));
        v.push(Scheme::Optimal);
        v.push(Scheme::DenseGt);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub planner: PlannerConfig,
    pub pipeline: PipelineConfig,
    pub baseline_shots_per_camera: usize,
    /// Stops between consecutive frames of the dense stack.
    pub dense_compensation: u8,
    pub histogram_bins: usize,
    pub seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            planner: PlannerConfig::joint(),
            pipeline: PipelineConfig::default(),
            baseline_shots_per_camera: 2,
            dense_compensation: 2,
            histogram_bins: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub scheme: String,
    pub t_cap: f64,
    pub shots: usize,
    pub predicted_disparity_error: f64,
    /// Measured 4px (by default) bad-pixel fraction on the co-visible mask.
    pub disparity_error: Option<f64>,
    /// Log-radiance RMSE over the whole primary view.
    pub hdr_rmse: Option<f64>,
    pub error: Option<String>,
}

impl CompareRow {
    /// Whether the measured disparity error meets `gamma`.
    pub fn meets(&self, gamma: f64) -> bool {
        self.disparity_error.is_some_and(|e| e <= gamma)
    }
}

/// Root mean square difference over `mask`.
pub fn log_radiance_rmse(estimate: &Grid<f64>, truth: &Grid<f64>, mask: &Mask) -> Result<f64> {
    if !estimate.same_shape(truth) || !truth.same_shape(mask) {
        return Err(Error::invalid("radiance grids differ in size"));
    }
    let (mut se, mut n) = (0.0, 0usize);
    for i in 0..mask.len() {
        if mask.as_slice()[i] {
            se += (estimate.as_slice()[i] - truth.as_slice()[i]).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((se / n as f64).sqrt())
}

/// PSNR in dB of a log-radiance estimate, with the truth's range as peak.
pub fn log_radiance_psnr(rmse: f64, truth: &Grid<f64>) -> f64 {
    let (lo, hi) = truth
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    20.0 * ((hi - lo) / rmse).log10()
}

/// Builds the capture plan of one scheme for a scene.
pub fn scheme_plan(scene: &SyntheticScene, rig: &CameraRig, scheme: Scheme, config: &CompareConfig) -> Result<CapturePlan> {
    let hist = scene.histogram(config.histogram_bins)?;
    match scheme {
        Scheme::Optimal => plan(&hist, rig, &config.planner),
        Scheme::Baseline(b) => baseline_plan(&hist, rig, b, config.baseline_shots_per_camera, &config.planner),
        Scheme::DenseGt => dense_stack_plan(&hist, rig, config.dense_compensation, &config.planner),
    }
}

/// Captures and reconstructs a scene under a plan, seeded by the config.
pub fn reconstruct_plan(
    scene: &SyntheticScene,
    rig: &CameraRig,
    plan: &CapturePlan,
    config: &CompareConfig,
) -> Result<Reconstruction> {
    let secondary = rig
        .secondary
        .as_ref()
        .ok_or_else(|| Error::invalid("comparison needs a dual-camera rig"))?;
    let frames = capture_stack(scene, plan, rig, config.seed)?;
    let init = IcrfEstimate::from_tables(&rig.primary.icrf, &secondary.icrf);
    let gt = GroundTruth {
        disparity: scene.gt_disparity.clone(),
        mask: scene.co_visible(),
    };
    let mut rec = run(&frames, rig, &init, &config.pipeline, Some(&gt))?;
    rec.radiance.values = fill_unmeasured(&frames, rig, &rec.icrf, &rec.radiance, config.pipeline.eta)?;
    Ok(rec)
}

/// One row per scheme on identical seeds; failures are recorded in the row.
pub fn compare(scene: &SyntheticScene, rig: &CameraRig, schemes: &[Scheme], config: &CompareConfig) -> Vec<CompareRow> {
    let everywhere = Grid::filled(scene.width(), scene.height(), true);
    let covis = scene.co_visible();
    schemes
        .iter()
        .map(|&scheme| {
            let mut row = CompareRow {
                scheme: scheme.name(),
                t_cap: f64::NAN,
                shots: 0,
                predicted_disparity_error: f64::NAN,
                disparity_error: None,
                hdr_rmse: None,
                error: None,
            };
            let p = match scheme_plan(scene, rig, scheme, config) {
                Ok(p) => p,
                Err(e) => {
                    row.error = Some(e.to_string());
                    return row;
                }
            };
            row.t_cap = p.t_cap;
            row.shots = p.shots.len();
            row.predicted_disparity_error = p.predicted_disp_err;
            let measured = reconstruct_plan(scene, rig, &p, config).and_then(|rec| {
                let bad = disparity_error(&rec.disparity, &scene.gt_disparity, config.pipeline.error_threshold_px, &covis)?;
                let rmse = log_radiance_rmse(&rec.radiance.values, &scene.log_radiance, &everywhere)?;
                Ok((bad, rmse))
            });
            match measured {
                Ok((bad, rmse)) => {
                    row.disparity_error = Some(bad);
                    row.hdr_rmse = Some(rmse);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect()
}

/// CSV with header `scheme,t_cap,shots,predicted_disparity_error,disparity_error,hdr_rmse,error`.
pub fn rows_csv(rows: &[CompareRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = String::from("scheme,t_cap,shots,predicted_disparity_error,disparity_error,hdr_rmse,error\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{},{:.6},{},{},{}\n",
            r.scheme,
            r.t_cap,
            r.shots,
            r.predicted_disparity_error,
            opt(r.disparity_error),
            opt(r.hdr_rmse),
            r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
        ));
    }
    out
}

/// Bimodal indoor-like radiance distribution over 3 to 11 log units.
pub fn benchmark_target() -> LogRadianceHistogram {
    LogRadianceHistogram::gaussian_mixture(&[(0.6, 5.5, 0.8), (0.4, 8.8, 0.9)], 3.0, 11.0, 160)
        .expect("fixed mixture is valid")
}

/// Layered desk scene over the benchmark distribution.
pub fn benchmark_scene(width: usize, height: usize, seed: u64) -> Result<SyntheticScene> {
    make_scene(&SceneSpec::desk(width, height, benchmark_target(), seed))
}

/// One-stop ladder of `n` shots from `t0` downwards on every camera of the rig.
pub fn ladder_shots(rig: &CameraRig, t0: f64, n: usize, iso: f64, eta: f64) -> Result<Vec<Shot>> {
    let mut shots = Vec::new();
    for cam in [CameraId::Primary, CameraId::Secondary] {
        if rig.camera(cam).is_none() {
            continue;
        }
        for k in 0..n {
            shots.push(Shot::new(rig, cam, t0 / 2f64.powi(k as i32), iso, eta)?);
        }
    }
    Ok(shots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_roundtrip() {
        let all = Scheme::all();
        assert_eq!(all.len(), 7);
        for s in all {
            assert_eq!(Scheme::parse(&s.name()), Some(s));
        }
        assert_eq!(Scheme::parse("exp-comp9"), None);
        assert_eq!(Scheme::parse("fastest"), None);
    }

    #[test]
    fn rmse_and_psnr() {
        let truth = Grid::from_fn(4, 4, |x, _| x as f64);
        let est = truth.map(|v| v + 0.5);
        let all = Grid::filled(4, 4, true);
        assert!((log_radiance_rmse(&est, &truth, &all).unwrap() - 0.5).abs() < 1e-12);
        assert!((log_radiance_psnr(0.3, &truth) - 20.0 * 10f64.log10()).abs() < 1e-9);
        assert!(matches!(
            log_radiance_rmse(&est, &truth, &Grid::filled(4, 4, false)),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn failures_stay_in_their_row() {
        let single = CameraRig::single(crate::camera::CameraModel::synthetic());
        let scene = benchmark_scene(64, 48, 0).unwrap();
        let rows = compare(&scene, &single, &[Scheme::Baseline(BaselineScheme::ExpComp(2)), Scheme::Optimal], &CompareConfig::default());
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.error.is_some()));
        let csv = rows_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().all(|l| l.split(',').count() == 7));
    }

    #[test]
    fn ladder_descends_one_stop() {
        let rig = CameraRig::synthetic();
        let shots = ladder_shots(&rig, 0.8, 3, 100.0, 2.0).unwrap();
        assert_eq!(shots.len(), 6);
        assert!((shots[1].t - 0.4).abs() < 1e-15);
        assert_eq!(shots[3].camera, CameraId::Secondary);
    }
}
