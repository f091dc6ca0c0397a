//! Capture-time-optimal exposure/ISO planning for a stereo rig.
//!
//! A plan minimizes `t_cap = max(sum of primary exposures, sum of secondary
//! exposures)` subject to
//!
//! * coverage: the union of all shot intervals contains the range of interest,
//! * disparity error: histogram mass outside `(U primary) ∩ (U secondary)` is at
//!   most `gamma_err`,
//! * SNR: every shot's worst-case SNR is at least `eta`.
//!
//! The SNR constraint is built into each shot's interval, whose lower end is the
//! radiance at which SNR reaches `eta`.

mod baselines;
mod convexity;
mod init;
mod oracle;
mod refine;

use serde::{Deserialize, Serialize};

use crate::camera::{db_to_ratio, ratio_to_db, CameraId, CameraModel, CameraRig};
use crate::error::{Error, Result};
use crate::radiance::{Interval, IntervalSet, LogRadianceHistogram};

pub use baselines::{baseline_plan, dense_stack_plan, BaselineScheme};
pub use convexity::{
    coverage_probe, disparity_counterexample, uniform_probe, CoverageProbe, DisparityCounterexample, UniformProbe,
};
pub use init::{init_exposures, init_isos};
pub use oracle::{brute_force_plan, PlanGrid, DEFAULT_COMBINATION_CAP};
pub use refine::refine;

/// One capture: a camera, exposure time and ISO, with its cached log-radiance interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub camera: CameraId,
    pub t: f64,
    pub iso: f64,
    pub interval: Interval,
}

impl Shot {
    pub fn new(rig: &CameraRig, camera: CameraId, t: f64, iso: f64, eta: f64) -> Result<Self> {
        let cam = camera_of(rig, camera)?;
        let interval = cam.log_radiance_interval(t, cam.gain(iso), eta)?;
        Ok(Self {
            camera,
            t,
            iso,
            interval,
        })
    }

    pub fn gain(&self, rig: &CameraRig) -> f64 {
        camera_of(rig, self.camera).map(|c| c.gain(self.iso)).unwrap_or(f64::NAN)
    }
}

pub(crate) fn camera_of(rig: &CameraRig, id: CameraId) -> Result<&CameraModel> {
    rig.camera(id)
        .ok_or_else(|| Error::invalid("shot references the secondary camera of a single-camera rig"))
}

/// Settings for the damped least-squares refinement stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub max_iterations: usize,
    /// Initial Levenberg-Marquardt damping.
    pub damping: f64,
    /// Weight of the coverage-gap hinge (per log unit of gap).
    pub gap_weight: f64,
    /// Weight of the disparity-error hinge (per unit of excess mass).
    pub disparity_weight: f64,
    /// Starting log-sum-exp temperature, relative to the initial capture time.
    pub temperature: f64,
    /// Penalty/temperature annealing rounds.
    pub anneal_rounds: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 60,
            damping: 1e-2,
            gap_weight: 10.0,
            disparity_weight: 10.0,
            temperature: 0.05,
            anneal_rounds: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Maximum allowed fraction of mass outside the dual-covered set.
    pub gamma_err: f64,
    /// Minimum per-shot SNR (power ratio).
    pub eta: f64,
    /// Overrides the histogram's own range of interest.
    pub range_of_interest: Option<Interval>,
    pub max_shots_per_camera: usize,
    pub refine: RefineConfig,
}

/// SNR floor used throughout, 3.2 dB.
pub const DEFAULT_ETA_DB: f64 = 3.2;

impl Default for PlannerConfig {
    fn default() -> Self {
        Self::joint()
    }
}

impl PlannerConfig {
    /// Joint HDR + disparity regime: `gamma_err = 5%`, `eta = 3.2 dB`.
    pub fn joint() -> Self {
        Self::with(0.05, db_to_ratio(DEFAULT_ETA_DB))
    }

    /// HDR-only regime: `gamma_err = 30%`, `eta = 3.2 dB`.
    pub fn hdr_only() -> Self {
        Self::with(0.30, db_to_ratio(DEFAULT_ETA_DB))
    }

    pub fn with(gamma_err: f64, eta: f64) -> Self {
        Self {
            gamma_err,
            eta,
            range_of_interest: None,
            max_shots_per_camera: 6,
            refine: RefineConfig::default(),
        }
    }

    pub fn with_range(mut self, roi: Interval) -> Self {
        self.range_of_interest = Some(roi);
        self
    }

    pub fn eta_db(&self) -> f64 {
        ratio_to_db(self.eta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma_err) {
            return Err(Error::invalid("gamma_err must lie in [0, 1]"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta must be positive"));
        }
        if self.max_shots_per_camera == 0 {
            return Err(Error::invalid("max_shots_per_camera must be at least 1"));
        }
        Ok(())
    }
}

/// The histogram the planner actually works with: restricted to the range of
/// interest and renormalized, so disparity error is measured over that range.
pub fn planning_histogram(hist: &LogRadianceHistogram, config: &PlannerConfig) -> Result<LogRadianceHistogram> {
    let h = match config.range_of_interest {
        Some(roi) => hist.clone().with_range_of_interest(roi)?,
        None => hist.clone(),
    };
    h.restricted_to_roi()
}

/// A capture sequence with its derived metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapturePlan {
    pub shots: Vec<Shot>,
    pub t_cap: f64,
    pub predicted_disp_err: f64,
    pub worst_snr: f64,
    pub coverage_ok: bool,
}

/// Per-camera exposure sums.
pub fn camera_times(shots: &[Shot]) -> [f64; 2] {
    let mut sums = [0.0; 2];
    for s in shots {
        sums[s.camera.index()] += s.t;
    }
    sums
}

pub fn capture_time(shots: &[Shot]) -> f64 {
    let [a, b] = camera_times(shots);
    a.max(b)
}

/// Union of a camera's shot intervals.
pub fn camera_coverage(shots: &[Shot], camera: CameraId) -> IntervalSet {
    IntervalSet::from_intervals(shots.iter().filter(|s| s.camera == camera).map(|s| s.interval))
}

/// Mass outside the dual-covered set `O`. `hist` is the planning histogram.
pub fn predicted_disparity_error(hist: &LogRadianceHistogram, shots: &[Shot]) -> f64 {
    let o = camera_coverage(shots, CameraId::Primary).intersection(&camera_coverage(shots, CameraId::Secondary));
    (1.0 - hist.mass_in(&o)).max(0.0)
}

impl CapturePlan {
    /// Evaluates shots against the planning histogram.
    pub fn evaluate(shots: Vec<Shot>, hist: &LogRadianceHistogram, rig: &CameraRig) -> Self {
        let all = IntervalSet::from_intervals(shots.iter().map(|s| s.interval));
        let coverage_ok = !shots.is_empty() && hist.coverage_gap(&all).is_empty();
        let worst_snr = shots
            .iter()
            .filter_map(|s| {
                let cam = rig.camera(s.camera)?;
                Some(cam.snr(s.interval.low.exp(), s.t, cam.gain(s.iso)))
            })
            .fold(f64::INFINITY, f64::min);
        Self {
            t_cap: capture_time(&shots),
            predicted_disp_err: predicted_disparity_error(hist, &shots),
            worst_snr,
            coverage_ok,
            shots,
        }
    }

    pub fn shots_on(&self, camera: CameraId) -> usize {
        self.shots.iter().filter(|s| s.camera == camera).count()
    }

    pub fn worst_snr_db(&self) -> f64 {
        ratio_to_db(self.worst_snr)
    }

    /// Checks every constraint family; returns the first one violated.
    pub fn violation(&self, rig: &CameraRig, config: &PlannerConfig) -> Option<String> {
        if !self.coverage_ok {
            return Some("coverage: range of interest not fully covered".into());
        }
        if rig.is_dual() && self.predicted_disp_err > config.gamma_err + 1e-9 {
            return Some(format!(
                "disparity error {:.4} exceeds gamma_err {:.4}",
                self.predicted_disp_err, config.gamma_err
            ));
        }
        if self.worst_snr < config.eta * (1.0 - 1e-9) - 1e-12 {
            return Some(format!("worst SNR {:.4} below eta {:.4}", self.worst_snr, config.eta));
        }
        for (i, s) in self.shots.iter().enumerate() {
            let Some(cam) = rig.camera(s.camera) else {
                return Some(format!("shot {i} uses a missing camera"));
            };
            if !cam.supports_exposure(s.t) {
                return Some(format!("shot {i}: exposure {} s outside hardware range", s.t));
            }
            if !cam.supports_iso(s.iso) {
                return Some(format!("shot {i}: ISO {} unsupported", s.iso));
            }
        }
        for cam in [CameraId::Primary, CameraId::Secondary] {
            if self.shots_on(cam) > config.max_shots_per_camera {
                return Some(format!("more than {} shots on {cam:?}", config.max_shots_per_camera));
            }
        }
        None
    }

    pub fn is_feasible(&self, rig: &CameraRig, config: &PlannerConfig) -> bool {
        self.violation(rig, config).is_none()
    }
}

/// Full planner: ISO-aware initialization followed by refinement.
///
/// Besides the ISO scan, each uniform-ISO initialization and both anchoring
/// orders are refined, and the fastest feasible result is returned.
pub fn plan(hist: &LogRadianceHistogram, rig: &CameraRig, config: &PlannerConfig) -> Result<CapturePlan> {
    config.validate()?;
    rig.validate()?;
    let ph = planning_histogram(hist, config)?;

    let mut candidates: Vec<Vec<Shot>> = Vec::new();
    let mut last_err = None;
    match init::init_isos_on(&ph, rig, config) {
        Ok((shots, _)) => candidates.push(shots),
        Err(e) => last_err = Some(e),
    }
    let mut isos: Vec<f64> = rig.primary.iso_set.clone();
    if let Some(s) = &rig.secondary {
        isos.extend(s.iso_set.iter().copied());
    }
    isos.sort_by(f64::total_cmp);
    isos.dedup();
    for anchor in [None, Some(CameraId::Primary), Some(CameraId::Secondary)] {
        if anchor == Some(CameraId::Secondary) && !rig.is_dual() {
            continue;
        }
        for &iso in &isos {
            match init::init_exposures_with(&ph, rig, &[iso], config, anchor) {
                Ok(shots) => candidates.push(shots),
                Err(e) => {
                    last_err.get_or_insert(e);
                }
            }
        }
    }
    if candidates.is_empty() {
        return Err(match last_err {
            Some(Error::Infeasible(m)) => Error::Infeasible(m),
            Some(e @ Error::ShotBudgetExceeded { .. }) => e,
            Some(e) => Error::Infeasible(e.to_string()),
            None => Error::Infeasible("no candidate initialization".into()),
        });
    }

    let mut best: Option<CapturePlan> = None;
    for shots in candidates {
        let initial = CapturePlan::evaluate(shots, &ph, rig);
        if !initial.is_feasible(rig, config) {
            continue;
        }
        let refined = refine::refine_on(initial, &ph, rig, config);
        if best.as_ref().is_none_or(|b| refined.t_cap < b.t_cap) {
            best = Some(refined);
        }
    }
    best.ok_or_else(|| Error::Infeasible("no initialization satisfied all constraints".into()))
}
