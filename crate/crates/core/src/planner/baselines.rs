//! Fixed exposure-bracketing schemes used as comparison baselines.

use serde::{Deserialize, Serialize};

use super::{planning_histogram, CapturePlan, PlannerConfig, Shot};
use crate::camera::{CameraId, CameraModel, CameraRig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineScheme {
    /// Primary descends from the bottom of the range, secondary ascends from the top,
    /// each by `C` stops per shot.
    ExpComp(u8),
    /// One `C`-stop ladder from the bottom of the range, alternating cameras.
    ExpIntrl(u8),
}

impl BaselineScheme {
    pub fn name(&self) -> String {
        match self {
            BaselineScheme::ExpComp(c) => format!("exp-comp{c}"),
            BaselineScheme::ExpIntrl(c) => format!("exp-intrl{c}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let (kind, c) = s.split_at(s.len().checked_sub(1)?);
        let c: u8 = c.parse().ok()?;
        match kind {
            "exp-comp" if (1..=3).contains(&c) => Some(BaselineScheme::ExpComp(c)),
            "exp-intrl" if (1..=3).contains(&c) => Some(BaselineScheme::ExpIntrl(c)),
            _ => None,
        }
    }

    fn compensation(&self) -> u8 {
        match *self {
            BaselineScheme::ExpComp(c) | BaselineScheme::ExpIntrl(c) => c,
        }
    }
}

fn clamp_t(cam: &CameraModel, t: f64) -> f64 {
    t.clamp(cam.t_min(), cam.t_max())
}

fn low_anchor(cam: &CameraModel, iso: f64, eta: f64, low: f64) -> f64 {
    let g = cam.gain(iso);
    (cam.min_admissible_signal(g, eta).ln() + g.ln() - low).exp()
}

fn high_anchor(cam: &CameraModel, iso: f64, high: f64) -> f64 {
    let g = cam.gain(iso);
    (cam.log_saturation_signal() + g.ln() - high).exp()
}

/// Builds a baseline bracketing plan with `n_shots` per camera at each camera's lowest ISO.
/// The returned plan may violate constraints; its flags and metrics report that.
pub fn baseline_plan(
    hist: &crate::radiance::LogRadianceHistogram,
    rig: &CameraRig,
    scheme: BaselineScheme,
    n_shots: usize,
    config: &PlannerConfig,
) -> Result<CapturePlan> {
    let c = scheme.compensation();
    if !(1..=3).contains(&c) {
        return Err(Error::invalid("exposure compensation must be 1, 2 or 3 stops"));
    }
    if n_shots == 0 {
        return Err(Error::invalid("baselines need at least one shot per camera"));
    }
    let secondary = rig
        .secondary
        .as_ref()
        .ok_or_else(|| Error::invalid("baselines need a dual-camera rig"))?;
    let ph = planning_histogram(hist, config)?;
    let roi = ph.range_of_interest();
    let factor = 2f64.powi(c as i32);
    let eta = config.eta;
    let (p_iso, s_iso) = (rig.primary.iso_set[0], secondary.iso_set[0]);

    let mut shots = Vec::new();
    match scheme {
        BaselineScheme::ExpComp(_) => {
            let tp = low_anchor(&rig.primary, p_iso, eta, roi.low);
            let ts = high_anchor(secondary, s_iso, roi.high);
            for k in 0..n_shots {
                let step = factor.powi(k as i32);
                shots.push(Shot::new(rig, CameraId::Primary, clamp_t(&rig.primary, tp / step), p_iso, eta)?);
                shots.push(Shot::new(rig, CameraId::Secondary, clamp_t(secondary, ts * step), s_iso, eta)?);
            }
        }
        BaselineScheme::ExpIntrl(_) => {
            let t0 = low_anchor(&rig.primary, p_iso, eta, roi.low);
            for k in 0..2 * n_shots {
                let t = t0 / factor.powi(k as i32);
                let (id, cam, iso) = if k % 2 == 0 {
                    (CameraId::Primary, &rig.primary, p_iso)
                } else {
                    (CameraId::Secondary, secondary, s_iso)
                };
                shots.push(Shot::new(rig, id, clamp_t(cam, t), iso, eta)?);
            }
        }
    }
    Ok(CapturePlan::evaluate(shots, &ph, rig))
}

/// Dense reference stack: on every camera, a `compensation`-stop ladder from the
/// bottom of the range until the top is covered, at the lowest ISO.
pub fn dense_stack_plan(
    hist: &crate::radiance::LogRadianceHistogram,
    rig: &CameraRig,
    compensation: u8,
    config: &PlannerConfig,
) -> Result<CapturePlan> {
    let ph = planning_histogram(hist, config)?;
    let roi = ph.range_of_interest();
    let factor = 2f64.powi(compensation.max(1) as i32);
    let mut shots = Vec::new();
    for id in [CameraId::Primary, CameraId::Secondary] {
        let Some(cam) = rig.camera(id) else { continue };
        let iso = cam.iso_set[0];
        let mut t = clamp_t(cam, low_anchor(cam, iso, config.eta, roi.low));
        loop {
            let shot = Shot::new(rig, id, t, iso, config.eta)?;
            shots.push(shot);
            if shot.interval.high >= roi.high || t <= cam.t_min() || shots.len() > 64 {
                break;
            }
            t = clamp_t(cam, t / factor);
        }
    }
    Ok(CapturePlan::evaluate(shots, &ph, rig))
}
