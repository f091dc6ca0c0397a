//! Greedy initialization: exposure placement for fixed ISOs, then a per-shot ISO scan.

use super::{camera_of, capture_time, planning_histogram, PlannerConfig, Shot};
use crate::camera::{CameraId, CameraModel, CameraRig};
use crate::error::{Error, Result};
use crate::radiance::LogRadianceHistogram;

/// Exposure that puts the low end of a shot's interval at `low`.
fn exposure_for_low(cam: &CameraModel, g: f64, eta: f64, low: f64) -> f64 {
    (cam.min_admissible_signal(g, eta).ln() + g.ln() - low).exp()
}

/// Exposure that puts the high end of a shot's interval at `high`.
#[allow(dead_code)]
fn exposure_for_high(cam: &CameraModel, g: f64, high: f64) -> f64 {
    (cam.log_saturation_signal() + g.ln() - high).exp()
}

fn snap_iso(cam: &CameraModel, iso: f64) -> f64 {
    *cam.iso_set
        .iter()
        .min_by(|a, b| (*a - iso).abs().total_cmp(&(*b - iso).abs()))
        .expect("validated iso_set")
}

/// ISO for slot `i`: explicit if given, otherwise inherited from the previous shot
/// on the same camera (or the last explicit slot).
fn slot_iso(cam: &CameraModel, camera: CameraId, isos: &[f64], placed: &[Shot], i: usize) -> f64 {
    if let Some(&iso) = isos.get(i) {
        return snap_iso(cam, iso);
    }
    if let Some(prev) = placed.iter().rev().find(|s| s.camera == camera) {
        return prev.iso;
    }
    match isos.last() {
        Some(&iso) => snap_iso(cam, iso),
        None => cam.iso_set[0],
    }
}

/// Places exposures for a given per-slot ISO assignment.
///
/// Shot 0 starts at the bottom of the range of interest; shots then alternate
/// cameras, each starting no higher than the previous one ends, with the mass
/// covered by only one camera between them limited to `gamma_err / 2^(i+1)`.
/// Placement stops at the first shot that reaches the top of the range while the
/// remaining single-camera mass still fits the unused error budget.
pub fn init_exposures(
    hist: &LogRadianceHistogram,
    rig: &CameraRig,
    isos: &[f64],
    config: &PlannerConfig,
) -> Result<Vec<Shot>> {
    config.validate()?;
    let ph = planning_histogram(hist, config)?;
    init_exposures_with(&ph, rig, isos, config, None)
}

pub(crate) fn init_exposures_with(
    ph: &LogRadianceHistogram,
    rig: &CameraRig,
    isos: &[f64],
    config: &PlannerConfig,
    anchor: Option<CameraId>,
) -> Result<Vec<Shot>> {
    let roi = ph.range_of_interest();
    let eta = config.eta;
    let dual = rig.is_dual();

    let first_camera = match anchor {
        Some(c) if dual || c == CameraId::Primary => c,
        Some(_) => return Err(Error::invalid("secondary anchor on a single-camera rig")),
        None if !dual => CameraId::Primary,
        None => {
            let t0 = |id: CameraId| -> f64 {
                let cam = camera_of(rig, id).expect("dual rig");
                let g = cam.gain(slot_iso(cam, id, isos, &[], 0));
                exposure_for_low(cam, g, eta, roi.low)
            };
            if t0(CameraId::Secondary) < t0(CameraId::Primary) {
                CameraId::Secondary
            } else {
                CameraId::Primary
            }
        }
    };

    let cam = camera_of(rig, first_camera)?;
    let iso = slot_iso(cam, first_camera, isos, &[], 0);
    let g = cam.gain(iso);
    let t = exposure_for_low(cam, g, eta, roi.low);
    if t > cam.t_max() * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "bottom of range {:.3} needs a {t:.4} s exposure on {first_camera:?}, above t_max {}",
            roi.low,
            cam.t_max()
        )));
    }
    let mut shots = vec![Shot::new(rig, first_camera, t.max(cam.t_min()), iso, eta)?];
    let mut used_err = 0.0;

    loop {
        let i = shots.len() - 1;
        let last = shots[i];
        // top of the coverage of the camera that is not `last`'s
        let other_top = shots
            .iter()
            .filter(|s| s.camera != last.camera)
            .map(|s| s.interval.high)
            .fold(roi.low, f64::max);

        if last.interval.high >= roi.high {
            let tail = if dual { ph.mass_between(other_top, roi.high) } else { 0.0 };
            if !dual || used_err + tail <= config.gamma_err + 1e-12 {
                break;
            }
        }

        let next_camera = if dual { last.camera.other() } else { CameraId::Primary };
        let cam = camera_of(rig, next_camera)?;
        let iso = slot_iso(cam, next_camera, isos, &shots, i + 1);
        let g = cam.gain(iso);

        let low = if dual {
            let budget = config.gamma_err / 2f64.powi(i as i32 + 1);
            largest_low_within_budget(ph, other_top, last.interval.high, budget)
        } else {
            last.interval.high
        };

        let t = exposure_for_low(cam, g, eta, low);
        if t > cam.t_max() * (1.0 + 1e-12) {
            return Err(Error::Infeasible(format!(
                "shot {} on {next_camera:?} needs {t:.4} s to start at {low:.3}, above t_max {}",
                i + 1,
                cam.t_max()
            )));
        }
        let shot = Shot::new(rig, next_camera, t.max(cam.t_min()), iso, eta)?;
        if shot.interval.high <= last.interval.high + 1e-12 {
            return Err(Error::Infeasible(format!(
                "coverage cannot be extended past {:.3} within the hardware exposure range",
                last.interval.high
            )));
        }
        if dual {
            used_err += ph.mass_between(other_top, shot.interval.low);
        }
        shots.push(shot);
        let on_camera = shots.iter().filter(|s| s.camera == next_camera).count();
        if on_camera > config.max_shots_per_camera {
            return Err(Error::ShotBudgetExceeded {
                max: config.max_shots_per_camera,
            });
        }
    }

    Ok(shots)
}

/// Largest `low` in `[from, cap]` such that the mass in `[from, low]` is within `budget`.
fn largest_low_within_budget(ph: &LogRadianceHistogram, from: f64, cap: f64, budget: f64) -> f64 {
    if cap <= from || ph.mass_between(from, cap) <= budget {
        return cap;
    }
    let (mut lo, mut hi) = (from, cap);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ph.mass_between(from, mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// ISO selection: starting from the lowest feasible uniform ISO, raises each
/// shot's ISO in turn while the overall capture time strictly decreases.
pub fn init_isos(
    hist: &LogRadianceHistogram,
    rig: &CameraRig,
    config: &PlannerConfig,
) -> Result<(Vec<Shot>, Vec<f64>)> {
    config.validate()?;
    rig.validate()?;
    let ph = planning_histogram(hist, config)?;
    init_isos_on(&ph, rig, config)
}

pub(crate) fn init_isos_on(
    ph: &LogRadianceHistogram,
    rig: &CameraRig,
    config: &PlannerConfig,
) -> Result<(Vec<Shot>, Vec<f64>)> {
    let mut start = None;
    let mut last_err = None;
    for &iso in &rig.primary.iso_set {
        match init_exposures_with(ph, rig, &[iso], config, None) {
            Ok(shots) => {
                start = Some(shots);
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some(mut shots) = start else {
        return Err(last_err.unwrap_or_else(|| Error::Infeasible("empty ISO set".into())));
    };
    let mut isos: Vec<f64> = shots.iter().map(|s| s.iso).collect();
    let mut best = capture_time(&shots);

    let mut i = 0;
    while i < shots.len() {
        loop {
            let cam = camera_of(rig, shots[i].camera)?;
            let Some(&next) = cam.iso_set.iter().find(|&&s| s > isos[i] * (1.0 + 1e-12)) else {
                break;
            };
            let mut candidate = isos.clone();
            candidate[i] = next;
            match init_exposures_with(ph, rig, &candidate, config, None) {
                Ok(s) if capture_time(&s) < best * (1.0 - 1e-12) => {
                    best = capture_time(&s);
                    isos = s.iter().map(|x| x.iso).collect();
                    shots = s;
                    if i >= shots.len() {
                        break;
                    }
                }
                _ => break,
            }
        }
        i += 1;
    }
    Ok((shots, isos))
}
