//! Exhaustive search over discretized exposure/ISO grids. Used as a test oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{planning_histogram, CapturePlan, PlannerConfig, Shot};
use crate::camera::{CameraId, CameraRig};
use crate::error::{Error, Result};
use crate::radiance::{Interval, IntervalSet};

/// Candidate exposures and ISOs shared by both cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanGrid {
    pub exposures: Vec<f64>,
    pub isos: Vec<f64>,
}

impl PlanGrid {
    /// `stops` power-of-two exposures descending from `t_longest`.
    pub fn power_of_two(t_longest: f64, stops: usize, isos: Vec<f64>) -> Self {
        Self {
            exposures: (0..stops).map(|k| t_longest / 2f64.powi(k as i32)).collect(),
            isos,
        }
    }
}

pub const DEFAULT_COMBINATION_CAP: u64 = 2_000_000;

fn subsets_up_to(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..k {
        let mut next = Vec::new();
        for s in &frontier {
            let start = s.last().map_or(0, |&l: &usize| l + 1);
            for i in start..n {
                let mut t = s.clone();
                t.push(i);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn binom_sum(n: u64, k: u64) -> u64 {
    let mut total = 0u64;
    let mut c = 1u64;
    for j in 0..=k.min(n) {
        total = total.saturating_add(c);
        c = c.saturating_mul(n - j) / (j + 1);
    }
    total
}

struct Choice {
    t: f64,
    iso: f64,
    interval: Interval,
}

struct Subset {
    time: f64,
    options: Vec<usize>,
    cover: IntervalSet,
}

/// Global optimum over the grid with at most `config.max_shots_per_camera` shots per camera.
pub fn brute_force_plan(
    hist: &crate::radiance::LogRadianceHistogram,
    rig: &CameraRig,
    config: &PlannerConfig,
    grid: &PlanGrid,
) -> Result<CapturePlan> {
    config.validate()?;
    rig.validate()?;
    let ph = planning_histogram(hist, config)?;
    let k = config.max_shots_per_camera;

    let cameras: Vec<CameraId> = if rig.is_dual() {
        vec![CameraId::Primary, CameraId::Secondary]
    } else {
        vec![CameraId::Primary]
    };

    let mut per_camera: Vec<(Vec<Choice>, Vec<Subset>)> = Vec::new();
    let mut combos = 1u64;
    for &c in &cameras {
        let cam = rig.camera(c).expect("listed camera exists");
        let mut opts = Vec::new();
        for &t in &grid.exposures {
            if !cam.supports_exposure(t) {
                continue;
            }
            for &iso in &grid.isos {
                if !cam.supports_iso(iso) {
                    continue;
                }
                if let Ok(interval) = cam.log_radiance_interval(t, cam.gain(iso), config.eta) {
                    opts.push(Choice { t, iso, interval });
                }
            }
        }
        combos = combos.saturating_mul(binom_sum(opts.len() as u64, k as u64));
        per_camera.push((opts, Vec::new()));
    }
    if combos > DEFAULT_COMBINATION_CAP {
        return Err(Error::GridTooLarge {
            combinations: combos,
            cap: DEFAULT_COMBINATION_CAP,
        });
    }
    for (opts, subsets) in per_camera.iter_mut() {
        for s in subsets_up_to(opts.len(), k) {
            let time = s.iter().map(|&i| opts[i].t).sum();
            let cover = IntervalSet::from_intervals(s.iter().map(|&i| opts[i].interval));
            subsets.push(Subset { time, options: s, cover });
        }
        subsets.sort_by(|a, b| a.time.total_cmp(&b.time));
    }

    let roi = ph.range_of_interest();
    let gamma = config.gamma_err;
    let best = if cameras.len() == 1 {
        per_camera[0]
            .1
            .iter()
            .position(|s| !s.options.is_empty() && s.cover.gaps_within(roi).is_empty())
            .map(|pi| (per_camera[0].1[pi].time, pi, usize::MAX))
    } else {
        let (p, s) = (&per_camera[0].1, &per_camera[1].1);
        // secondary subsets are sorted by time, so the first feasible partner is the best one
        p.par_iter()
            .enumerate()
            .filter_map(|(pi, ps)| {
                s.iter().enumerate().find_map(|(si, ss)| {
                    if ps.options.is_empty() && ss.options.is_empty() {
                        return None;
                    }
                    if !ps.cover.union(&ss.cover).gaps_within(roi).is_empty() {
                        return None;
                    }
                    let err = 1.0 - ph.mass_in(&ps.cover.intersection(&ss.cover));
                    (err <= gamma + 1e-12).then_some((ps.time.max(ss.time), pi, si))
                })
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
    };

    let Some((_, pi, si)) = best else {
        return Err(Error::Infeasible("no grid combination satisfies all constraints".into()));
    };
    let mut shots = Vec::new();
    for (ci, idx) in [(0usize, pi), (1usize, si)] {
        if idx == usize::MAX || ci >= per_camera.len() {
            continue;
        }
        let (opts, subsets) = &per_camera[ci];
        for &o in &subsets[idx].options {
            shots.push(Shot::new(rig, cameras[ci], opts[o].t, opts[o].iso, config.eta)?);
        }
    }
    shots.sort_by(|a, b| b.t.total_cmp(&a.t));
    Ok(CapturePlan::evaluate(shots, &ph, rig))
}
