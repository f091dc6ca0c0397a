//! Exposure refinement by damped least squares on a penalized surrogate.
//!
//! Variables are log exposures with ISOs held fixed. The objective is a
//! log-sum-exp smooth max of the per-camera exposure sums; constraint
//! violations enter as hinge residuals whose weights grow over annealing
//! rounds. Every candidate is re-checked against the true constraints and only
//! feasible, strictly faster plans replace the incumbent.

use nalgebra::{DMatrix, DVector};

use super::{planning_histogram, CapturePlan, PlannerConfig, Shot};
use crate::camera::{CameraId, CameraRig};
use crate::error::Result;
use crate::radiance::{Interval, IntervalSet, LogRadianceHistogram};

/// Refines the exposures of a feasible plan. Infeasible input is returned unchanged.
pub fn refine(
    plan: CapturePlan,
    hist: &LogRadianceHistogram,
    rig: &CameraRig,
    config: &PlannerConfig,
) -> Result<CapturePlan> {
    config.validate()?;
    let ph = planning_histogram(hist, config)?;
    Ok(refine_on(plan, &ph, rig, config))
}

struct Problem<'a> {
    ph: &'a LogRadianceHistogram,
    rig: &'a CameraRig,
    config: &'a PlannerConfig,
    template: Vec<Shot>,
    /// `low_i = floor_i - u_i`, `high_i = ceil_i - u_i`.
    floor: Vec<f64>,
    ceil: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    dual: bool,
}

struct Eval {
    times: [f64; 2],
    gap: f64,
    excess: f64,
}

impl Problem<'_> {
    fn intervals(&self, u: &[f64]) -> Vec<Interval> {
        (0..u.len())
            .map(|i| Interval::new(self.floor[i] - u[i], self.ceil[i] - u[i]))
            .collect()
    }

    fn eval(&self, u: &[f64]) -> Eval {
        let ivs = self.intervals(u);
        let mut times = [0.0; 2];
        for (s, ui) in self.template.iter().zip(u) {
            times[s.camera.index()] += ui.exp();
        }
        let all = IntervalSet::from_intervals(ivs.iter().copied());
        let gap: f64 = self.ph.coverage_gap(&all).iter().map(Interval::width).sum();
        let excess = if self.dual {
            let cover = |c: CameraId| {
                IntervalSet::from_intervals(
                    self.template.iter().zip(&ivs).filter(|(s, _)| s.camera == c).map(|(_, iv)| *iv),
                )
            };
            let o = cover(CameraId::Primary).intersection(&cover(CameraId::Secondary));
            ((1.0 - self.ph.mass_in(&o)) - self.config.gamma_err).max(0.0)
        } else {
            0.0
        };
        Eval { times, gap, excess }
    }

    fn clamp(&self, u: &mut [f64]) {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = ui.clamp(self.lower[i], self.upper[i]);
        }
    }

    fn plan(&self, u: &[f64]) -> CapturePlan {
        let shots = self
            .template
            .iter()
            .zip(u)
            .filter_map(|(s, &ui)| Shot::new(self.rig, s.camera, ui.exp(), s.iso, self.config.eta).ok())
            .collect();
        CapturePlan::evaluate(shots, self.ph, self.rig)
    }

    fn feasible_plan(&self, u: &[f64]) -> Option<CapturePlan> {
        let e = self.eval(u);
        if e.gap > 0.0 || e.excess > 1e-12 {
            return None;
        }
        let p = self.plan(u);
        (p.shots.len() == self.template.len() && p.is_feasible(self.rig, self.config)).then_some(p)
    }

    fn residuals(&self, u: &[f64], scale: f64, temp: f64, gap_w: f64, disp_w: f64) -> DVector<f64> {
        let e = self.eval(u);
        let [a, b] = e.times;
        let m = a.max(b);
        let smax = m + temp * ((-(m - a) / temp).exp() + (-(m - b) / temp).exp()).ln();
        DVector::from_vec(vec![(smax / scale).sqrt(), gap_w * e.gap, disp_w * e.excess])
    }
}

pub(crate) fn refine_on(
    plan: CapturePlan,
    ph: &LogRadianceHistogram,
    rig: &CameraRig,
    config: &PlannerConfig,
) -> CapturePlan {
    if plan.shots.is_empty() || !plan.is_feasible(rig, config) {
        return plan;
    }
    let mut floor = Vec::new();
    let mut ceil = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for s in &plan.shots {
        let cam = rig.camera(s.camera).expect("feasible plan uses existing cameras");
        let g = cam.gain(s.iso);
        floor.push(cam.min_admissible_signal(g, config.eta).ln() + g.ln());
        ceil.push(cam.log_saturation_signal() + g.ln());
        lower.push(cam.t_min().ln());
        upper.push(cam.t_max().ln());
    }
    let problem = Problem {
        ph,
        rig,
        config,
        template: plan.shots.clone(),
        floor,
        ceil,
        lower,
        upper,
        dual: rig.is_dual(),
    };

    let u0: Vec<f64> = plan.shots.iter().map(|s| s.t.ln()).collect();
    let mut best_u = u0.clone();
    let mut best_t = plan.t_cap;

    let rc = &config.refine;
    let scale = plan.t_cap;
    let mut temp = rc.temperature * scale;
    let (mut gap_w, mut disp_w) = (rc.gap_weight, rc.disparity_weight);
    let mut u = u0.clone();
    for _ in 0..rc.anneal_rounds.max(1) {
        u = levenberg_marquardt(&problem, u, rc.max_iterations, rc.damping, |p, x| {
            p.residuals(x, scale, temp, gap_w, disp_w)
        });
        // pull a slightly infeasible penalty optimum back along the segment from the incumbent
        for k in 0..=20 {
            let alpha = 1.0 - k as f64 / 20.0;
            let cand: Vec<f64> = best_u.iter().zip(&u).map(|(b, x)| b + alpha * (x - b)).collect();
            if let Some(p) = problem.feasible_plan(&cand) {
                if p.t_cap < best_t {
                    best_t = p.t_cap;
                    best_u = cand;
                }
                break;
            }
        }
        gap_w *= 10.0;
        disp_w *= 10.0;
        temp *= 0.25;
    }

    let (su, st) = squeeze(&problem, best_u, best_t);
    best_u = su;
    best_t = st;

    if best_t < plan.t_cap {
        problem.feasible_plan(&best_u).unwrap_or(plan)
    } else {
        plan
    }
}

/// Shortens exposures on the bottleneck camera one at a time as far as feasibility allows.
fn squeeze(problem: &Problem<'_>, mut u: Vec<f64>, mut t_cap: f64) -> (Vec<f64>, f64) {
    for _ in 0..6 {
        let mut improved = false;
        let mut order: Vec<usize> = (0..u.len()).collect();
        order.sort_by(|&a, &b| u[b].total_cmp(&u[a]));
        for i in order {
            let room = u[i] - problem.lower[i];
            if room <= 1e-12 {
                continue;
            }
            let try_shift = |d: f64| {
                let mut c = u.clone();
                c[i] -= d;
                problem.feasible_plan(&c).map(|p| (c, p.t_cap))
            };
            let (mut lo, mut hi) = (0.0, room);
            if let Some((c, t)) = try_shift(room) {
                if t < t_cap * (1.0 - 1e-12) {
                    u = c;
                    t_cap = t;
                    improved = true;
                }
                continue;
            }
            for _ in 0..48 {
                let mid = 0.5 * (lo + hi);
                if try_shift(mid).is_some() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if lo > 0.0 {
                if let Some((c, t)) = try_shift(lo) {
                    if t < t_cap * (1.0 - 1e-12) {
                        u = c;
                        t_cap = t;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    (u, t_cap)
}

/// Box-constrained Levenberg-Marquardt with a central-difference Jacobian.
fn levenberg_marquardt<F>(problem: &Problem<'_>, mut u: Vec<f64>, max_iter: usize, damping: f64, f: F) -> Vec<f64>
where
    F: Fn(&Problem<'_>, &[f64]) -> DVector<f64>,
{
    let n = u.len();
    let mut lambda = damping;
    let mut r = f(problem, &u);
    let mut cost = r.norm_squared();
    let h = 1e-6;
    for _ in 0..max_iter {
        let mut jac = DMatrix::zeros(r.len(), n);
        for j in 0..n {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[j] += h;
            dn[j] -= h;
            let col = (f(problem, &up) - f(problem, &dn)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut stepped = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * (jtj[(k, k)] + 1e-9);
            }
            let Some(delta) = a.lu().solve(&(-&jtr)) else {
                lambda *= 4.0;
                continue;
            };
            let mut cand: Vec<f64> = u.iter().zip(delta.iter()).map(|(x, d)| x + d).collect();
            problem.clamp(&mut cand);
            let rc = f(problem, &cand);
            let c = rc.norm_squared();
            if c < cost {
                let moved = cand.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                u = cand;
                r = rc;
                cost = c;
                lambda = (lambda / 3.0).max(1e-12);
                stepped = moved > 1e-12;
                break;
            }
            lambda *= 4.0;
        }
        if !stepped {
            break;
        }
    }
    u
}
