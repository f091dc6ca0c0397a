//! Joint ICRF estimation for two cameras whose responses differ by a constant.
//!
//! The unknowns are the primary table `e1`, the offset `c` (so `e2 = e1 + c`)
//! and one log radiance per scene point. Scene-point unknowns are eliminated
//! from the normal equations by a Schur complement, leaving a dense 256-unknown
//! system.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraId, CameraRig, Icrf, PixelWindow};
use crate::disparity::DisparityMap;
use crate::error::{Error, Result};
use crate::sim::LdrImage;

const LEVELS: usize = 256;

/// Hat weight `min(d, 255 - d)`.
pub fn triangular_weight(d: u8) -> f64 {
    d.min(255 - d) as f64
}

/// One pixel value of one scene point, with its shot's exposure and gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub camera: CameraId,
    pub value: u8,
    pub t: f64,
    pub g: f64,
}

/// All observations of one scene point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub observations: Vec<Observation>,
}

/// Gauge fix: `e1(index) = value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub index: u8,
    pub value: f64,
}

impl Default for Anchor {
    fn default() -> Self {
        Self { index: 128, value: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcrfEstimate {
    pub e1: Icrf,
    pub offset_c: f64,
    /// Final weighted cost.
    pub residual: f64,
    pub lambda_sm: f64,
}

impl IcrfEstimate {
    /// Wraps known responses, taking `c` as the mean table difference.
    pub fn from_tables(primary: &Icrf, secondary: &Icrf) -> Self {
        let n = primary.levels().min(secondary.levels());
        let c = (0..n).map(|d| secondary.table()[d] - primary.table()[d]).sum::<f64>() / n as f64;
        Self {
            e1: primary.clone(),
            offset_c: c,
            residual: 0.0,
            lambda_sm: 0.0,
        }
    }

    pub fn e2(&self) -> Icrf {
        self.e1.offset(self.offset_c)
    }

    pub fn icrf(&self, camera: CameraId) -> Icrf {
        match camera {
            CameraId::Primary => self.e1.clone(),
            CameraId::Secondary => self.e2(),
        }
    }

    /// First pixel value where `e1` decreases, checked where the weight exceeds 10%
    /// of its peak.
    pub fn monotonicity_violation(&self) -> Option<u8> {
        let t = self.e1.table();
        let floor = 0.1 * triangular_weight(127);
        (1..t.len())
            .find(|&d| triangular_weight(d as u8) > floor && triangular_weight(d as u8 - 1) > floor && t[d] < t[d - 1])
            .map(|d| d as u8)
    }
}

/// Solves the regularized weighted least-squares problem for `(e1, c)`.
pub fn estimate_joint_icrf(corrs: &[Correspondence], lambda_sm: f64, anchor: Anchor) -> Result<IcrfEstimate> {
    let mut exposures: Vec<f64> = corrs
        .iter()
        .flat_map(|c| c.observations.iter().map(|o| o.t.ln() - o.g.ln()))
        .collect();
    exposures.sort_by(f64::total_cmp);
    exposures.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if exposures.len() < 2 {
        return Err(Error::InsufficientData("need at least two distinct exposures".into()));
    }
    let mut seen = [false; LEVELS];
    for o in corrs.iter().flat_map(|c| &c.observations) {
        seen[o.value as usize] = true;
    }
    let distinct = seen.iter().filter(|&&s| s).count();
    if distinct < 50 {
        return Err(Error::InsufficientData(format!("only {distinct} distinct pixel values")));
    }

    // unknown layout: e1 without the anchor entry (255 values), then c
    let a_idx = anchor.index as usize;
    let col = |d: usize| -> Option<usize> {
        match d.cmp(&a_idx) {
            std::cmp::Ordering::Less => Some(d),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(d - 1),
        }
    };
    let n = LEVELS;
    let c_col = LEVELS - 1;
    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);

    // each data row: e1(d) + [secondary] c - R_p = ln t - ln g, weighted by w(d)
    let row_of = |o: &Observation| -> (Option<usize>, bool, f64, f64) {
        let w = triangular_weight(o.value);
        let mut b = o.t.ln() - o.g.ln();
        let e_col = col(o.value as usize);
        if e_col.is_none() {
            b -= anchor.value;
        }
        (e_col, o.camera == CameraId::Secondary, b, w * w)
    };

    let mut used_points = 0usize;
    for corr in corrs {
        let rows: Vec<_> = corr.observations.iter().map(row_of).filter(|r| r.3 > 0.0).collect();
        let dp: f64 = rows.iter().map(|r| r.3).sum();
        if dp <= 0.0 {
            continue;
        }
        used_points += 1;
        let mut q = vec![0.0; n];
        let mut qb = 0.0;
        for &(e, sec, b, w2) in &rows {
            let mut cols = [None, None];
            cols[0] = e;
            if sec {
                cols[1] = Some(c_col);
            }
            for i in cols.iter().flatten() {
                for j in cols.iter().flatten() {
                    s[(*i, *j)] += w2;
                }
                rhs[*i] += w2 * b;
                q[*i] += w2;
            }
            qb += w2 * b;
        }
        let nz: Vec<usize> = (0..n).filter(|&i| q[i] != 0.0).collect();
        for &i in &nz {
            for &j in &nz {
                s[(i, j)] -= q[i] * q[j] / dp;
            }
            rhs[i] -= q[i] * qb / dp;
        }
    }
    if used_points < 2 {
        return Err(Error::InsufficientData("fewer than two weighted scene points".into()));
    }

    // smoothness: sqrt(lambda) w(l) (e1(l-1) - 2 e1(l) + e1(l+1))
    for l in 1..LEVELS - 1 {
        let w2 = lambda_sm * triangular_weight(l as u8).powi(2);
        let terms = [(l - 1, 1.0), (l, -2.0), (l + 1, 1.0)];
        let mut b = 0.0;
        for &(d, k) in &terms {
            if col(d).is_none() {
                b -= k * anchor.value;
            }
        }
        for &(di, ki) in &terms {
            let Some(i) = col(di) else { continue };
            for &(dj, kj) in &terms {
                if let Some(j) = col(dj) {
                    s[(i, j)] += w2 * ki * kj;
                }
            }
            rhs[i] += w2 * ki * b;
        }
    }

    let scale = (0..n).map(|i| s[(i, i)].abs()).fold(0.0, f64::max);
    if (0..n).any(|i| s[(i, i)] <= 1e-12 * scale) {
        return Err(Error::RankDeficient);
    }
    let sol = s.cholesky().ok_or(Error::RankDeficient)?.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient);
    }

    let mut table = vec![0.0; LEVELS];
    for (d, slot) in table.iter_mut().enumerate() {
        *slot = match col(d) {
            Some(i) => sol[i],
            None => anchor.value,
        };
    }
    let c = sol[c_col];
    let e = |o: &Observation| table[o.value as usize] + if o.camera == CameraId::Secondary { c } else { 0.0 };

    let mut residual = 0.0;
    for corr in corrs {
        let (mut num, mut den) = (0.0, 0.0);
        for o in &corr.observations {
            let w2 = triangular_weight(o.value).powi(2);
            num += w2 * (e(o) - o.t.ln() + o.g.ln());
            den += w2;
        }
        if den <= 0.0 {
            continue;
        }
        let r_p = num / den;
        for o in &corr.observations {
            let w2 = triangular_weight(o.value).powi(2);
            residual += w2 * (e(o) - r_p - o.t.ln() + o.g.ln()).powi(2);
        }
    }
    for l in 1..LEVELS - 1 {
        let dd = table[l - 1] - 2.0 * table[l] + table[l + 1];
        residual += lambda_sm * (triangular_weight(l as u8) * dd).powi(2);
    }

    Ok(IcrfEstimate {
        e1: Icrf::from_estimate(table),
        offset_c: c,
        residual,
        lambda_sm,
    })
}

/// Scene-point log radiance implied by a correspondence under an estimate.
pub fn point_radiance(corr: &Correspondence, est: &IcrfEstimate) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for o in &corr.observations {
        let w2 = triangular_weight(o.value).powi(2);
        let e = est.e1.eval(o.value) + if o.camera == CameraId::Secondary { est.offset_c } else { 0.0 };
        num += w2 * (e - o.t.ln() + o.g.ln());
        den += w2;
    }
    (den > 0.0).then(|| num / den)
}

/// Samples scene points from the primary grid, pairing each with the
/// disparity-shifted secondary pixel.
///
/// Frames and `windows` are parallel. Observations outside their window are
/// dropped; points without a valid observation on both cameras are skipped.
/// Sampling is stratified over ten bands of the primary pixel value.
pub fn correspondences_from_disparity(
    frames: &[LdrImage],
    windows: &[PixelWindow],
    rig: &CameraRig,
    disparity: &DisparityMap,
    budget: usize,
    seed: u64,
) -> Result<Vec<Correspondence>> {
    if frames.len() != windows.len() {
        return Err(Error::invalid("one pixel window per frame"));
    }
    let (w, h) = (disparity.values.width(), disparity.values.height());
    if frames.iter().any(|f| f.pixels.width() != w || f.pixels.height() != h) {
        return Err(Error::invalid("frames and disparity map differ in size"));
    }
    let gains: Vec<f64> = frames
        .iter()
        .map(|f| {
            rig.camera(f.shot.camera)
                .map(|c| c.gain(f.shot.iso))
                .ok_or_else(|| Error::invalid("frame references a missing camera"))
        })
        .collect::<Result<_>>()?;

    const STRATA: usize = 10;
    let mut strata: Vec<Vec<Correspondence>> = vec![Vec::new(); STRATA];
    for y in 0..h {
        for x in 0..w {
            if !*disparity.valid.get(x, y) {
                continue;
            }
            let d = disparity.values.at(x, y).round();
            if d < 0.0 || d as usize > x {
                continue;
            }
            let xs = x - d as usize;
            let mut obs = Vec::new();
            let mut key: Option<(f64, u8)> = None;
            for ((f, win), &g) in frames.iter().zip(windows).zip(&gains) {
                let px = match f.shot.camera {
                    CameraId::Primary => x,
                    CameraId::Secondary => xs,
                };
                let v = f.pixels.at(px, y);
                if !win.contains(v) {
                    continue;
                }
                obs.push(Observation {
                    camera: f.shot.camera,
                    value: v,
                    t: f.shot.t,
                    g,
                });
                if f.shot.camera == CameraId::Primary {
                    let wt = triangular_weight(v);
                    if key.is_none_or(|(kw, _)| wt > kw) {
                        key = Some((wt, v));
                    }
                }
            }
            let has_sec = obs.iter().any(|o| o.camera == CameraId::Secondary);
            let Some((_, level)) = key else { continue };
            if !has_sec {
                continue;
            }
            let band = (level as usize * STRATA / LEVELS).min(STRATA - 1);
            strata[band].push(Correspondence { observations: obs });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = budget.div_ceil(STRATA).max(1);
    let mut out = Vec::new();
    for mut s in strata {
        s.shuffle(&mut rng);
        s.truncate(per);
        out.extend(s);
    }
    if out.len() < 2 {
        return Err(Error::InsufficientData(format!("{} usable correspondences", out.len())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraModel;
    use crate::planner::Shot;
    use crate::sim::{capture_shots, make_scene, SceneSpec};
    use crate::LogRadianceHistogram;
    use rand::Rng;

    #[test]
    fn weight_is_a_symmetric_hat() {
        assert_eq!(triangular_weight(0), 0.0);
        assert_eq!(triangular_weight(255), 0.0);
        let peak = (0..=255u8).map(triangular_weight).fold(0.0, f64::max);
        assert_eq!(triangular_weight(127), peak);
        for d in 0..=255u8 {
            assert_eq!(triangular_weight(d), triangular_weight(255 - d));
        }
    }

    /// Noiseless observations of random points through a known response.
    fn synthetic_corrs(e1: &Icrf, c: f64, seed: u64, points: usize) -> Vec<Correspondence> {
        let e2 = e1.offset(c);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shots = [(CameraId::Primary, 0.2), (CameraId::Primary, 0.02), (CameraId::Secondary, 0.08), (CameraId::Secondary, 0.005)];
        (0..points)
            .map(|_| {
                let r: f64 = rng.random_range(2.0..10.0);
                let observations = shots
                    .iter()
                    .filter_map(|&(cam, t)| {
                        let table = if cam == CameraId::Primary { e1 } else { &e2 };
                        // pick the pixel value whose response matches exactly
                        let target = r + f64::ln(t);
                        let d = table.quantize(target);
                        (d > 0 && d < 255).then_some(Observation {
                            camera: cam,
                            value: d,
                            t: (table.eval(d) - r).exp(),
                            g: 1.0,
                        })
                    })
                    .collect();
                Correspondence { observations }
            })
            .collect()
    }

    fn rmse_over(a: &Icrf, b: &Icrf, lo: usize, hi: usize) -> f64 {
        let n = (hi - lo + 1) as f64;
        ((lo..=hi).map(|d| (a.table()[d] - b.table()[d]).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn noiseless_recovery_is_exact() {
        // a response with zero second difference makes smoothing cost nothing
        let e1 = Icrf::new((0..256).map(|d| (d as f64 - 128.0) * 0.03).collect()).unwrap();
        for c in [0.0, 0.7] {
            let corrs = synthetic_corrs(&e1, c, 1, 3000);
            let est = estimate_joint_icrf(&corrs, 50.0, Anchor::default()).unwrap();
            assert!((est.offset_c - c).abs() < 1e-6, "c {}", est.offset_c);
            assert!(rmse_over(&est.e1, &e1, 0, 255) < 1e-6);
        }
    }

    #[test]
    fn gauge_covariance_under_exposure_doubling() {
        let e1 = CameraModel::synthetic().icrf.offset(-CameraModel::synthetic().icrf.eval(128));
        let corrs = synthetic_corrs(&e1, 0.4, 2, 2000);
        let doubled: Vec<Correspondence> = corrs
            .iter()
            .map(|c| Correspondence {
                observations: c.observations.iter().map(|o| Observation { t: o.t * 2.0, ..*o }).collect(),
            })
            .collect();
        let a = estimate_joint_icrf(&corrs, 50.0, Anchor::default()).unwrap();
        let b = estimate_joint_icrf(&doubled, 50.0, Anchor::default()).unwrap();
        assert!(rmse_over(&a.e1, &b.e1, 0, 255) < 1e-9);
        assert!((a.offset_c - b.offset_c).abs() < 1e-9);
        let mut checked = 0;
        for (ca, cb) in corrs.iter().zip(&doubled) {
            if let (Some(ra), Some(rb)) = (point_radiance(ca, &a), point_radiance(cb, &b)) {
                assert!((rb - (ra - 2f64.ln())).abs() < 1e-9);
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn rejects_thin_data() {
        let obs = |d: u8, t: f64| Observation {
            camera: CameraId::Primary,
            value: d,
            t,
            g: 1.0,
        };
        let one_exposure: Vec<Correspondence> = (1..100u8)
            .map(|d| Correspondence {
                observations: vec![obs(d, 0.1)],
            })
            .collect();
        assert!(matches!(
            estimate_joint_icrf(&one_exposure, 50.0, Anchor::default()),
            Err(Error::InsufficientData(_))
        ));
        let few_values: Vec<Correspondence> = (100..110u8)
            .map(|d| Correspondence {
                observations: vec![obs(d, 0.1), obs(d + 10, 0.2)],
            })
            .collect();
        assert!(matches!(
            estimate_joint_icrf(&few_values, 50.0, Anchor::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn primary_only_data_cannot_fix_offset() {
        let e1 = Icrf::new((0..256).map(|d| (d as f64 - 128.0) * 0.03).collect()).unwrap();
        let corrs: Vec<Correspondence> = synthetic_corrs(&e1, 0.0, 3, 1000)
            .into_iter()
            .map(|c| Correspondence {
                observations: c.observations.into_iter().filter(|o| o.camera == CameraId::Primary).collect(),
            })
            .collect();
        assert!(matches!(estimate_joint_icrf(&corrs, 50.0, Anchor::default()), Err(Error::RankDeficient)));
    }

    fn noisy_rig() -> CameraRig {
        let mut rig = CameraRig::synthetic();
        for cam in [&mut rig.primary, rig.secondary.as_mut().unwrap()] {
            cam.noise.sigma_r = 2.0;
            cam.noise.sigma_q = 1.0;
        }
        rig
    }

    fn dense_stack(rig: &CameraRig) -> Vec<Shot> {
        let mut shots = Vec::new();
        for cam in [CameraId::Primary, CameraId::Secondary] {
            for k in 0..6 {
                shots.push(Shot::new(rig, cam, 0.4 / 2f64.powi(k), 100.0, 2.0).unwrap());
            }
        }
        shots
    }

    #[test]
    fn noisy_captures_recover_response_and_offset() {
        let rig = noisy_rig();
        let target = LogRadianceHistogram::uniform(2.5, 10.5, 64);
        let scene = make_scene(&SceneSpec::new(160, 120, target, 21).with_background_disparity(5)).unwrap();
        let frames = capture_shots(&scene, &dense_stack(&rig), &rig, 7).unwrap();
        let windows: Vec<PixelWindow> = frames.iter().map(|_| PixelWindow { lo: 1, hi: 254 }).collect();
        let dm = DisparityMap::from_ground_truth(&scene.gt_disparity);
        let corrs = correspondences_from_disparity(&frames, &windows, &rig, &dm, 4000, 1).unwrap();
        let truth = &rig.primary.icrf;
        let anchor = Anchor {
            index: 128,
            value: truth.eval(128),
        };
        let est = estimate_joint_icrf(&corrs, 50.0, anchor).unwrap();
        assert!((est.offset_c - 0.4).abs() <= 0.05, "c {}", est.offset_c);
        let rmse = rmse_over(&est.e1, truth, 20, 235);
        assert!(rmse <= 0.05, "rmse {rmse}");
        assert!(est.monotonicity_violation().is_none());
    }

    #[test]
    fn shifted_disparity_raises_residual() {
        let rig = CameraRig::synthetic();
        let target = LogRadianceHistogram::uniform(2.5, 10.5, 64);
        let scene = make_scene(&SceneSpec::new(160, 120, target, 22).with_background_disparity(5)).unwrap();
        let frames = capture_shots(&scene, &dense_stack(&rig), &rig, 8).unwrap();
        let windows: Vec<PixelWindow> = frames.iter().map(|_| PixelWindow { lo: 1, hi: 254 }).collect();
        let gt = DisparityMap::from_ground_truth(&scene.gt_disparity);
        let fit = |dm: &DisparityMap| {
            let corrs = correspondences_from_disparity(&frames, &windows, &rig, dm, 3000, 2).unwrap();
            estimate_joint_icrf(&corrs, 50.0, Anchor::default()).unwrap().residual / corrs.len() as f64
        };
        assert!(fit(&gt.shifted(10.0)) > fit(&gt));
    }

    #[test]
    fn gt_correspondences_agree_across_cameras() {
        let rig = CameraRig::synthetic().noiseless();
        let target = LogRadianceHistogram::uniform(4.0, 8.0, 32);
        let scene = make_scene(&SceneSpec::new(96, 64, target, 23)).unwrap();
        let shots = [
            Shot::new(&rig, CameraId::Primary, 0.02, 100.0, 2.0).unwrap(),
            Shot::new(&rig, CameraId::Secondary, 0.02, 100.0, 2.0).unwrap(),
        ];
        let frames = capture_shots(&scene, &shots, &rig, 0).unwrap();
        let windows = vec![PixelWindow { lo: 1, hi: 254 }; 2];
        let dm = DisparityMap::from_ground_truth(&scene.gt_disparity);
        let corrs = correspondences_from_disparity(&frames, &windows, &rig, &dm, 500, 0).unwrap();
        let truth = IcrfEstimate::from_tables(&rig.primary.icrf, &rig.secondary.as_ref().unwrap().icrf);
        for c in &corrs {
            let est: Vec<f64> = c
                .observations
                .iter()
                .map(|o| truth.icrf(o.camera).eval(o.value) - o.t.ln() + o.g.ln())
                .collect();
            // each value is within half a response step of the truth
            let half_step = |o: &Observation| {
                let t = truth.icrf(o.camera);
                let d = o.value;
                0.5 * (t.eval(d.saturating_add(1)) - t.eval(d)).max(t.eval(d) - t.eval(d - 1))
            };
            let bound: f64 = c.observations.iter().map(half_step).sum();
            assert!((est[0] - est[1]).abs() <= bound + 1e-9, "{est:?}");
        }
    }

    #[test]
    fn occluded_everywhere_is_insufficient() {
        let rig = CameraRig::synthetic();
        let scene = make_scene(&SceneSpec::new(32, 32, LogRadianceHistogram::uniform(4.0, 8.0, 16), 1)).unwrap();
        let shots = [Shot::new(&rig, CameraId::Primary, 0.02, 100.0, 2.0).unwrap()];
        let frames = capture_shots(&scene, &shots, &rig, 0).unwrap();
        let dm = DisparityMap {
            values: scene.gt_disparity.clone(),
            valid: scene.gt_disparity.map(|_| false),
        };
        let err = correspondences_from_disparity(&frames, &[PixelWindow { lo: 1, hi: 254 }], &rig, &dm, 100, 0);
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }
}
