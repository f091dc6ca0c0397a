//! Iterative disparity and joint-ICRF estimation followed by warping and fusion.

use serde::{Deserialize, Serialize};

use crate::camera::{CameraId, CameraRig, Icrf, PixelWindow};
use crate::disparity::{
    disparity_error, estimate_disparity, simulated_saturation, tone_map, DisparityConfig, DisparityMap, RadiancePair,
};
use crate::error::{Error, Result};
use crate::fusion::{fuse, per_camera_hdr, to_radiance, warp_to_primary, RadianceMap, ShotRadiance, DEFAULT_FUSION_SIGMA};
use crate::grid::{Grid, Mask};
use crate::icrf::{correspondences_from_disparity, estimate_joint_icrf, Anchor, IcrfEstimate};
use crate::planner::DEFAULT_ETA_DB;
use crate::sim::LdrImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// ICRF/disparity refinement rounds after the initial disparity.
    pub iterations: usize,
    /// SNR floor (power ratio) defining valid pixels.
    pub eta: f64,
    pub disparity: DisparityConfig,
    pub lambda_sm: f64,
    pub correspondence_budget: usize,
    pub fusion_sigma: f64,
    pub simulated_saturation: bool,
    /// Pixel value at which the estimated `e1` is pinned to the init ICRF.
    pub anchor_index: u8,
    /// Bad-pixel threshold for the ground-truth disparity diagnostic.
    pub error_threshold_px: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            eta: crate::camera::db_to_ratio(DEFAULT_ETA_DB),
            disparity: DisparityConfig::default(),
            lambda_sm: 50.0,
            correspondence_budget: 4000,
            fusion_sigma: DEFAULT_FUSION_SIGMA,
            simulated_saturation: true,
            anchor_index: 128,
            error_threshold_px: 4.0,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("pipeline needs at least one iteration"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta must be positive"));
        }
        if !(self.lambda_sm >= 0.0) || !(self.fusion_sigma >= 0.0) {
            return Err(Error::invalid("lambda and sigma must be non-negative"));
        }
        Ok(())
    }
}

/// Ground truth used only for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub disparity: Grid<f64>,
    /// Pixels on which disparity is scored.
    pub mask: Mask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    pub cross_camera_radiance_error: f64,
    /// Mean absolute disparity error on the ground-truth mask.
    pub mean_abs_disparity_error: Option<f64>,
    /// Fraction of masked pixels off by more than the threshold.
    pub disparity_error: Option<f64>,
    pub offset_c: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub radiance: RadianceMap,
    pub disparity: DisparityMap,
    pub icrf: IcrfEstimate,
    pub diagnostics: Vec<IterationDiagnostics>,
}

/// Mean `|q1 - q2|` over `mask` where both maps are valid.
pub fn cross_camera_radiance_error(q1: &ShotRadiance, q2_warped: &ShotRadiance, mask: &Mask) -> Result<f64> {
    if !q1.values.same_shape(&q2_warped.values) || !q1.values.same_shape(mask) {
        return Err(Error::invalid("map and mask sizes differ"));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..mask.len() {
        if mask.as_slice()[i] && q1.weights.as_slice()[i] > 0.0 && q2_warped.weights.as_slice()[i] > 0.0 {
            sum += (q1.values.as_slice()[i] - q2_warped.values.as_slice()[i]).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / n as f64)
}

impl RadianceMap {
    /// Values with confidence as weights, for warping and comparison.
    pub fn as_shot(&self) -> ShotRadiance {
        ShotRadiance {
            values: self.values.clone(),
            weights: self.confidence.clone(),
        }
    }
}

struct Stack<'a> {
    frames: &'a [LdrImage],
    gains: Vec<f64>,
}

impl<'a> Stack<'a> {
    fn new(frames: &'a [LdrImage], rig: &CameraRig) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::invalid("empty frame stack"))?;
        let (w, h) = (first.pixels.width(), first.pixels.height());
        let mut gains = Vec::with_capacity(frames.len());
        for (i, f) in frames.iter().enumerate() {
            if f.pixels.width() != w || f.pixels.height() != h {
                return Err(Error::invalid(format!("frame {i} differs in size")));
            }
            let cam = rig
                .camera(f.shot.camera)
                .ok_or_else(|| Error::invalid(format!("frame {i} uses a missing camera")))?;
            gains.push(cam.gain(f.shot.iso));
        }
        if !frames.iter().any(|f| f.shot.camera == CameraId::Primary) {
            return Err(Error::invalid("stack has no primary frame"));
        }
        Ok(Self { frames, gains })
    }

    fn has_secondary(&self) -> bool {
        self.frames.iter().any(|f| f.shot.camera == CameraId::Secondary)
    }

    fn windows(&self, rig: &CameraRig, est: &IcrfEstimate, eta: f64) -> Vec<PixelWindow> {
        self.frames
            .iter()
            .zip(&self.gains)
            .map(|(f, &g)| {
                let mut cam = rig.camera(f.shot.camera).cloned().expect("camera checked in Stack::new");
                cam.icrf = est.icrf(f.shot.camera);
                cam.pixel_window(g, eta)
            })
            .collect()
    }

    fn radiance(&self, camera: CameraId, icrf: &Icrf, windows: &[PixelWindow]) -> Vec<ShotRadiance> {
        self.indices(camera)
            .map(|i| to_radiance(&self.frames[i], icrf, self.gains[i], windows[i]))
            .collect()
    }

    fn indices(&self, camera: CameraId) -> impl Iterator<Item = usize> + '_ {
        (0..self.frames.len()).filter(move |&i| self.frames[i].shot.camera == camera)
    }

    /// Pixels no shot measured get the midpoint of the radiance bracket their
    /// frames imply: above every saturated frame's ceiling and below every
    /// dark frame's floor, clamped to the measured range.
    fn filled(&self, camera: CameraId, q: &RadianceMap, icrf: &Icrf, windows: &[PixelWindow]) -> Result<(Grid<f64>, Mask)> {
        let valid = q.valid();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (v, &ok) in q.values.as_slice().iter().zip(valid.as_slice()) {
            if ok {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        if lo > hi {
            return Err(Error::EmptyEstimate);
        }
        let bounds: Vec<(usize, f64, f64)> = self
            .indices(camera)
            .map(|i| {
                let shift = self.gains[i].ln() - self.frames[i].shot.t.ln();
                (i, icrf.eval(windows[i].lo) + shift, icrf.eval(windows[i].hi) + shift)
            })
            .collect();
        let mut values = q.values.clone();
        for (p, v) in values.as_mut_slice().iter_mut().enumerate() {
            if valid.as_slice()[p] {
                continue;
            }
            let (mut above, mut below) = (lo, hi);
            for &(i, floor, ceiling) in &bounds {
                let d = self.frames[i].pixels.as_slice()[p];
                if d > windows[i].hi {
                    above = above.max(ceiling);
                } else if d < windows[i].lo {
                    below = below.min(floor);
                }
            }
            *v = if above <= below { 0.5 * (above + below) } else { above }.clamp(lo, hi);
        }
        Ok((values, valid))
    }
}

struct Round {
    q1: RadianceMap,
    q2: RadianceMap,
    disparity: DisparityMap,
}

fn estimate_round(stack: &Stack, rig: &CameraRig, est: &IcrfEstimate, config: &PipelineConfig) -> Result<Round> {
    let windows = stack.windows(rig, est, config.eta);
    let q1 = per_camera_hdr(&stack.radiance(CameraId::Primary, &est.e1, &windows), config.fusion_sigma)?;
    let q2 = per_camera_hdr(&stack.radiance(CameraId::Secondary, &est.e2(), &windows), config.fusion_sigma)?;
    let (f1, v1) = stack.filled(CameraId::Primary, &q1, &est.e1, &windows)?;
    let (f2, v2) = stack.filled(CameraId::Secondary, &q2, &est.e2(), &windows)?;
    let mut pair = RadiancePair::new(f1, v1, f2, v2)?;
    if config.simulated_saturation {
        pair = simulated_saturation(&pair)?;
    }
    let left = tone_map(&pair.q1, pair.range1);
    let right = tone_map(&pair.q2, pair.range2);
    let disparity = estimate_disparity(&left, &right, &config.disparity)?;
    Ok(Round { q1, q2, disparity })
}

fn diagnose(
    iteration: usize,
    round: &Round,
    est: &IcrfEstimate,
    gt: Option<&GroundTruth>,
    config: &PipelineConfig,
) -> Result<IterationDiagnostics> {
    let warped = warp_to_primary(&round.q2.as_shot(), &round.disparity);
    let mask = round.disparity.valid.and(&gt.map_or_else(|| round.q1.valid(), |g| g.mask.clone()));
    let cross = cross_camera_radiance_error(&round.q1.as_shot(), &warped, &mask)?;
    let (mean_abs, bad) = match gt {
        Some(g) => {
            let (mut sum, mut n) = (0.0, 0usize);
            for i in 0..g.mask.len() {
                if g.mask.as_slice()[i] && round.disparity.valid.as_slice()[i] {
                    sum += (round.disparity.values.as_slice()[i] - g.disparity.as_slice()[i]).abs();
                    n += 1;
                }
            }
            let bad = disparity_error(&round.disparity, &g.disparity, config.error_threshold_px, &g.mask)?;
            ((n > 0).then(|| sum / n as f64), Some(bad))
        }
        None => (None, None),
    };
    Ok(IterationDiagnostics {
        iteration,
        cross_camera_radiance_error: cross,
        mean_abs_disparity_error: mean_abs,
        disparity_error: bad,
        offset_c: est.offset_c,
    })
}

/// Final stage: converts every frame with `est`, warps secondary frames by
/// `disparity` and fuses primary-first.
pub fn fuse_stack(
    frames: &[LdrImage],
    rig: &CameraRig,
    est: &IcrfEstimate,
    disparity: Option<&DisparityMap>,
    config: &PipelineConfig,
) -> Result<RadianceMap> {
    let stack = Stack::new(frames, rig)?;
    let windows = stack.windows(rig, est, config.eta);
    let primary = stack.radiance(CameraId::Primary, &est.e1, &windows);
    let secondary: Vec<ShotRadiance> = match disparity {
        Some(d) => stack
            .radiance(CameraId::Secondary, &est.e2(), &windows)
            .iter()
            .map(|m| warp_to_primary(m, d))
            .collect(),
        None => Vec::new(),
    };
    fuse(&primary, &secondary, config.fusion_sigma)
}

/// Replaces unmeasured pixels of a fused map with the radiance their primary
/// frames bracket.
pub fn fill_unmeasured(
    frames: &[LdrImage],
    rig: &CameraRig,
    est: &IcrfEstimate,
    map: &RadianceMap,
    eta: f64,
) -> Result<Grid<f64>> {
    let stack = Stack::new(frames, rig)?;
    let windows = stack.windows(rig, est, eta);
    stack.filled(CameraId::Primary, map, &est.e1, &windows).map(|(v, _)| v)
}

/// Runs the full reconstruction from an initial ICRF pair.
///
/// Diagnostics hold one entry for the initial disparity plus one per
/// iteration. Without secondary frames only the primary HDR is produced.
pub fn run(
    frames: &[LdrImage],
    rig: &CameraRig,
    init: &IcrfEstimate,
    config: &PipelineConfig,
    gt: Option<&GroundTruth>,
) -> Result<Reconstruction> {
    config.validate()?;
    let stack = Stack::new(frames, rig)?;
    let (w, h) = (frames[0].pixels.width(), frames[0].pixels.height());
    if !stack.has_secondary() {
        let radiance = fuse_stack(frames, rig, init, None, config)?;
        return Ok(Reconstruction {
            radiance,
            disparity: DisparityMap {
                values: Grid::filled(w, h, 0.0),
                valid: Grid::filled(w, h, false),
            },
            icrf: init.clone(),
            diagnostics: Vec::new(),
        });
    }
    let anchor = Anchor {
        index: config.anchor_index,
        value: init.e1.eval(config.anchor_index),
    };

    let mut est = init.clone();
    let mut round = estimate_round(&stack, rig, &est, config).map_err(|e| e.at_iteration(0))?;
    let mut diagnostics = vec![diagnose(0, &round, &est, gt, config).map_err(|e| e.at_iteration(0))?];
    for k in 1..=config.iterations {
        let step = || -> Result<(IcrfEstimate, Round)> {
            let windows = stack.windows(rig, &est, config.eta);
            let corrs = correspondences_from_disparity(
                frames,
                &windows,
                rig,
                &round.disparity,
                config.correspondence_budget,
                config.seed.wrapping_add(k as u64),
            )?;
            let next = estimate_joint_icrf(&corrs, config.lambda_sm, anchor)?;
            let r = estimate_round(&stack, rig, &next, config)?;
            Ok((next, r))
        };
        let (next, r) = step().map_err(|e| e.at_iteration(k))?;
        est = next;
        round = r;
        diagnostics.push(diagnose(k, &round, &est, gt, config).map_err(|e| e.at_iteration(k))?);
    }

    let radiance = fuse_stack(frames, rig, &est, Some(&round.disparity), config)?;
    Ok(Reconstruction {
        radiance,
        disparity: round.disparity,
        icrf: est,
        diagnostics,
    })
}

/// CSV with header `iteration,cross_camera_radiance_error,mean_abs_disparity_error,disparity_error,offset_c`.
pub fn diagnostics_csv(diagnostics: &[IterationDiagnostics]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = String::from("iteration,cross_camera_radiance_error,mean_abs_disparity_error,disparity_error,offset_c\n");
    for d in diagnostics {
        out.push_str(&format!(
            "{},{:.6},{},{},{:.6}\n",
            d.iteration,
            d.cross_camera_radiance_error,
            opt(d.mean_abs_disparity_error),
            opt(d.disparity_error),
            d.offset_c
        ));
    }
    out
}
