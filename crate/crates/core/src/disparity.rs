//! Stereo matching on tone-mapped radiance, with simulated saturation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::radiance::Interval;

/// Per-camera fused log-radiance maps with their valid ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiancePair {
    pub q1: Grid<f64>,
    pub q2: Grid<f64>,
    pub valid1: Mask,
    pub valid2: Mask,
    pub range1: Interval,
    pub range2: Interval,
}

fn valid_range(q: &Grid<f64>, valid: &Mask) -> Result<Interval> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (v, &ok) in q.as_slice().iter().zip(valid.as_slice()) {
        if ok {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if lo > hi {
        return Err(Error::EmptyMask);
    }
    Ok(Interval::new(lo, hi))
}

impl RadiancePair {
    /// Builds a pair, taking each range from the valid pixels of its map.
    pub fn new(q1: Grid<f64>, valid1: Mask, q2: Grid<f64>, valid2: Mask) -> Result<Self> {
        if !q1.same_shape(&valid1) || !q2.same_shape(&valid2) {
            return Err(Error::invalid("radiance map and mask sizes differ"));
        }
        let range1 = valid_range(&q1, &valid1)?;
        let range2 = valid_range(&q2, &valid2)?;
        Ok(Self {
            q1,
            q2,
            valid1,
            valid2,
            range1,
            range2,
        })
    }

    /// `[max of lows, min of highs]`.
    pub fn common_range(&self) -> Result<Interval> {
        let low = self.range1.low.max(self.range2.low);
        let high = self.range1.high.min(self.range2.high);
        if high <= low {
            return Err(Error::NoCommonRange { low, high });
        }
        Ok(Interval::new(low, high))
    }
}

/// Clamps both maps to the range both cameras can measure.
pub fn simulated_saturation(pair: &RadiancePair) -> Result<RadiancePair> {
    let common = pair.common_range()?;
    let clamp = |g: &Grid<f64>| g.map(|v| v.clamp(common.low, common.high));
    Ok(RadiancePair {
        q1: clamp(&pair.q1),
        q2: clamp(&pair.q2),
        valid1: pair.valid1.clone(),
        valid2: pair.valid2.clone(),
        range1: common,
        range2: common,
    })
}

/// Affine map of log radiance over `range` to `[0, 255]`, clamped.
pub fn tone_map(map: &Grid<f64>, range: Interval) -> Grid<u8> {
    let width = range.width();
    map.map(|&v| {
        if !(width > 0.0) {
            return 0;
        }
        let u = ((v - range.low) / width).clamp(0.0, 1.0);
        (u * 255.0).round() as u8
    })
}

/// Disparity per primary pixel; primary `x` matches secondary `x - d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityMap {
    pub values: Grid<f64>,
    pub valid: Mask,
}

impl DisparityMap {
    pub fn from_ground_truth(gt: &Grid<f64>) -> Self {
        Self {
            values: gt.clone(),
            valid: gt.map(|_| true),
        }
    }

    pub fn constant(width: usize, height: usize, d: f64) -> Self {
        Self {
            values: Grid::filled(width, height, d),
            valid: Grid::filled(width, height, true),
        }
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid.count() as f64 / self.valid.len().max(1) as f64
    }

    /// Same map with every value shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            values: self.values.map(|v| v + delta),
            valid: self.valid.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparityConfig {
    /// Odd block side length.
    pub block: usize,
    /// Exclusive upper bound on the search range.
    pub max_disparity: usize,
    /// Left-right consistency tolerance in pixels.
    pub lr_tolerance: f64,
    /// Best cost must beat the best non-adjacent cost by this factor.
    pub uniqueness: f64,
}

impl Default for DisparityConfig {
    fn default() -> Self {
        Self {
            block: 9,
            max_disparity: 48,
            lr_tolerance: 1.0,
            uniqueness: 0.97,
        }
    }
}

/// Summed-area table with one row and column of zero padding.
struct Integral {
    w: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(values: &[f64], w: usize, h: usize) -> Self {
        let mut sums = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += values[y * w + x];
                sums[(y + 1) * (w + 1) + x + 1] = sums[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w, sums }
    }

    /// Sum over `[x0, x1) x [y0, y1)`.
    fn rect(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = |x: usize, y: usize| self.sums[y * (self.w + 1) + x];
        s(x1, y1) - s(x0, y1) - s(x1, y0) + s(x0, y0)
    }
}

/// Image minus its local block mean.
fn mean_removed(img: &Grid<u8>, r: usize) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let vals: Vec<f64> = img.as_slice().iter().map(|&v| v as f64).collect();
    let integ = Integral::new(&vals, w, h);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            out[y * w + x] = vals[y * w + x] - integ.rect(x0, y0, x1, y1) / n;
        }
    }
    out
}

/// Winner-take-all over a cost column; returns (best index, best cost, best
/// cost among indices not adjacent to the winner).
fn winner(costs: &[f64]) -> Option<(usize, f64, f64)> {
    let (best, &c) = costs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let second = costs
        .iter()
        .enumerate()
        .filter(|(d, c)| c.is_finite() && d.abs_diff(best) > 1)
        .map(|(_, &c)| c)
        .fold(f64::INFINITY, f64::min);
    Some((best, c, second))
}

/// Block matching with mean-removed SAD, a left-right check and a uniqueness test.
pub fn estimate_disparity(left: &Grid<u8>, right: &Grid<u8>, config: &DisparityConfig) -> Result<DisparityMap> {
    if !left.same_shape(right) {
        return Err(Error::invalid("stereo images differ in size"));
    }
    if config.block.is_multiple_of(2) {
        return Err(Error::invalid("block size must be odd"));
    }
    let (w, h) = (left.width(), left.height());
    let r = config.block / 2;
    let nd = config.max_disparity.max(1);
    let l = mean_removed(left, r);
    let rt = mean_removed(right, r);
    // mean cost gap below this is rounding noise, as on textureless blocks
    let min_margin = 1e-9;

    // cost[d][y * w + x]: mean absolute difference between left (x, y) and right (x - d, y)
    let cost: Vec<Vec<f64>> = (0..nd)
        .into_par_iter()
        .map(|d| {
            let diff: Vec<f64> = (0..w * h)
                .map(|i| {
                    let x = i % w;
                    if x >= d {
                        (l[i] - rt[i - d]).abs()
                    } else {
                        0.0
                    }
                })
                .collect();
            let integ = Integral::new(&diff, w, h);
            (0..w * h)
                .map(|i| {
                    let (x, y) = (i % w, i / w);
                    if x < d {
                        return f64::INFINITY;
                    }
                    // window clipped to the image and to columns with a match
                    let (x0, x1) = ((x.saturating_sub(r)).max(d), (x + r + 1).min(w));
                    let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
                    integ.rect(x0, y0, x1, y1) / ((x1 - x0) * (y1 - y0)) as f64
                })
                .collect()
        })
        .collect();

    let pick = |i: usize, right_view: bool| -> Option<(usize, f64, f64)> {
        let x = i % w;
        let column: Vec<f64> = (0..nd)
            .map(|d| {
                if right_view {
                    // right pixel x matches left pixel x + d
                    if x + d < w {
                        cost[d][i + d]
                    } else {
                        f64::INFINITY
                    }
                } else {
                    cost[d][i]
                }
            })
            .collect();
        winner(&column)
    };

    let right_disp: Vec<Option<usize>> = (0..w * h).into_par_iter().map(|i| pick(i, true).map(|p| p.0)).collect();
    let out: Vec<(f64, bool)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let Some((d, best, second)) = pick(i, false) else {
                return (0.0, false);
            };
            let unique = second.is_finite() && best < config.uniqueness * second && second - best > min_margin;
            let consistent = right_disp[i - d].is_some_and(|dr| (dr as f64 - d as f64).abs() <= config.lr_tolerance);
            (d as f64, unique && consistent)
        })
        .collect();

    Ok(DisparityMap {
        values: Grid::from_vec(w, h, out.iter().map(|p| p.0).collect()),
        valid: Grid::from_vec(w, h, out.iter().map(|p| p.1).collect()),
    })
}

/// Fraction of masked pixels that are invalid or off by more than `threshold_px`.
pub fn disparity_error(est: &DisparityMap, gt: &Grid<f64>, threshold_px: f64, mask: &Mask) -> Result<f64> {
    if !est.values.same_shape(gt) || !gt.same_shape(mask) {
        return Err(Error::invalid("disparity grids differ in size"));
    }
    let mut total = 0usize;
    let mut wrong = 0usize;
    for i in 0..gt.len() {
        if !mask.as_slice()[i] {
            continue;
        }
        total += 1;
        if !est.valid.as_slice()[i] || (est.values.as_slice()[i] - gt.as_slice()[i]).abs() > threshold_px {
            wrong += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(wrong as f64 / total as f64)
}
