//! Log-radiance histograms and the interval algebra the planner's constraints use.
//!
//! Histogram mass is spread uniformly inside each bin, so the mass of any interval
//! is an exact piecewise-linear function of its endpoints.

use serde::{Deserialize, Serialize};

use crate::camera::{Icrf, PixelWindow};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Closed interval `[low, high]` on the log-radiance axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn width(&self) -> f64 {
        (self.high - self.low).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        !(self.high > self.low)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.low && x <= self.high
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let iv = Interval::new(self.low.max(other.low), self.high.min(other.high));
        (!iv.is_empty()).then_some(iv)
    }
}

/// Normalized union of disjoint closed intervals, sorted by `low`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    parts: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Sorts and merges; degenerate intervals are dropped.
    pub fn from_intervals(intervals: impl IntoIterator<Item = Interval>) -> Self {
        let mut v: Vec<Interval> = intervals.into_iter().filter(|iv| !iv.is_empty()).collect();
        v.sort_by(|a, b| a.low.total_cmp(&b.low));
        let mut parts: Vec<Interval> = Vec::with_capacity(v.len());
        for iv in v {
            match parts.last_mut() {
                Some(last) if iv.low <= last.high => last.high = last.high.max(iv.high),
                _ => parts.push(iv),
            }
        }
        Self { parts }
    }

    pub fn single(iv: Interval) -> Self {
        Self::from_intervals([iv])
    }

    pub fn parts(&self) -> &[Interval] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.parts.iter().map(Interval::width).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        let idx = self.parts.partition_point(|iv| iv.high < x);
        idx < self.parts.len() && self.parts[idx].contains(x)
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        IntervalSet::from_intervals(self.parts.iter().chain(&other.parts).copied())
    }

    pub fn intersection(&self, other: &IntervalSet) -> IntervalSet {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.parts.len() && j < other.parts.len() {
            let (a, b) = (self.parts[i], other.parts[j]);
            if let Some(iv) = a.intersect(&b) {
                out.push(iv);
            }
            if a.high < b.high {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet { parts: out }
    }

    /// The parts of `range` not covered by this set.
    pub fn gaps_within(&self, range: Interval) -> Vec<Interval> {
        let mut gaps = Vec::new();
        let mut cursor = range.low;
        for iv in &self.parts {
            if iv.high < cursor {
                continue;
            }
            if iv.low >= range.high {
                break;
            }
            if iv.low > cursor {
                gaps.push(Interval::new(cursor, iv.low.min(range.high)));
            }
            cursor = cursor.max(iv.high);
            if cursor >= range.high {
                break;
            }
        }
        if cursor < range.high {
            gaps.push(Interval::new(cursor, range.high));
        }
        gaps
    }

    pub fn clip(&self, range: Interval) -> IntervalSet {
        self.intersection(&IntervalSet::single(range))
    }
}

/// Binned probability density over log radiance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HistogramRepr", into = "HistogramRepr")]
pub struct LogRadianceHistogram {
    edges: Vec<f64>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    range_of_interest: Interval,
}

#[derive(Serialize, Deserialize)]
struct HistogramRepr {
    bin_edges: Vec<f64>,
    probs: Vec<f64>,
    range_of_interest: [f64; 2],
}

impl TryFrom<HistogramRepr> for LogRadianceHistogram {
    type Error = Error;
    fn try_from(r: HistogramRepr) -> Result<Self> {
        let [lo, hi] = r.range_of_interest;
        LogRadianceHistogram::new(r.bin_edges, r.probs, Interval::new(lo, hi))
    }
}

impl From<LogRadianceHistogram> for HistogramRepr {
    fn from(h: LogRadianceHistogram) -> Self {
        HistogramRepr {
            range_of_interest: [h.range_of_interest.low, h.range_of_interest.high],
            bin_edges: h.edges,
            probs: h.probs,
        }
    }
}

/// Default percentile cut of the range of interest.
pub const DEFAULT_ROI_PERCENTILES: (f64, f64) = (0.001, 0.999);

impl LogRadianceHistogram {
    pub fn new(edges: Vec<f64>, probs: Vec<f64>, range_of_interest: Interval) -> Result<Self> {
        if edges.len() != probs.len() + 1 || probs.is_empty() {
            return Err(Error::invalid("histogram needs one more edge than bins"));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) || edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::invalid("bin edges must be finite and strictly increasing"));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid("bin probabilities must be non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("bin probabilities sum to {total}, not 1")));
        }
        let (first, last) = (edges[0], *edges.last().unwrap());
        let roi = range_of_interest;
        if !(roi.low >= first && roi.high <= last && roi.high > roi.low) {
            return Err(Error::invalid("range of interest must be a non-empty sub-range of the bins"));
        }
        let mut cumulative = Vec::with_capacity(edges.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        Ok(Self {
            edges,
            probs,
            cumulative,
            range_of_interest: roi,
        })
    }

    /// Normalizes non-negative weights into a histogram.
    pub fn from_weights(edges: Vec<f64>, weights: Vec<f64>, roi: Option<Interval>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("histogram weights must have positive total"));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let full = Interval::new(edges[0], *edges.last().unwrap_or(&edges[0]));
        // re-normalize away rounding so the sum check is exact enough
        let s: f64 = probs.iter().sum();
        let probs = probs.into_iter().map(|p| p / s).collect();
        let mut h = Self::new(edges, probs, full)?;
        if let Some(roi) = roi {
            h = h.with_range_of_interest(roi)?;
        }
        Ok(h)
    }

    /// Uniform density on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Self {
        let edges = linspace(lo, hi, bins + 1);
        Self::from_weights(edges, vec![1.0; bins], None).expect("valid uniform histogram")
    }

    /// Piecewise-uniform density from `(low, high, mass)` regions (masses are normalized).
    pub fn piecewise(regions: &[(f64, f64, f64)], bins: usize) -> Result<Self> {
        let lo = regions.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let hi = regions.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        let edges = linspace(lo, hi, bins + 1);
        let weights = edges
            .windows(2)
            .map(|w| {
                regions
                    .iter()
                    .map(|&(a, b, m)| {
                        let ov = (w[1].min(b) - w[0].max(a)).max(0.0);
                        m * ov / (b - a)
                    })
                    .sum()
            })
            .collect();
        Self::from_weights(edges, weights, None)
    }

    /// Mixture of Gaussians truncated to `[lo, hi]`.
    pub fn gaussian_mixture(components: &[(f64, f64, f64)], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        let edges = linspace(lo, hi, bins + 1);
        let sub = 16;
        let weights = edges
            .windows(2)
            .map(|w| {
                let step = (w[1] - w[0]) / sub as f64;
                (0..sub)
                    .map(|k| {
                        let x = w[0] + (k as f64 + 0.5) * step;
                        components
                            .iter()
                            .map(|&(wt, mu, sd)| wt * (-(x - mu).powi(2) / (2.0 * sd * sd)).exp() / sd)
                            .sum::<f64>()
                            * step
                    })
                    .sum()
            })
            .collect();
        Self::from_weights(edges, weights, None)
    }

    /// Histogram of samples over their own range, ROI cut at the given percentiles.
    pub fn from_samples(samples: &[f64], bins: usize, percentiles: (f64, f64)) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyEstimate);
        }
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi - lo > 1e-9) {
            let half = 1e-3;
            return Self::new(vec![lo - half, lo + half], vec![1.0], Interval::new(lo - half, lo + half));
        }
        let edges = linspace(lo, hi, bins + 1);
        let mut weights = vec![0.0; bins];
        let scale = bins as f64 / (hi - lo);
        for &s in samples {
            let b = (((s - lo) * scale) as usize).min(bins - 1);
            weights[b] += 1.0;
        }
        let h = Self::from_weights(edges, weights, None)?;
        let roi = Interval::new(h.quantile(percentiles.0), h.quantile(percentiles.1));
        if roi.is_empty() {
            return Ok(h);
        }
        h.with_range_of_interest(roi)
    }

    pub fn with_range_of_interest(mut self, roi: Interval) -> Result<Self> {
        let (first, last) = (self.edges[0], *self.edges.last().unwrap());
        if !(roi.low >= first && roi.high <= last && roi.high > roi.low) {
            return Err(Error::invalid("range of interest must lie within the bins"));
        }
        self.range_of_interest = roi;
        Ok(self)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn bins(&self) -> usize {
        self.probs.len()
    }

    pub fn range_of_interest(&self) -> Interval {
        self.range_of_interest
    }

    pub fn support(&self) -> Interval {
        Interval::new(self.edges[0], *self.edges.last().unwrap())
    }

    /// Cumulative mass below `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.probs.len();
        if x <= self.edges[0] {
            return 0.0;
        }
        if x >= self.edges[n] {
            return 1.0;
        }
        let b = self.edges.partition_point(|&e| e <= x) - 1;
        let frac = (x - self.edges[b]) / (self.edges[b + 1] - self.edges[b]);
        self.cumulative[b] + frac * self.probs[b]
    }

    /// Inverse of [`cdf`](Self::cdf); flat regions resolve to their left end.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let n = self.probs.len();
        let b = self.cumulative.partition_point(|&c| c < p).clamp(1, n) - 1;
        if self.probs[b] <= 0.0 {
            return self.edges[b];
        }
        let frac = ((p - self.cumulative[b]) / self.probs[b]).clamp(0.0, 1.0);
        self.edges[b] + frac * (self.edges[b + 1] - self.edges[b])
    }

    pub fn mass_between(&self, low: f64, high: f64) -> f64 {
        if high <= low {
            return 0.0;
        }
        (self.cdf(high) - self.cdf(low)).max(0.0)
    }

    /// Probability mass of a normalized interval set.
    pub fn mass_in(&self, set: &IntervalSet) -> f64 {
        set.parts()
            .iter()
            .map(|iv| self.mass_between(iv.low, iv.high))
            .sum::<f64>()
            .min(1.0)
    }

    /// Parts of the range of interest left uncovered by `set`.
    pub fn coverage_gap(&self, set: &IntervalSet) -> Vec<Interval> {
        set.gaps_within(self.range_of_interest)
    }

    /// Histogram restricted to its range of interest and renormalized.
    pub fn restricted_to_roi(&self) -> Result<Self> {
        let roi = self.range_of_interest;
        let mut edges = vec![roi.low];
        edges.extend(self.edges.iter().copied().filter(|&e| e > roi.low && e < roi.high));
        edges.push(roi.high);
        let weights: Vec<f64> = edges.windows(2).map(|w| self.mass_between(w[0], w[1])).collect();
        Self::from_weights(edges, weights, None)
    }

    /// Per-bin masses resampled onto other edges.
    pub fn masses_on(&self, edges: &[f64]) -> Vec<f64> {
        edges.windows(2).map(|w| self.mass_between(w[0], w[1])).collect()
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    v[n - 1] = hi;
    v
}

/// One LDR frame with the metadata needed to convert it to log radiance.
#[derive(Debug, Clone, Copy)]
pub struct StackFrame<'a> {
    pub pixels: &'a Grid<u8>,
    pub t: f64,
    pub g: f64,
    pub window: PixelWindow,
    pub icrf: &'a Icrf,
}

/// Pools per-pixel log-radiance estimates from dense stacks into a histogram.
///
/// Each inner slice holds the frames of one view (one camera); estimates from the
/// frames of a view are averaged per pixel before pooling across views.
pub fn estimate_from_stack(views: &[&[StackFrame<'_>]], bins: usize) -> Result<LogRadianceHistogram> {
    let mut samples = Vec::new();
    for frames in views {
        let Some(first) = frames.first() else { continue };
        let (w, h) = (first.pixels.width(), first.pixels.height());
        if frames.iter().any(|f| f.pixels.width() != w || f.pixels.height() != h) {
            return Err(Error::invalid("frames of one view must share a size"));
        }
        for idx in 0..w * h {
            let (mut sum, mut count) = (0.0, 0usize);
            for f in frames.iter() {
                let d = f.pixels.as_slice()[idx];
                if f.window.contains(d) {
                    sum += f.icrf.eval(d) - f.t.ln() + f.g.ln();
                    count += 1;
                }
            }
            if count > 0 {
                samples.push(sum / count as f64);
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyEstimate);
    }
    LogRadianceHistogram::from_samples(&samples, bins, DEFAULT_ROI_PERCENTILES)
}
