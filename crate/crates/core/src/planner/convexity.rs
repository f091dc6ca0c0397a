//! Fixtures probing the convexity structure of the planning constraints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{predicted_disparity_error, Shot};
use crate::camera::{db_to_ratio, CameraId, CameraModel, CameraRig, Icrf, NoiseModel};
use crate::error::Result;
use crate::radiance::{Interval, IntervalSet, LogRadianceHistogram};

fn shots_for(rig: &CameraRig, cameras: &[CameraId], isos: &[f64], ts: &[f64], eta: f64) -> Result<Vec<Shot>> {
    cameras
        .iter()
        .zip(isos)
        .zip(ts)
        .map(|((&c, &iso), &t)| Shot::new(rig, c, t, iso, eta))
        .collect()
}

/// Log-radiance floor and ceiling of a camera at a gain, before the `-ln t` shift.
fn bounds(cam: &CameraModel, iso: f64, eta: f64) -> (f64, f64) {
    let g = cam.gain(iso);
    (
        cam.min_admissible_signal(g, eta).ln() + g.ln(),
        cam.log_saturation_signal() + g.ln(),
    )
}

/// Two coverage-feasible exposure vectors sharing a shot-to-camera assignment
/// and radiance ordering.
#[derive(Debug, Clone)]
pub struct CoverageProbe {
    pub rig: CameraRig,
    pub hist: LogRadianceHistogram,
    pub eta: f64,
    pub cameras: Vec<CameraId>,
    pub isos: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl CoverageProbe {
    pub fn shots(&self, ts: &[f64]) -> Result<Vec<Shot>> {
        shots_for(&self.rig, &self.cameras, &self.isos, ts, self.eta)
    }

    /// Whether the shots at `ts` leave no gap in the range of interest.
    pub fn covers(&self, ts: &[f64]) -> bool {
        match self.shots(ts) {
            Ok(shots) => self
                .hist
                .coverage_gap(&IntervalSet::from_intervals(shots.iter().map(|s| s.interval)))
                .is_empty(),
            Err(_) => false,
        }
    }

    /// `(1 - lambda) a + lambda b`, taken in exposure time.
    pub fn combination(&self, lambda: f64) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(x, y)| (1.0 - lambda) * x + lambda * y).collect()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.combination(0.5)
    }
}

/// Random coverage probe on the synthetic rig, deterministic in `seed`.
pub fn coverage_probe(seed: u64) -> CoverageProbe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rig = CameraRig::synthetic();
    let eta = db_to_ratio(3.2);
    let n = rng.random_range(2..=5usize);
    let first = if rng.random_bool(0.5) { CameraId::Primary } else { CameraId::Secondary };
    let cameras: Vec<CameraId> = (0..n).map(|i| if i % 2 == 0 { first } else { first.other() }).collect();
    let isos: Vec<f64> = cameras
        .iter()
        .map(|&c| {
            let set = &rig.camera(c).expect("dual rig").iso_set;
            set[rng.random_range(0..set.len())]
        })
        .collect();
    let bnds: Vec<(f64, f64)> = cameras
        .iter()
        .zip(&isos)
        .map(|(&c, &iso)| bounds(rig.camera(c).expect("dual rig"), iso, eta))
        .collect();

    let draw = |rng: &mut ChaCha8Rng| -> (Vec<f64>, f64) {
        let mut ts = Vec::with_capacity(n);
        let mut low = -rng.random_range(0.0..0.5);
        let mut high = 0.0;
        for &(floor, ceil) in &bnds {
            let ln_t = floor - low;
            ts.push(ln_t.exp());
            high = ceil - ln_t;
            low = high - rng.random_range(0.05..0.5) * (ceil - floor);
        }
        (ts, high)
    };
    let (a, top_a) = draw(&mut rng);
    let (b, top_b) = draw(&mut rng);
    let top = top_a.min(top_b) - 0.01;
    let hist = LogRadianceHistogram::uniform(0.0, top, 200);
    CoverageProbe {
        rig,
        hist,
        eta,
        cameras,
        isos,
        a,
        b,
    }
}

/// The three-region counterexample: two flank regions of mass `gamma_err`
/// and a central region of mass `1 - 2 gamma_err`, with two exposure
/// sequences differing only in the first secondary shot.
#[derive(Debug, Clone)]
pub struct DisparityCounterexample {
    pub rig: CameraRig,
    pub hist: LogRadianceHistogram,
    pub gamma_err: f64,
    pub eta: f64,
    /// Region bounds in log radiance, low to high.
    pub regions: [Interval; 3],
    pub cameras: Vec<CameraId>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl DisparityCounterexample {
    pub fn shots(&self, ts: &[f64]) -> Result<Vec<Shot>> {
        shots_for(&self.rig, &self.cameras, &vec![1.0; ts.len()], ts, self.eta)
    }

    pub fn disparity_error(&self, ts: &[f64]) -> Result<f64> {
        Ok(predicted_disparity_error(&self.hist, &self.shots(ts)?))
    }

    pub fn covers(&self, ts: &[f64]) -> Result<bool> {
        let shots = self.shots(ts)?;
        Ok(self
            .hist
            .coverage_gap(&IntervalSet::from_intervals(shots.iter().map(|s| s.interval)))
            .is_empty())
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(x, y)| 0.5 * (x + y)).collect()
    }
}

/// Noise-free linear-response camera with secondary width 3 and primary width 9.
fn counterexample_rig() -> CameraRig {
    let table: Vec<f64> = (0..256).map(|d| (d as f64 - 250.0) * 0.05).collect();
    let secondary = CameraModel {
        icrf: Icrf::new(table).expect("linear table is monotone"),
        noise: NoiseModel {
            sigma_r: 0.0,
            sigma_q: 0.0,
            gain_const: 1.0,
            shot_noise: false,
        },
        exposure_range: [1e-6, 1.0],
        iso_set: vec![1.0],
        d_saturation: 250,
        bit_depth: 8,
    };
    let mut primary = secondary.clone();
    primary.icrf = secondary.icrf.offset(6.0);
    CameraRig {
        primary,
        secondary: Some(secondary),
    }
}

pub fn disparity_counterexample(gamma_err: f64) -> DisparityCounterexample {
    let eta = (-3.0f64).exp();
    let rig = counterexample_rig();
    let regions = [Interval::new(0.0, 0.5), Interval::new(4.0, 5.0), Interval::new(6.0, 11.0)];
    let hist = LogRadianceHistogram::piecewise(
        &[
            (regions[0].low, regions[0].high, gamma_err),
            (regions[1].low, regions[1].high, gamma_err),
            (regions[2].low, regions[2].high, 1.0 - 2.0 * gamma_err),
        ],
        1100,
    )
    .expect("valid region layout");
    // Interval lows for floor -3: t = exp(-3 - low).
    let t = |low: f64| (-3.0 - low).exp();
    use CameraId::{Primary, Secondary};
    let cameras = vec![Primary, Secondary, Primary, Secondary, Secondary];
    let a = vec![t(0.0), t(0.0), t(2.5), t(6.0), t(8.5)];
    let b = vec![t(0.0), t(2.0), t(2.5), t(6.0), t(8.5)];
    DisparityCounterexample {
        rig,
        hist,
        gamma_err,
        eta,
        regions,
        cameras,
        a,
        b,
    }
}

/// Alternating two-camera ladder over a uniform distribution, where the summed
/// pairwise overlap mass depends on the exposures only through `t_n / t_1`.
#[derive(Debug, Clone)]
pub struct UniformProbe {
    pub rig: CameraRig,
    pub hist: LogRadianceHistogram,
    pub gamma_err: f64,
    pub eta: f64,
    pub iso: f64,
    pub cameras: Vec<CameraId>,
    /// Per-shot `(R_1, R_2)` interval bounds before the `-ln t` shift.
    pub bounds: Vec<(f64, f64)>,
}

impl UniformProbe {
    /// Uniform density `k`.
    pub fn density(&self) -> f64 {
        let s = self.hist.support();
        1.0 / s.width()
    }

    /// `k' = sum of R_2(i) - R_1(i+1)` over consecutive shots.
    pub fn k_prime(&self) -> f64 {
        self.bounds.windows(2).map(|w| w[0].1 - w[1].0).sum()
    }

    /// The half-space constant: feasible iff `t_n >= epsilon t_1`.
    pub fn epsilon(&self) -> f64 {
        ((1.0 - self.gamma_err) / self.density() - self.k_prime()).exp()
    }

    /// Exposures whose consecutive overlaps (in log radiance) are `overlaps`,
    /// with the first interval starting at 0.
    pub fn ladder(&self, overlaps: &[f64]) -> Vec<f64> {
        assert_eq!(overlaps.len() + 1, self.bounds.len(), "one overlap per consecutive pair");
        let mut ts = Vec::with_capacity(self.bounds.len());
        let mut low = 0.0;
        for (i, &(r1, r2)) in self.bounds.iter().enumerate() {
            let ln_t = r1 - low;
            ts.push(ln_t.exp());
            if let Some(o) = overlaps.get(i) {
                low = r2 - ln_t - o;
            }
        }
        ts
    }

    /// Summed histogram mass between each shot's top and the next shot's bottom.
    pub fn pairwise_mass(&self, ts: &[f64]) -> f64 {
        self.bounds
            .windows(2)
            .zip(ts.windows(2))
            .map(|(b, t)| {
                let high = b[0].1 - t[0].ln();
                let low = b[1].0 - t[1].ln();
                self.hist.mass_between(low, high)
            })
            .sum()
    }

    pub fn satisfies(&self, ts: &[f64]) -> bool {
        self.pairwise_mass(ts) >= 1.0 - self.gamma_err
    }

    pub fn satisfies_half_space(&self, ts: &[f64]) -> bool {
        ts[ts.len() - 1] >= self.epsilon() * ts[0]
    }
}

/// `n` alternating shots (primary first) on the synthetic rig at ISO 100, over a
/// uniform distribution `span` log units wide starting one unit below the ladder.
pub fn uniform_probe(n: usize, gamma_err: f64, span: f64) -> UniformProbe {
    let rig = CameraRig::synthetic();
    let eta = db_to_ratio(3.2);
    let iso = 100.0;
    let cameras: Vec<CameraId> =
        (0..n).map(|i| if i % 2 == 0 { CameraId::Primary } else { CameraId::Secondary }).collect();
    let bounds = cameras
        .iter()
        .map(|&c| bounds(rig.camera(c).expect("dual rig"), iso, eta))
        .collect();
    UniformProbe {
        hist: LogRadianceHistogram::uniform(-1.0, span - 1.0, 400),
        rig,
        gamma_err,
        eta,
        iso,
        cameras,
        bounds,
    }
}
