//! Synthetic layered stereo scenes and LDR capture simulation.
//!
//! Scenes are stacks of fronto-parallel rectangles, so ground-truth disparity is
//! an integer per layer. Each layer carries its own log-radiance field, wide
//! enough that the secondary view can be rendered without holes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraId, CameraRig, PixelWindow};
use crate::error::{Error, Result};
use crate::grid::{gaussian_blur, Grid, Mask};
use crate::planner::{CapturePlan, Shot};
use crate::radiance::{LogRadianceHistogram, DEFAULT_ROI_PERCENTILES};

/// A fronto-parallel rectangle `[x0, x1) x [y0, y1)` in primary-view pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub disparity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Disparity of the full-frame background layer.
    pub background_disparity: u32,
    /// Foreground layers; larger disparity is nearer, ties go to the later layer.
    pub layers: Vec<LayerSpec>,
    /// Distribution the primary view's log radiance is matched to.
    pub target: LogRadianceHistogram,
    /// Feature size of the fine texture, in pixels.
    pub texture_scale: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(width: usize, height: usize, target: LogRadianceHistogram, seed: u64) -> Self {
        Self {
            width,
            height,
            background_disparity: 4,
            layers: Vec::new(),
            target,
            texture_scale: 2.0,
            seed,
        }
    }

    pub fn with_layer(mut self, layer: LayerSpec) -> Self {
        self.layers.push(layer);
        self
    }

    pub fn with_background_disparity(mut self, d: u32) -> Self {
        self.background_disparity = d;
        self
    }

    /// Desk-like layout: background plus three boxes at increasing disparity.
    pub fn desk(width: usize, height: usize, target: LogRadianceHistogram, seed: u64) -> Self {
        let (w, h) = (width, height);
        Self::new(w, h, target, seed)
            .with_background_disparity(6)
            .with_layer(LayerSpec {
                x0: w / 10,
                y0: h / 2,
                x1: w / 2,
                y1: h * 9 / 10,
                disparity: 14,
            })
            .with_layer(LayerSpec {
                x0: w * 11 / 20,
                y0: h / 5,
                x1: w * 17 / 20,
                y1: h * 3 / 5,
                disparity: 22,
            })
            .with_layer(LayerSpec {
                x0: w * 3 / 10,
                y0: h / 8,
                x1: w * 9 / 20,
                y1: h * 2 / 5,
                disparity: 30,
            })
    }

    fn max_disparity(&self) -> u32 {
        self.layers.iter().map(|l| l.disparity).fold(self.background_disparity, u32::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::SpecInfeasible("scene must be at least 8x8".into()));
        }
        if self.max_disparity() as usize >= self.width {
            return Err(Error::SpecInfeasible(format!(
                "disparity {} not below image width {}",
                self.max_disparity(),
                self.width
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.x0 >= l.x1 || l.y0 >= l.y1 || l.x1 > self.width || l.y1 > self.height {
                return Err(Error::SpecInfeasible(format!("layer {i} rectangle outside the image")));
            }
        }
        if !(self.texture_scale > 0.0) {
            return Err(Error::SpecInfeasible("texture scale must be positive".into()));
        }
        Ok(())
    }
}

/// Secondary-view rendering with the mask of pixels whose scene point is also
/// visible in the primary view.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondaryView {
    pub log_radiance: Grid<f64>,
    pub visible_in_primary: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    /// Primary-view log radiance.
    pub log_radiance: Grid<f64>,
    /// Primary-to-secondary disparity: primary `x` appears at `x - d` in the secondary view.
    pub gt_disparity: Grid<f64>,
    pub texture_scale: f64,
    /// Primary pixels that the secondary camera does not see.
    pub occlusion_mask: Mask,
    secondary: SecondaryView,
}

/// Layer index owning each pixel of a view (0 is the background); `shifted`
/// selects the secondary view.
fn owners(spec: &SceneSpec, shifted: bool) -> Grid<usize> {
    let mut order: Vec<usize> = (0..spec.layers.len()).collect();
    order.sort_by_key(|&i| spec.layers[i].disparity);
    Grid::from_fn(spec.width, spec.height, |x, y| {
        let mut owner = 0;
        for &i in &order {
            let l = &spec.layers[i];
            let px = if shifted { x + l.disparity as usize } else { x };
            if px >= l.x0 && px < l.x1 && y >= l.y0 && y < l.y1 {
                owner = i + 1;
            }
        }
        owner
    })
}

fn standardized(g: Grid<f64>) -> Grid<f64> {
    let n = g.len() as f64;
    let mean = g.as_slice().iter().sum::<f64>() / n;
    let var = g.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    g.map(|v| (v - mean) / sd)
}

fn noise_field(width: usize, height: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Grid<f64> {
    let white = Grid::from_fn(width, height, |_, _| rng.sample::<f64, _>(StandardNormal));
    standardized(gaussian_blur(&white, sigma))
}

/// Monotone map sending the empirical distribution of `sorted` onto `target`.
struct QuantileMap<'a> {
    sorted: Vec<f64>,
    target: &'a LogRadianceHistogram,
}

impl QuantileMap<'_> {
    fn apply(&self, v: f64) -> f64 {
        let n = self.sorted.len();
        let i = self.sorted.partition_point(|&s| s < v);
        let rank = if i == 0 {
            0.0
        } else if i >= n {
            n as f64 - 1.0
        } else {
            let (a, b) = (self.sorted[i - 1], self.sorted[i]);
            let frac = if b > a { (v - a) / (b - a) } else { 0.5 };
            (i - 1) as f64 + frac
        };
        self.target.quantile((rank + 0.5) / n as f64)
    }
}

/// Generates a scene deterministically from its spec.
pub fn make_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let field_w = w + spec.max_disparity() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let coarse_sigma = (w.min(h) as f64 / 10.0).max(2.0);

    // raw fields: large illumination blobs, a per-layer level, and fine texture
    let fields: Vec<Grid<f64>> = (0..=spec.layers.len())
        .map(|_| {
            let level = rng.sample::<f64, _>(StandardNormal) * 0.8;
            let coarse = noise_field(field_w, h, coarse_sigma, &mut rng);
            let fine = noise_field(field_w, h, spec.texture_scale * 0.5, &mut rng);
            Grid::from_fn(field_w, h, |x, y| level + coarse.at(x, y) + 0.35 * fine.at(x, y))
        })
        .collect();

    let primary_owner = owners(spec, false);
    let secondary_owner = owners(spec, true);
    let disparity_of = |k: usize| -> u32 {
        if k == 0 {
            spec.background_disparity
        } else {
            spec.layers[k - 1].disparity
        }
    };

    let raw_primary = Grid::from_fn(w, h, |x, y| fields[primary_owner.at(x, y)].at(x, y));
    let mut sorted = raw_primary.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    let qmap = QuantileMap {
        sorted,
        target: &spec.target,
    };

    let log_radiance = raw_primary.map(|&v| qmap.apply(v));
    let gt_disparity = primary_owner.map(|&k| disparity_of(k) as f64);
    let occlusion_mask = Grid::from_fn(w, h, |x, y| {
        let k = primary_owner.at(x, y);
        let d = disparity_of(k) as usize;
        x < d || secondary_owner.at(x - d, y) != k
    });
    let secondary = SecondaryView {
        log_radiance: Grid::from_fn(w, h, |x, y| {
            let k = secondary_owner.at(x, y);
            qmap.apply(fields[k].at(x + disparity_of(k) as usize, y))
        }),
        visible_in_primary: Grid::from_fn(w, h, |x, y| {
            let k = secondary_owner.at(x, y);
            let px = x + disparity_of(k) as usize;
            px < w && primary_owner.at(px, y) == k
        }),
    };

    Ok(SyntheticScene {
        spec: spec.clone(),
        log_radiance,
        gt_disparity,
        texture_scale: spec.texture_scale,
        occlusion_mask,
        secondary,
    })
}

/// The secondary camera's view of the scene.
pub fn render_secondary(scene: &SyntheticScene) -> SecondaryView {
    scene.secondary.clone()
}

impl SyntheticScene {
    pub fn width(&self) -> usize {
        self.log_radiance.width()
    }

    pub fn height(&self) -> usize {
        self.log_radiance.height()
    }

    pub fn secondary(&self) -> &SecondaryView {
        &self.secondary
    }

    pub fn view(&self, camera: CameraId) -> &Grid<f64> {
        match camera {
            CameraId::Primary => &self.log_radiance,
            CameraId::Secondary => &self.secondary.log_radiance,
        }
    }

    /// Histogram of the primary view's log radiance.
    pub fn histogram(&self, bins: usize) -> Result<LogRadianceHistogram> {
        LogRadianceHistogram::from_samples(self.log_radiance.as_slice(), bins, DEFAULT_ROI_PERCENTILES)
    }

    /// Pixels visible in both views.
    pub fn co_visible(&self) -> Mask {
        self.occlusion_mask.map(|&o| !o)
    }
}

/// One simulated LDR frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdrImage {
    pub pixels: Grid<u8>,
    pub shot: Shot,
}

impl LdrImage {
    /// Valid pixel range for this frame's shot under SNR floor `eta`.
    pub fn window(&self, rig: &CameraRig, eta: f64) -> Result<PixelWindow> {
        let cam = rig
            .camera(self.shot.camera)
            .ok_or_else(|| Error::invalid("frame references a missing camera"))?;
        Ok(cam.pixel_window(cam.gain(self.shot.iso), eta))
    }

    pub fn valid_mask(&self, rig: &CameraRig, eta: f64) -> Result<Mask> {
        let win = self.window(rig, eta)?;
        Ok(self.pixels.map(|&d| win.contains(d)))
    }
}

/// Simulates every shot of `plan`; frame `i` uses its own seeded noise stream.
pub fn capture_stack(scene: &SyntheticScene, plan: &CapturePlan, rig: &CameraRig, seed: u64) -> Result<Vec<LdrImage>> {
    capture_shots(scene, &plan.shots, rig, seed)
}

pub fn capture_shots(scene: &SyntheticScene, shots: &[Shot], rig: &CameraRig, seed: u64) -> Result<Vec<LdrImage>> {
    for (i, s) in shots.iter().enumerate() {
        let cam = rig
            .camera(s.camera)
            .ok_or_else(|| Error::invalid(format!("shot {i} uses a missing camera")))?;
        if !cam.supports_iso(s.iso) {
            return Err(Error::invalid(format!("shot {i}: ISO {} unsupported", s.iso)));
        }
        if !cam.supports_exposure(s.t) {
            return Err(Error::invalid(format!("shot {i}: exposure {} s outside hardware range", s.t)));
        }
    }
    Ok(shots
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let cam = rig.camera(s.camera).expect("checked above");
            let g = cam.gain(s.iso);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let pixels = scene.view(s.camera).map(|&r| cam.expose_pixel(r.exp(), s.t, g, &mut rng));
            LdrImage { pixels, shot: *s }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{plan, PlannerConfig};
    use crate::radiance::IntervalSet;

    fn bimodal() -> LogRadianceHistogram {
        LogRadianceHistogram::gaussian_mixture(&[(0.6, 5.5, 0.7), (0.4, 9.0, 0.8)], 3.0, 11.0, 40).unwrap()
    }

    #[test]
    fn constant_single_layer_disparity() {
        let s = make_scene(&SceneSpec::new(64, 48, bimodal(), 1).with_background_disparity(8)).unwrap();
        assert!(s.gt_disparity.as_slice().iter().all(|&d| d == 8.0));
    }

    #[test]
    fn histogram_matches_target_per_bin() {
        let target = bimodal();
        let s = make_scene(&SceneSpec::desk(160, 120, target.clone(), 3)).unwrap();
        let mut counts = vec![0usize; target.bins()];
        for &v in s.log_radiance.as_slice() {
            let i = target.edges().partition_point(|&e| e <= v).clamp(1, target.bins()) - 1;
            counts[i] += 1;
        }
        let n = s.log_radiance.len() as f64;
        for (c, p) in counts.iter().zip(target.probs()) {
            assert!((*c as f64 / n - p).abs() <= 0.02);
        }
    }

    #[test]
    fn three_region_layout_reproduced() {
        let g = 0.1;
        let target = LogRadianceHistogram::piecewise(
            &[(4.0, 4.5, g), (8.0, 9.0, g), (10.0, 15.0, 1.0 - 2.0 * g)],
            110,
        )
        .unwrap();
        let s = make_scene(&SceneSpec::desk(120, 90, target, 9)).unwrap();
        let n = s.log_radiance.len() as f64;
        let frac = |a: f64, b: f64| s.log_radiance.as_slice().iter().filter(|&&v| v >= a && v <= b).count() as f64 / n;
        assert!((frac(4.0, 4.5) - g).abs() < 0.02);
        assert!((frac(8.0, 9.0) - g).abs() < 0.02);
        assert!((frac(10.0, 15.0) - (1.0 - 2.0 * g)).abs() < 0.02);
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = SceneSpec::desk(80, 60, bimodal(), 5);
        assert_eq!(make_scene(&spec).unwrap(), make_scene(&spec).unwrap());
        let other = make_scene(&SceneSpec { seed: 6, ..spec.clone() }).unwrap();
        assert_ne!(other.log_radiance, make_scene(&spec).unwrap().log_radiance);
    }

    #[test]
    fn rejects_oversized_layers() {
        let spec = SceneSpec::new(32, 32, bimodal(), 0).with_background_disparity(40);
        assert!(matches!(make_scene(&spec), Err(Error::SpecInfeasible(_))));
        let spec = SceneSpec::new(32, 32, bimodal(), 0).with_layer(LayerSpec {
            x0: 10,
            y0: 0,
            x1: 40,
            y1: 10,
            disparity: 5,
        });
        assert!(matches!(make_scene(&spec), Err(Error::SpecInfeasible(_))));
    }

    #[test]
    fn zero_disparity_secondary_equals_primary() {
        let s = make_scene(&SceneSpec::new(48, 32, bimodal(), 2).with_background_disparity(0)).unwrap();
        let sec = render_secondary(&s);
        assert_eq!(sec.log_radiance, s.log_radiance);
        assert_eq!(s.occlusion_mask.count(), 0);
    }

    #[test]
    fn occlusion_band_matches_disparity_gap() {
        let spec = SceneSpec::new(80, 40, bimodal(), 4).with_background_disparity(3).with_layer(LayerSpec {
            x0: 40,
            y0: 10,
            x1: 60,
            y1: 30,
            disparity: 8,
        });
        let s = make_scene(&spec).unwrap();
        let y = 20;
        let band: Vec<usize> = (3..80).filter(|&x| *s.occlusion_mask.get(x, y)).collect();
        assert_eq!(band, (35..40).collect::<Vec<_>>());
        // rows outside the layer only lose the left border
        assert!((3..80).all(|x| !*s.occlusion_mask.get(x, 5)));
    }

    #[test]
    fn unoccluded_pixels_round_trip() {
        let s = make_scene(&SceneSpec::desk(96, 64, bimodal(), 8)).unwrap();
        let sec = render_secondary(&s);
        for y in 0..s.height() {
            for x in 0..s.width() {
                if !*s.occlusion_mask.get(x, y) {
                    let xs = x - s.gt_disparity.at(x, y) as usize;
                    assert_eq!(sec.log_radiance.at(xs, y), s.log_radiance.at(x, y));
                    assert!(*sec.visible_in_primary.get(xs, y));
                }
            }
        }
    }

    fn single_shot(rig: &CameraRig, cam: CameraId, t: f64) -> Shot {
        Shot::new(rig, cam, t, 100.0, 2.0).unwrap()
    }

    #[test]
    fn noiseless_capture_inverts_to_radiance() {
        let rig = CameraRig::synthetic().noiseless();
        let target = LogRadianceHistogram::uniform(5.0, 8.0, 30);
        let s = make_scene(&SceneSpec::new(40, 30, target, 1)).unwrap();
        // interval for t = e^-3 at gain 1 spans roughly [1.9, 9.96]
        let shot = single_shot(&rig, CameraId::Primary, (-3.0f64).exp());
        let frames = capture_shots(&s, &[shot], &rig, 0).unwrap();
        let icrf = &rig.primary.icrf;
        for (d, r) in frames[0].pixels.as_slice().iter().zip(s.log_radiance.as_slice()) {
            assert!(*d > 0 && *d < rig.primary.d_saturation);
            let back = icrf.eval(*d) + 3.0;
            let step = (icrf.eval(*d + 1) - icrf.eval(*d)).max(icrf.eval(*d) - icrf.eval(*d - 1));
            assert!((back - r).abs() <= step, "{back} vs {r}");
        }
    }

    #[test]
    fn overexposed_shot_saturates() {
        let rig = CameraRig::synthetic();
        let s = make_scene(&SceneSpec::new(40, 30, LogRadianceHistogram::uniform(9.0, 11.0, 20), 1)).unwrap();
        let frames = capture_shots(&s, &[single_shot(&rig, CameraId::Primary, 3.2)], &rig, 0).unwrap();
        assert!(frames[0].pixels.as_slice().iter().all(|&d| d == 255));
    }

    #[test]
    fn capture_rejects_unsupported_iso() {
        let rig = CameraRig::synthetic();
        let s = make_scene(&SceneSpec::new(16, 16, bimodal(), 1)).unwrap();
        let mut shot = single_shot(&rig, CameraId::Primary, 0.01);
        shot.iso = 123.0;
        let err = capture_shots(&s, &[shot], &rig, 0).unwrap_err();
        assert!(err.to_string().contains("shot 0"));
    }

    #[test]
    fn capture_is_deterministic() {
        let rig = CameraRig::synthetic();
        let s = make_scene(&SceneSpec::desk(64, 48, bimodal(), 1)).unwrap();
        let p = plan(&bimodal(), &rig, &PlannerConfig::joint()).unwrap();
        assert_eq!(capture_stack(&s, &p, &rig, 42).unwrap(), capture_stack(&s, &p, &rig, 42).unwrap());
    }

    #[test]
    fn invalid_fraction_matches_coverage_prediction() {
        let rig = CameraRig::synthetic();
        let cfg = PlannerConfig::hdr_only();
        let s = make_scene(&SceneSpec::desk(160, 120, bimodal(), 12)).unwrap();
        let hist = s.histogram(80).unwrap();
        let p = plan(&hist, &rig, &cfg).unwrap();
        let frames = capture_stack(&s, &p, &rig, 3).unwrap();
        let primary: Vec<&LdrImage> = frames.iter().filter(|f| f.shot.camera == CameraId::Primary).collect();
        let masks: Vec<Mask> = primary.iter().map(|f| f.valid_mask(&rig, cfg.eta).unwrap()).collect();
        let n = s.log_radiance.len();
        let invalid = (0..n).filter(|&i| masks.iter().all(|m| !m.as_slice()[i])).count() as f64 / n as f64;
        let cover = IntervalSet::from_intervals(p.shots.iter().filter(|s| s.camera == CameraId::Primary).map(|s| s.interval));
        let inside = s.log_radiance.as_slice().iter().filter(|&&r| cover.contains(r)).count() as f64 / n as f64;
        assert!((invalid - (1.0 - inside)).abs() <= 0.03, "{invalid} vs {}", 1.0 - inside);
    }
}
