//! Radiance conversion, secondary-to-primary warping and HDR fusion.

use serde::{Deserialize, Serialize};

use crate::camera::{Icrf, PixelWindow};
use crate::disparity::DisparityMap;
use crate::error::{Error, Result};
use crate::grid::{gaussian_blur, Grid, Mask};
use crate::icrf::triangular_weight;
use crate::sim::LdrImage;

/// Default sigma (pixels) of the Gaussian applied to fusion weights.
pub const DEFAULT_FUSION_SIGMA: f64 = 2.0;

/// Log-radiance estimates of one shot; weight 0 marks invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotRadiance {
    pub values: Grid<f64>,
    pub weights: Grid<f64>,
}

impl ShotRadiance {
    pub fn valid(&self) -> Mask {
        self.weights.map(|&w| w > 0.0)
    }
}

/// Which shot dominated a fused pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    None,
    Primary(usize),
    Secondary(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadianceMap {
    pub values: Grid<f64>,
    pub confidence: Grid<f64>,
    pub source: Grid<Source>,
}

impl RadianceMap {
    pub fn valid(&self) -> Mask {
        self.confidence.map(|&c| c > 0.0)
    }
}

/// `R = e(d) - ln t + ln g` inside the pixel window, triangular weight as confidence.
pub fn to_radiance(img: &LdrImage, icrf: &Icrf, g: f64, window: PixelWindow) -> ShotRadiance {
    let shift = g.ln() - img.shot.t.ln();
    ShotRadiance {
        values: img.pixels.map(|&d| icrf.eval(d) + shift),
        weights: img.pixels.map(|&d| if window.contains(d) { triangular_weight(d) } else { 0.0 }),
    }
}

/// Backward warp: primary pixel `x` samples the source at `x - d`, linearly
/// between valid neighbours and nearest otherwise.
pub fn warp_grid(values: &Grid<f64>, valid: &Mask, disparity: &DisparityMap) -> (Grid<f64>, Mask) {
    let (w, h) = (values.width(), values.height());
    let mut out = Grid::filled(w, h, 0.0);
    let mut ok = Grid::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !*disparity.valid.get(x, y) {
                continue;
            }
            let xs = x as f64 - disparity.values.at(x, y);
            if xs < 0.0 || xs > (w - 1) as f64 {
                continue;
            }
            let x0 = xs.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let f = xs - x0 as f64;
            let (v0, v1) = (*valid.get(x0, y), *valid.get(x1, y));
            let sample = if f == 0.0 {
                v0.then(|| values.at(x0, y))
            } else if v0 && v1 {
                Some((1.0 - f) * values.at(x0, y) + f * values.at(x1, y))
            } else if f < 0.5 {
                v0.then(|| values.at(x0, y))
            } else {
                v1.then(|| values.at(x1, y))
            };
            if let Some(v) = sample {
                out.set(x, y, v);
                ok.set(x, y, true);
            }
        }
    }
    (out, ok)
}

/// Warps a secondary shot into the primary view; weights follow the nearest source pixel.
pub fn warp_to_primary(map: &ShotRadiance, disparity: &DisparityMap) -> ShotRadiance {
    let (values, ok) = warp_grid(&map.values, &map.valid(), disparity);
    let (weights, _) = warp_grid(&map.weights, &map.valid(), disparity);
    ShotRadiance {
        values,
        weights: Grid::from_fn(ok.width(), ok.height(), |x, y| if *ok.get(x, y) { weights.at(x, y) } else { 0.0 }),
    }
}

fn smoothed_weights(maps: &[ShotRadiance], sigma: f64) -> Vec<Grid<f64>> {
    maps.iter()
        .map(|m| {
            let blurred = gaussian_blur(&m.weights, sigma);
            Grid::from_fn(m.weights.width(), m.weights.height(), |x, y| {
                if m.weights.at(x, y) > 0.0 {
                    blurred.at(x, y).max(f64::MIN_POSITIVE)
                } else {
                    0.0
                }
            })
        })
        .collect()
}

/// Weighted average per pixel, using primary shots wherever any is valid and
/// warped secondary shots elsewhere. Weights are Gaussian-smoothed, then
/// restricted back to each shot's valid pixels.
pub fn fuse(primary: &[ShotRadiance], secondary: &[ShotRadiance], sigma: f64) -> Result<RadianceMap> {
    let first = primary
        .first()
        .or(secondary.first())
        .ok_or_else(|| Error::invalid("fusion needs at least one radiance map"))?;
    let (w, h) = (first.values.width(), first.values.height());
    if primary.iter().chain(secondary).any(|m| m.values.width() != w || m.values.height() != h) {
        return Err(Error::invalid("radiance maps differ in size"));
    }
    let pw = smoothed_weights(primary, sigma);
    let sw = smoothed_weights(secondary, sigma);

    let mut values = Grid::filled(w, h, 0.0);
    let mut confidence = Grid::filled(w, h, 0.0);
    let mut source = Grid::filled(w, h, Source::None);
    let blend = |maps: &[ShotRadiance], ws: &[Grid<f64>], i: usize| -> Option<(f64, f64, usize)> {
        let (mut num, mut den, mut best, mut best_w) = (0.0, 0.0, 0, 0.0);
        for (k, (m, wg)) in maps.iter().zip(ws).enumerate() {
            let wk = wg.as_slice()[i];
            if wk > 0.0 {
                num += wk * m.values.as_slice()[i];
                den += wk;
                if wk > best_w {
                    best_w = wk;
                    best = k;
                }
            }
        }
        (den > 0.0).then(|| (num / den, den, best))
    };
    for i in 0..w * h {
        if let Some((v, c, k)) = blend(primary, &pw, i) {
            values.as_mut_slice()[i] = v;
            confidence.as_mut_slice()[i] = c;
            source.as_mut_slice()[i] = Source::Primary(k);
        } else if let Some((v, c, k)) = blend(secondary, &sw, i) {
            values.as_mut_slice()[i] = v;
            confidence.as_mut_slice()[i] = c;
            source.as_mut_slice()[i] = Source::Secondary(k);
        }
    }
    Ok(RadianceMap {
        values,
        confidence,
        source,
    })
}

/// Single-camera HDR map `Q^j` from that camera's shots.
pub fn per_camera_hdr(maps: &[ShotRadiance], sigma: f64) -> Result<RadianceMap> {
    if maps.is_empty() {
        return Err(Error::invalid("per-camera fusion needs at least one shot"));
    }
    fuse(maps, &[], sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CameraId, CameraRig};
    use crate::planner::Shot;
    use crate::sim::{capture_shots, make_scene, SceneSpec};
    use crate::LogRadianceHistogram;

    fn map(values: Vec<f64>, weights: Vec<f64>, w: usize) -> ShotRadiance {
        let h = values.len() / w;
        ShotRadiance {
            values: Grid::from_vec(w, h, values),
            weights: Grid::from_vec(w, h, weights),
        }
    }

    #[test]
    fn zero_and_constant_disparity_warps() {
        let src = Grid::from_fn(8, 2, |x, y| (x + 10 * y) as f64);
        let valid = Grid::filled(8, 2, true);
        let (same, ok) = warp_grid(&src, &valid, &DisparityMap::constant(8, 2, 0.0));
        assert_eq!(same, src);
        assert_eq!(ok.count(), 16);
        let (shifted, ok) = warp_grid(&src, &valid, &DisparityMap::constant(8, 2, 3.0));
        for x in 3..8 {
            assert_eq!(shifted.at(x, 1), src.at(x - 3, 1));
        }
        assert!((0..3).all(|x| !*ok.get(x, 0)));
    }

    #[test]
    fn single_valid_primary_is_identity() {
        let m = map(vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 10.0, 20.0, 1.0], 2);
        let f = fuse(std::slice::from_ref(&m), &[], DEFAULT_FUSION_SIGMA).unwrap();
        assert_eq!(f.values, m.values);
        assert!(f.source.as_slice().iter().all(|s| *s == Source::Primary(0)));
    }

    #[test]
    fn secondary_fills_only_where_primary_fails() {
        let p = map(vec![1.0, 2.0], vec![0.0, 5.0], 2);
        let s = map(vec![7.0, 9.0], vec![3.0, 3.0], 2);
        let f = fuse(&[p], &[s], 1.0).unwrap();
        assert_eq!(f.values.as_slice(), &[7.0, 2.0]);
        assert_eq!(f.source.as_slice(), &[Source::Secondary(0), Source::Primary(0)]);
    }

    #[test]
    fn tiny_sigma_gives_plain_weighted_average() {
        let a = map(vec![1.0, 1.0], vec![1.0, 3.0], 2);
        let b = map(vec![3.0, 3.0], vec![3.0, 1.0], 2);
        let f = fuse(&[a, b], &[], 0.0).unwrap();
        assert_eq!(f.values.as_slice(), &[2.5, 1.5]);
    }

    #[test]
    fn noiseless_pixels_invert_exactly_at_table_entries() {
        let rig = CameraRig::synthetic().noiseless();
        let scene = make_scene(&SceneSpec::new(48, 32, LogRadianceHistogram::uniform(5.0, 8.0, 30), 3)).unwrap();
        let shot = Shot::new(&rig, CameraId::Primary, 0.05, 100.0, 2.0).unwrap();
        let img = &capture_shots(&scene, &[shot], &rig, 0).unwrap()[0];
        let win = PixelWindow { lo: 20, hi: 250 };
        let r = to_radiance(img, &rig.primary.icrf, 1.0, win);
        for (i, &d) in img.pixels.as_slice().iter().enumerate() {
            let truth = scene.log_radiance.as_slice()[i];
            if d < 20 {
                assert_eq!(r.weights.as_slice()[i], 0.0);
            } else {
                let step = rig.primary.icrf.eval(d) - rig.primary.icrf.eval(d - 1);
                assert!((r.values.as_slice()[i] - truth).abs() <= step);
            }
        }
    }

    #[test]
    fn gt_warp_matches_primary_on_covisible_pixels() {
        let scene = make_scene(&SceneSpec::desk(96, 64, LogRadianceHistogram::uniform(5.0, 8.0, 30), 4)).unwrap();
        let secondary = ShotRadiance {
            values: scene.secondary().log_radiance.clone(),
            weights: Grid::filled(96, 64, 1.0),
        };
        let warped = warp_to_primary(&secondary, &DisparityMap::from_ground_truth(&scene.gt_disparity));
        let covis = scene.co_visible();
        for i in 0..covis.len() {
            if covis.as_slice()[i] {
                assert!(warped.weights.as_slice()[i] > 0.0);
                assert!((warped.values.as_slice()[i] - scene.log_radiance.as_slice()[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fusing_two_shots_beats_either() {
        let rig = CameraRig::synthetic();
        let scene = make_scene(&SceneSpec::new(64, 48, LogRadianceHistogram::uniform(5.5, 7.0, 30), 5)).unwrap();
        let shots = [
            Shot::new(&rig, CameraId::Primary, 0.05, 100.0, 2.0).unwrap(),
            Shot::new(&rig, CameraId::Primary, 0.2, 200.0, 2.0).unwrap(),
        ];
        let imgs = capture_shots(&scene, &shots, &rig, 1).unwrap();
        let win = PixelWindow { lo: 30, hi: 250 };
        let maps: Vec<ShotRadiance> = imgs
            .iter()
            .map(|im| to_radiance(im, &rig.primary.icrf, rig.primary.gain(im.shot.iso), win))
            .collect();
        let fused = fuse(&maps, &[], DEFAULT_FUSION_SIGMA).unwrap();
        let truth = scene.log_radiance.as_slice();
        let both: Vec<usize> = (0..truth.len())
            .filter(|&i| maps.iter().all(|m| m.weights.as_slice()[i] > 0.0))
            .collect();
        let rmse = |v: &Grid<f64>| {
            (both.iter().map(|&i| (v.as_slice()[i] - truth[i]).powi(2)).sum::<f64>() / both.len() as f64).sqrt()
        };
        let (e0, e1, ef) = (rmse(&maps[0].values), rmse(&maps[1].values), rmse(&fused.values));
        assert!(both.len() > 1000, "{}", both.len());
        assert!(ef < e0.min(e1), "{e0} {e1} {ef}");
    }

    #[test]
    fn nested_shots_cover_the_union() {
        let a = map(vec![1.0, 2.0, 3.0], vec![1.0, 1.0, 0.0], 3);
        let b = map(vec![0.0, 2.0, 3.0], vec![0.0, 1.0, 1.0], 3);
        let q = per_camera_hdr(&[a, b], 0.0).unwrap();
        assert_eq!(q.valid().count(), 3);
        assert!(per_camera_hdr(&[], 1.0).is_err());
    }
}
