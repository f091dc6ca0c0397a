//! File formats: PFM, PGM, PNG, JSON documents, histogram CSV, stack and
//! scene directories and run manifests.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::camera::{CameraId, CameraRig};
use crate::error::{Error, Result};
use crate::fusion::Source;
use crate::grid::Grid;
use crate::planner::{CapturePlan, PlannerConfig, Shot};
use crate::radiance::{Interval, LogRadianceHistogram};
use crate::sim::{LdrImage, SceneSpec, SyntheticScene};

fn bad(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::invalid(format!("{}: {msg}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| bad(path, e))
}

/// Single-channel little-endian PFM, rows stored bottom to top.
pub fn write_pfm(path: &Path, grid: &Grid<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "Pf\n{} {}\n-1.0\n", grid.width(), grid.height())?;
    for y in (0..grid.height()).rev() {
        for &v in grid.row(y) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn header_tokens(r: &mut impl BufRead, n: usize) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    let mut line = String::new();
    while tokens.len() < n {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::invalid("truncated image header"));
        }
        let content = line.split('#').next().unwrap_or("");
        tokens.extend(content.split_whitespace().map(str::to_owned));
    }
    Ok(tokens)
}

pub fn read_pfm(path: &Path) -> Result<Grid<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let t = header_tokens(&mut r, 4)?;
    if t[0] != "Pf" {
        return Err(bad(path, "not a single-channel PFM"));
    }
    let w: usize = t[1].parse().map_err(|e| bad(path, e))?;
    let h: usize = t[2].parse().map_err(|e| bad(path, e))?;
    let scale: f64 = t[3].parse().map_err(|e| bad(path, e))?;
    let mut bytes = vec![0u8; w * h * 4];
    r.read_exact(&mut bytes)?;
    let decode = |c: &[u8]| {
        let b = [c[0], c[1], c[2], c[3]];
        if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let values: Vec<f64> = bytes.chunks_exact(4).map(|c| decode(c) as f64).collect();
    Ok(Grid::from_fn(w, h, |x, y| values[(h - 1 - y) * w + x]))
}

/// Binary 8-bit PGM (`P5`).
pub fn write_pgm(path: &Path, grid: &Grid<u8>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", grid.width(), grid.height())?;
    w.write_all(grid.as_slice())?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<Grid<u8>> {
    let mut r = BufReader::new(File::open(path)?);
    let t = header_tokens(&mut r, 4)?;
    if t[0] != "P5" || t[3] != "255" {
        return Err(bad(path, "expected an 8-bit binary PGM"));
    }
    let w: usize = t[1].parse().map_err(|e| bad(path, e))?;
    let h: usize = t[2].parse().map_err(|e| bad(path, e))?;
    let mut data = vec![0u8; w * h];
    r.read_exact(&mut data)?;
    Ok(Grid::from_vec(w, h, data))
}

pub fn write_png(path: &Path, grid: &Grid<u8>) -> Result<()> {
    let img = image::GrayImage::from_raw(grid.width() as u32, grid.height() as u32, grid.as_slice().to_vec())
        .ok_or_else(|| bad(path, "buffer size mismatch"))?;
    img.save(path)?;
    Ok(())
}

pub fn read_png(path: &Path) -> Result<Grid<u8>> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Ok(Grid::from_vec(w as usize, h as usize, img.into_raw()))
}

/// Source mask as bytes: 0 none, `1 + i` primary shot `i`, `128 + i` secondary shot `i`.
pub fn encode_sources(sources: &Grid<Source>) -> Grid<u8> {
    sources.map(|s| match *s {
        Source::None => 0,
        Source::Primary(i) => (1 + i).min(127) as u8,
        Source::Secondary(i) => (128 + i).min(255) as u8,
    })
}

#[derive(Serialize, Deserialize)]
struct RoiSidecar {
    range_of_interest: [f64; 2],
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes `bin_low,bin_high,prob` rows and a JSON sidecar with the range of interest.
pub fn write_histogram(path: &Path, hist: &LogRadianceHistogram) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "bin_low,bin_high,prob")?;
    for (e, p) in hist.edges().windows(2).zip(hist.probs()) {
        writeln!(w, "{:?},{:?},{:?}", e[0], e[1], p)?;
    }
    let roi = hist.range_of_interest();
    write_json(
        &sidecar_path(path),
        &RoiSidecar {
            range_of_interest: [roi.low, roi.high],
        },
    )
}

/// Reads a histogram CSV; without a sidecar the range of interest is the full support.
pub fn read_histogram(path: &Path) -> Result<LogRadianceHistogram> {
    let text = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    let mut probs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("bin_low")) {
            continue;
        }
        let f: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(path, format!("line {}: {e}", n + 1)))?;
        if f.len() != 3 {
            return Err(bad(path, format!("line {}: expected 3 columns", n + 1)));
        }
        match edges.last() {
            None => edges.push(f[0]),
            Some(&last) if (last - f[0]).abs() > 1e-9 * last.abs().max(1.0) => {
                return Err(bad(path, format!("line {}: bins are not contiguous", n + 1)))
            }
            _ => {}
        }
        edges.push(f[1]);
        probs.push(f[2]);
    }
    if probs.is_empty() {
        return Err(bad(path, "no histogram rows"));
    }
    let sidecar = sidecar_path(path);
    let roi = if sidecar.exists() {
        let s: RoiSidecar = read_json(&sidecar)?;
        Some(Interval::new(s.range_of_interest[0], s.range_of_interest[1]))
    } else {
        None
    };
    LogRadianceHistogram::from_weights(edges, probs, roi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanShot {
    pub camera: CameraId,
    pub t_seconds: f64,
    pub iso: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanMetrics {
    pub t_cap: f64,
    pub predicted_disp_err: f64,
    pub worst_snr_db: f64,
}

/// On-disk plan: shots, metrics and the planner config used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub shots: Vec<PlanShot>,
    pub metrics: PlanMetrics,
    pub config: PlannerConfig,
}

impl PlanFile {
    pub fn from_plan(plan: &CapturePlan, config: &PlannerConfig) -> Self {
        Self {
            shots: plan
                .shots
                .iter()
                .map(|s| PlanShot {
                    camera: s.camera,
                    t_seconds: s.t,
                    iso: s.iso,
                })
                .collect(),
            metrics: PlanMetrics {
                t_cap: plan.t_cap,
                predicted_disp_err: plan.predicted_disp_err,
                worst_snr_db: plan.worst_snr_db(),
            },
            config: config.clone(),
        }
    }

    /// Rebuilds shots on `rig`, naming the first shot the rig cannot take.
    pub fn shots(&self, rig: &CameraRig) -> Result<Vec<Shot>> {
        self.shots
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let cam = rig
                    .camera(s.camera)
                    .ok_or_else(|| Error::invalid(format!("shot {i}: rig has no {:?} camera", s.camera)))?;
                if !cam.supports_iso(s.iso) {
                    return Err(Error::invalid(format!("shot {i}: ISO {} is not supported", s.iso)));
                }
                if !cam.supports_exposure(s.t_seconds) {
                    return Err(Error::invalid(format!("shot {i}: exposure {} s is out of range", s.t_seconds)));
                }
                Shot::new(rig, s.camera, s.t_seconds, s.iso, self.config.eta)
                    .map_err(|e| Error::invalid(format!("shot {i}: {e}")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StackEntry {
    file: String,
    shot: Shot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StackIndex {
    frames: Vec<StackEntry>,
}

pub const STACK_INDEX: &str = "stack.json";

/// Writes `frame_NNN.pgm` files plus `stack.json`; returns every file written.
pub fn write_stack(dir: &Path, frames: &[LdrImage]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let name = format!("frame_{i:03}.pgm");
        let path = dir.join(&name);
        write_pgm(&path, &f.pixels)?;
        written.push(path);
        entries.push(StackEntry { file: name, shot: f.shot });
    }
    let index = dir.join(STACK_INDEX);
    write_json(&index, &StackIndex { frames: entries })?;
    written.push(index);
    Ok(written)
}

pub fn read_stack(dir: &Path) -> Result<Vec<LdrImage>> {
    let index: StackIndex = read_json(&dir.join(STACK_INDEX))?;
    if index.frames.is_empty() {
        return Err(bad(dir, "stack lists no frames"));
    }
    index
        .frames
        .into_iter()
        .map(|e| {
            Ok(LdrImage {
                pixels: read_pgm(&dir.join(&e.file))?,
                shot: e.shot,
            })
        })
        .collect()
}

pub const SCENE_SPEC: &str = "scene.json";

/// Writes the scene's ground truth as PFM, a preview PNG and its spec.
pub fn write_scene(dir: &Path, scene: &SyntheticScene) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths = [
        dir.join("log_radiance.pfm"),
        dir.join("gt_disparity.pfm"),
        dir.join("preview.png"),
        dir.join(SCENE_SPEC),
    ];
    write_pfm(&paths[0], &scene.log_radiance)?;
    write_pfm(&paths[1], &scene.gt_disparity)?;
    let lo = scene.log_radiance.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scene.log_radiance.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    write_png(&paths[2], &crate::disparity::tone_map(&scene.log_radiance, Interval::new(lo, hi)))?;
    write_json(&paths[3], &scene.spec)?;
    Ok(paths.to_vec())
}

pub fn read_scene_spec(path: &Path) -> Result<SceneSpec> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Record of one command run: enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

pub const MANIFEST: &str = "manifest.json";

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            args,
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn add_outputs<'a>(&mut self, paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<()> {
        for p in paths {
            self.outputs.push(FileRecord::of(p)?);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST);
        write_json(&path, self)?;
        Ok(path)
    }
}
