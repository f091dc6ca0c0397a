//! Capture planning and reconstruction for dual-camera HDR and depth.
//!
//! The crate computes capture-time-optimal exposure/ISO sequences for a stereo
//! rig under radiance-coverage, disparity-error and per-shot SNR constraints,
//! and reconstructs HDR radiance plus disparity from the captured stacks by
//! alternating disparity and joint ICRF estimation.
//!
//! The runnable programs under `examples/` are the intended entry points:
//!
//! ```bash
//! cargo run --release --example plan_capture
//! cargo run --release --example reconstruct_scene
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod compare;
pub mod disparity;
pub mod error;
pub mod fusion;
pub mod grid;
pub mod icrf;
pub mod io;
pub mod pipeline;
pub mod planner;
pub mod radiance;
pub mod sim;

pub use camera::{CameraId, CameraModel, CameraRig, Icrf, NoiseModel, PixelWindow};
pub use error::{Error, Result};
pub use grid::{Grid, Mask};
pub use planner::{plan, BaselineScheme, CapturePlan, PlannerConfig, Shot};
pub use radiance::{Interval, IntervalSet, LogRadianceHistogram};
pub use sim::{capture_stack, make_scene, render_secondary, LdrImage, SceneSpec, SyntheticScene};
