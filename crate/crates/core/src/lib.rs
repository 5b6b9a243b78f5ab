//! Stereo right-view synthesis from a left view and its disparity.
//!
//! Stages: forward warp with a z-buffer, three hole-filling branches
//! (polyline rasterization, disparity expansion, external or diffusion
//! fill), and a learned refiner that blends the branch outputs through
//! three masks and a content image. Losses, metrics and a frame-directory
//! pipeline sit on top.
//!
//! Disparity convention: a left-view pixel at column `x` lands at
//! `round(x - d)` in the right view, `d >= 0`.

pub mod canny;
pub mod compose;
pub mod config;
pub mod disparity;
pub mod error;
pub mod inpaint;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod par;
pub mod pipeline;
pub mod refiner;
pub mod rng;
pub mod scene;
pub mod warp;

pub use config::{BranchFlags, CannyParams, LossWeights, PipelineConfig, TrainSettings};
pub use disparity::{depth_to_disparity, expand_disparity, ExpansionParams};
pub use error::{Error, ErrorKind, Result};
pub use model::{DisparityMap, EdgeMap, Frame, OcclusionMask, Rgb};
pub use nn::FeatureMap;
pub use pipeline::{run_pipeline, RunOptions, Variant};
pub use warp::{forward_warp, WarpResult};
