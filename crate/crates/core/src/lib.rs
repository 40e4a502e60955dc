//! Deterministic CPU renderer for 3D Gaussian splats with two accelerations:
//! a view-dependent clustered scene representation with opacity-aware tile
//! binning and pose-predicted prefetching, and contribution-aware
//! rasterization that lets a leader pixel skip work for its pixel group.
//!
//! Pipeline: [`preprocess`] (cull, project, bin) → [`sort`] (per-tile depth
//! order) → [`raster`] (reference or contribution-aware compositing), tied
//! together by [`pipeline`]. [`compiler`] builds clustered scenes offline and
//! [`residency`] streams them at runtime.

pub mod bench;
pub mod compiler;
pub mod error;
pub mod frame;
pub mod io;
pub mod kmeans;
pub mod math;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod raster;
pub mod residency;
pub mod scene;
pub mod sort;
pub mod synth;

pub use error::{Error, Result};
pub use frame::{FrameStats, Image};
pub use pipeline::{render, Engine, RenderConfig};
pub use scene::{CameraPose, Gaussian3D, ProjectedGaussian, ShDegree};
