//! Projection-based quality assessment for point clouds and textured meshes.
//!
//! A model is rendered onto up to six cube-face viewpoints, a random subset of
//! projections is drawn, each projection is condensed into a fixed-size
//! canvas of spliced mini-patches, features are extracted per canvas and a
//! small regression head maps them to a quality score.

pub mod bench;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod model_io;
pub mod pipeline;
pub mod projection;
pub mod raster;
pub mod sampling;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
