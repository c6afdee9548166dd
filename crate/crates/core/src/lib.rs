//! Pseudo-label extraction for semantic-segmentation self-training, guided by
//! either the maximum softmax score or the normalized prediction entropy, plus a
//! small synthetic domain-adaptation laboratory to compare the two.

pub mod confidence;
pub mod dataset;
pub mod error;
pub mod extraction;
pub mod mapcore;
pub mod metrics;
pub mod model;
pub mod provenance;
pub mod render;
pub mod selftrain;
pub mod synth;
pub mod thresholds;

pub use error::{Error, Result};
