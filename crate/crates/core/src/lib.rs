//! Geometric chromosome straightening.
//!
//! Segmentation, medial-axis recovery, patch-based straightening, masking and
//! condition maps for a learned refinement stage, synthetic bending, and
//! straightening metrics. The [`pipeline`] module drives batches of samples
//! from a JSON manifest.

pub mod error;
pub mod fixtures;
pub mod image;
pub mod mask;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod segmentation;
pub mod skeleton;
pub mod straighten;
pub mod synth;

pub use error::{Error, Result};
pub use image::{GrayImage, Histogram, Point};
pub use segmentation::{BinaryMask, Polarity};
pub use skeleton::MedialAxis;
