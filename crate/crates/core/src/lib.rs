//! Synthetic long-range thermal detection datasets with exact labels, the
//! metrics and motion filters used to evaluate detectors on them, and a
//! desk-scale feature-distillation loop.

pub mod annotation;
pub mod bench;
pub mod datasetio;
pub mod distill;
pub mod error;
pub mod metrics;
pub mod raster;
pub mod scenegen;
pub mod trackfilter;

pub use annotation::{Annotation, PixelBox, Rle};
pub use error::{Error, Result};
pub use raster::{Band, BinaryMask, BlendMode, Frame, Kernel, Sprite};
