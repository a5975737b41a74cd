//! Retinal OCT-A vessel segmentation and foveal avascular zone quantification.
//!
//! The pipeline runs: [`preprocess`] the en-face image, classify every pixel
//! with the patch CNN in [`segnet`], [`binarize`] the confidence map, extract
//! the FAZ and compute its [`morphometry`], score agreement against manual
//! tracings with [`metrics`], and summarize cohorts with [`stats`].
//! [`synth`] produces angiogram-like images with exact ground truth.

pub mod binarize;
pub mod error;
pub mod metrics;
pub mod morphometry;
pub mod preprocess;
pub mod raster;
pub mod segnet;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
