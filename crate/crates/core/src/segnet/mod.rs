//! Patch-based vessel classifier: network, balanced sampling, training,
//! gradient verification, whole-image inference, split-half validation and
//! model files.

mod cv;
mod dense;
mod gradcheck;
mod io;
mod network;
mod sampling;
mod train;

pub use cv::{split_half_cv, CvConfig, CvOutcome, CvSample, Fold};
pub use gradcheck::{grad_check, GRAD_CHECK_MAX_PARAMS};
pub use io::{load_model, load_model_for, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use network::{softmax2, Architecture, Layer, Network, Shape, Trace};
pub use sampling::{sample_balanced, LabeledPatch, LabeledPatchSet};
pub use train::{mean_loss, train, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::preprocess::Preprocessing;
use crate::raster::{GrayImage, RoiMask};

/// Per-pixel vessel probability over an image; zero outside the ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    roi: RoiMask,
}

impl ConfidenceMap {
    /// Values outside the ROI are forced to 0; values inside are clamped.
    pub fn new(values: Vec<f64>, roi: RoiMask) -> Result<Self> {
        let (width, height) = roi.dims();
        if values.len() != width * height {
            return Err(Error::Shape(format!("{} values for a {width}x{height} map", values.len())));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::arg("confidence values must not be NaN"));
        }
        let values = values
            .into_iter()
            .zip(roi.as_slice())
            .map(|(v, &inside)| if inside { v.clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        Ok(Self { width, height, values, roi })
    }

    pub fn from_gray(img: &GrayImage, roi: RoiMask) -> Result<Self> {
        if img.dims() != roi.dims() {
            return Err(Error::Shape(format!(
                "ROI is {}x{}, map image is {}x{}",
                roi.dims().0,
                roi.dims().1,
                img.width(),
                img.height()
            )));
        }
        Self::new(img.data().to_vec(), roi)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn roi(&self) -> &RoiMask {
        &self.roi
    }

    /// ROI values in row-major order.
    pub fn roi_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(self.roi.as_slice()).filter(|(_, &i)| i).map(|(&v, _)| v)
    }

    pub fn map_roi(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self.values.iter().zip(self.roi.as_slice()).map(|(&v, &i)| if i { f(v) } else { 0.0 }).collect();
        Self::new(values, self.roi.clone())
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::new(self.width, self.height, self.values.clone()).expect("values lie in [0,1]")
    }
}

/// Runs `network` on the mirror-padded patch of every ROI pixel of `img`.
pub fn infer_map(network: &Network, img: &GrayImage, roi: &RoiMask) -> Result<ConfidenceMap> {
    if img.dims() != roi.dims() {
        return Err(Error::Shape(format!(
            "ROI is {}x{}, image is {}x{}",
            roi.dims().0,
            roi.dims().1,
            img.width(),
            img.height()
        )));
    }
    ConfidenceMap::new(dense::probability_map(network, img, roi), roi.clone())
}

/// Training context stored next to the weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMeta {
    pub preprocessing: Preprocessing,
    /// Pixel scale of the training images, if known.
    pub mm_per_px: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub network: Network,
    pub meta: ModelMeta,
}

impl CnnModel {
    /// Refuses images whose pixel scale differs from the training scale.
    pub fn check_fov(&self, img: &GrayImage) -> Result<()> {
        if let (Some(m), Some(i)) = (self.meta.mm_per_px, img.scale_mm_per_px()) {
            if (m - i).abs() > 1e-9 * m.max(i) {
                return Err(Error::FovMismatch { model_mm_per_px: m, image_mm_per_px: i });
            }
        }
        Ok(())
    }

    /// Preprocesses `img` as at training time, then infers.
    pub fn segment(&self, img: &GrayImage, roi: &RoiMask) -> Result<ConfidenceMap> {
        self.check_fov(img)?;
        self.infer_preprocessed(&self.meta.preprocessing.apply(img)?, roi)
    }

    pub(crate) fn infer_preprocessed(&self, img: &GrayImage, roi: &RoiMask) -> Result<ConfidenceMap> {
        self.check_fov(img)?;
        infer_map(&self.network, img, roi)
    }
}
