use std::path::PathBuf;

use thiserror::Error;

use crate::morphometry::Region;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("model version mismatch: file has {found}, reader supports {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient {class} pixels: requested {requested}, available {available}")]
    InsufficientClassPixels {
        class: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("field of view mismatch: model trained at {model_mm_per_px} mm/px, image is {image_mm_per_px} mm/px")]
    FovMismatch {
        model_mm_per_px: f64,
        image_mm_per_px: f64,
    },

    #[error("no non-vessel pixels inside the measured area")]
    EmptyFaz,

    #[error("centroid ({cx:.2}, {cy:.2}) lies outside the FAZ region of {} pixels", .region.len())]
    CentroidOutside { cx: f64, cy: f64, region: Box<Region> },

    #[error("{0} is undefined: zero denominator")]
    UndefinedRate(&'static str),

    #[error("rater pairing failed: {0}")]
    Pairing(String),

    #[error("synthetic generation failed: {0}")]
    Generation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
