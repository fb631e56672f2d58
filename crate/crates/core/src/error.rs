use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("channel count mismatch: expected {expected}, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error(
        "inverse transform left imaginary residual {residual:e} against norm {norm:e}; \
         input was not conjugate symmetric"
    )]
    SymmetryBroken { residual: f64, norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("label grid has no {0} samples")]
    EmptyLabelSet(&'static str),

    #[error("problem too large for dense oracle: {size} rows exceeds {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("dense oracle failed: {0}")]
    Oracle(String),

    #[error("feature extraction: {0}")]
    Features(String),

    #[error("color-name table {path:?}: {reason}")]
    ColorTable { path: Option<PathBuf>, reason: String },

    #[error("model variant mismatch: {0}")]
    VariantMismatch(String),

    #[error("sequence {path:?}: {reason}")]
    Sequence { path: PathBuf, reason: String },

    #[error("image {path:?}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::ShapeMismatch { expected, actual }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
