use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tensor construction: {0}")]
    Construction(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("unknown activation kind `{0}`")]
    UnknownActivation(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected `NTW1`, found {0:?}")]
    BadMagic([u8; 4]),

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),

    #[error("invalid weight header: {0}")]
    InvalidHeader(String),

    #[error("{0} trailing bytes after last entry")]
    TrailingBytes(usize),

    #[error("weight store does not match network: {0}")]
    WeightMismatch(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("no unit stage{stage}.unit{unit} in this network")]
    UnitOutOfRange { stage: usize, unit: usize },

    #[error("operator dimension {dim} exceeds materialization cap {cap}; use the lanczos solver instead")]
    CapExceeded { dim: usize, cap: usize },

    #[error("non-finite entry in matrix at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("incompatible operator chain: {0}")]
    IncompatibleChain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dense SVD failed to converge")]
    SvdFailed,

    #[error("unit {unit} has a projection shortcut; skip scaling needs an identity skip")]
    DownsamplingUnit { unit: String },

    #[error("{unit}: {source}")]
    InUnit {
        unit: String,
        #[source]
        source: Box<Error>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable short code, used by the CLI exit message and the NTW1 tests.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Construction(_) => "construction",
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::UnknownActivation(_) => "unknown-activation",
            Error::LabelOutOfRange { .. } => "label-out-of-range",
            Error::Io { .. } => "io",
            Error::BadMagic(_) => "bad-magic",
            Error::Truncated(_) => "truncated-payload",
            Error::UnknownDtype(_) => "unknown-dtype",
            Error::InvalidHeader(_) => "invalid-header",
            Error::TrailingBytes(_) => "trailing-bytes",
            Error::WeightMismatch(_) => "weight-mismatch",
            Error::Dataset(_) => "dataset",
            Error::UnitOutOfRange { .. } => "unit-out-of-range",
            Error::CapExceeded { .. } => "cap-exceeded",
            Error::NonFinite { .. } => "non-finite",
            Error::IncompatibleChain(_) => "incompatible-chain",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::SvdFailed => "svd-failed",
            Error::DownsamplingUnit { .. } => "downsampling-unit",
            Error::InUnit { source, .. } => source.code(),
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_unit(unit: impl std::fmt::Display, source: Error) -> Self {
        Error::InUnit {
            unit: unit.to_string(),
            source: Box::new(source),
        }
    }

    pub(crate) fn shape(expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}
