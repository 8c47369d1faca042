use std::path::PathBuf;

/// Errors produced by seam prediction, scoring, and the benchmark harness.
#[derive(Debug, thiserror::Error)]
pub enum SeamError {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported or malformed image {path}: {reason}")]
    ImageFormat { path: PathBuf, reason: String },

    #[error("unsupported or malformed weight file {path}: {reason}")]
    WeightFormat { path: PathBuf, reason: String },

    #[error("unreadable or malformed report file {path}: {reason}")]
    ReportFormat { path: PathBuf, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("overlap region is empty")]
    EmptyOverlap,

    #[error("degenerate mask boundary: {0}")]
    DegenerateBoundary(String),

    #[error("no seam exists: {0}")]
    NoSeam(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, SeamError>;
