use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inconsistent or out-of-range configuration (sizes, thresholds, missing metadata).
    #[error("configuration error: {0}")]
    Config(String),

    /// Geometrically degenerate input (too few points, collinear points, zero-norm vectors).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Tensor or image dimensions that do not agree.
    #[error("shape error: {0}")]
    Shape(String),

    /// A loss was requested with zero positive matches.
    #[error("undefined normalization: {0}")]
    Normalization(String),

    /// A file does not follow the expected format.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    /// Label ids exceed what the on-disk format can store.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Label image and sidecar disagree.
    #[error("integrity error in {path}: {msg}")]
    Integrity { path: PathBuf, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn integrity(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Integrity {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
