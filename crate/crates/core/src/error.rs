use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data is malformed: wrong shape, non-finite entries, asymmetric
    /// matrix where a symmetric one is required.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration or parameter is outside its valid range.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// An iterative routine failed to converge or broke a numerical guarantee.
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// The fixed-point update produced an all-zero direction.
    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    /// The reference matrix of a reconstruction ratio has zero norm.
    #[error("reconstruction ratio undefined for a zero reference image")]
    UndefinedRatio,

    /// A file could not be decoded.
    #[error("{}: format error at byte {offset}: {message}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::InvalidSpec(_) => "invalid-spec",
            Error::NumericFailure(_) => "numeric-failure",
            Error::DegenerateDirection(_) => "degenerate-direction",
            Error::UndefinedRatio => "undefined-ratio",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
