use std::io;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at step {step}, layer {layer}: {what}")]
    NonFinite {
        step: usize,
        layer: usize,
        what: String,
    },

    #[error("instance too large for exact enumeration: T1 = {t1} exceeds {limit}; use the Monte Carlo estimator")]
    TooLarge { t1: usize, limit: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated input while reading {0}")]
    Truncated(&'static str),

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}

impl Error {
    /// Short machine-readable category used in CLI error prefixes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::NonFinite { .. } => "numeric",
            Error::BadMagic { .. } | Error::UnsupportedVersion(_) | Error::Truncated(_) | Error::Inconsistent(_) => {
                "data"
            }
            Error::Shape { .. } | Error::InvalidArgument(_) | Error::TooLarge { .. } => "usage",
        }
    }
}
