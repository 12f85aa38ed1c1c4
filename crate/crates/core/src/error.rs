use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: Vec<u8> },

    #[error("truncated payload: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),

    #[error("malformed document: {0}")]
    Format(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("stale forward trace: parameters changed since the forward pass")]
    StaleTrace,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(expected: impl std::fmt::Debug, actual: impl std::fmt::Debug) -> Self {
        Error::Shape {
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 2: configuration or input error, 3: I/O or container error,
    /// 4: numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Shape { .. } | Error::Config(_) | Error::Json(_) => 2,
            Error::Io { .. }
            | Error::Stream(_)
            | Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::UnsupportedVersion(_)
            | Error::Format(_) => 3,
            Error::NonFinite(_) | Error::StaleTrace => 4,
        }
    }
}
