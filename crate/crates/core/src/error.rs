use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand extents do not fit together.
    #[error("shape error: {0}")]
    Shape(String),

    /// An architectural or run parameter is outside its valid range.
    #[error("config error: {0}")]
    Config(String),

    /// Caller-supplied data violates a precondition (non-finite values,
    /// alpha outside [0,1], trimap levels, ...).
    #[error("input error: {0}")]
    Input(String),

    /// An API contract was broken, e.g. `backward` on a non-scalar.
    #[error("contract error: {0}")]
    Contract(String),

    /// A file could be read but its contents are malformed.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }

    /// True for failures caused by the filesystem rather than by data or configuration.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
