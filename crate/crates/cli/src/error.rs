use std::path::PathBuf;

use thiserror::Error;

/// Process exit status for a validation failure (bad config, bad data,
/// failed check).
pub const EXIT_VALIDATION: u8 = 1;
/// Process exit status for a filesystem failure.
pub const EXIT_IO: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] maga_core::Error),

    #[error("{0}")]
    Usage(String),

    /// A check ran to completion and did not pass.
    #[error("{0}")]
    Failed(String),

    #[error("i/o error on {path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(..) => EXIT_IO,
            CliError::Core(e) if e.is_io() => EXIT_IO,
            _ => EXIT_VALIDATION,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
