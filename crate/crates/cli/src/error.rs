use std::io;

use thiserror::Error;

/// Exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error(transparent)]
    Core(#[from] qmon_core::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("replay mismatch: {0}")]
    Mismatch(String),
    #[error("{0} acceptance criteria failed")]
    SuiteFailed(usize),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Manifest(_) => EXIT_VALIDATION,
            Self::Core(e) if e.is_numerical() || matches!(e, qmon_core::Error::Statistics(_)) => {
                EXIT_NUMERICAL
            }
            Self::Core(_) => EXIT_VALIDATION,
            Self::Io(_) | Self::Mismatch(_) | Self::SuiteFailed(_) => EXIT_FAILURE,
        }
    }
}
