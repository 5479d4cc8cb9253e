use thiserror::Error;

/// Failures raised by the simulation and statistics code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("measure is not normalized")]
    Unnormalized,

    /// Every grid node carries zero mass; the truncated domain was too small.
    #[error("measure died: all mass lost to grid truncation")]
    MeasureDied,

    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("stability bound violated: {0}")]
    Stability(String),

    #[error("integration failure at step {step}: {reason}")]
    Integration { step: usize, reason: String },

    #[error("statistics: {0}")]
    Statistics(String),
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics themselves rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::MeasureDied | Error::Stability(_) | Error::Integration { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
