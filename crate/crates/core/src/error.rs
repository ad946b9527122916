use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates one of its invariants.
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    /// Too many steps were projected back into the domain; the step size is too coarse.
    #[error("scheme unreliable: {clamps} of {steps} steps clamped (limit 1%)")]
    Unreliable { clamps: u64, steps: u64 },

    #[error("insufficient samples: need {needed}, have {have}")]
    InsufficientSamples { needed: usize, have: usize },

    #[error("no recorded sample at t = {0}")]
    NoSample(f64),

    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("empty input")]
    EmptyInput,

    /// The requested check does not apply to this parameter regime.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }
}
