use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    /// Invalid parameters, mismatched dimensions, malformed configs.
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterate left the finite reals.
    #[error("divergence at step {step}: iterate is not finite")]
    Divergence { step: usize },

    /// An operator was asked for a field or Jacobian it does not provide.
    #[error("capability error: operator {index} does not provide {what}")]
    Capability { index: usize, what: &'static str },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A call would exceed a hard resource cap (e.g. factorial enumeration).
    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty plot: {0}")]
    EmptyPlot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
