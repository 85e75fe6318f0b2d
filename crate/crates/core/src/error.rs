use thiserror::Error;

/// Errors raised by the simulation and diagnostics layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("integrand is not predictable")]
    NotPredictable,

    #[error("jump ledger required: {0}")]
    LedgerRequired(String),

    #[error("non-finite value in cell {cell} at step {step}")]
    NonFinite { step: usize, cell: usize },

    #[error("not recorded: {0}")]
    NotRecorded(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("bad snapshot: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
