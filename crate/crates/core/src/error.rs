use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// Backward pass attempted with a tape recorded against different parameters.
    #[error("stale tape: recorded at generation {recorded}, parameters at {current}")]
    StaleTape { recorded: u64, current: u64 },

    #[error("non-finite loss at epoch {epoch}, dataset {dataset}")]
    NonFiniteLoss { epoch: usize, dataset: usize },

    #[error("degenerate dataset {name}: {reason}")]
    Degenerate { name: String, reason: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("parse error in {file} line {line}: {msg}")]
    Parse { file: String, line: usize, msg: String },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
