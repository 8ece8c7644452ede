//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A rating-log line that does not match `user<sep>item<sep>rating[<sep>timestamp]`.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Parsing or filtering left no usable interactions.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Invalid configuration value or combination.
    #[error("config error: {0}")]
    Config(String),

    /// Sample shape does not match what the objective expects.
    #[error("shape error: {0}")]
    Shape(String),

    /// Non-finite value produced during loss or gradient evaluation.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The user has interacted with every item; no negatives can be drawn.
    #[error("degenerate user {user}: complement of the observed set is empty")]
    DegenerateUser { user: u32 },

    /// The objective became non-finite during training.
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    /// Corrupt or truncated dataset file.
    #[error("dataset file error: {0}")]
    Dataset(String),

    /// Corrupt or truncated checkpoint file.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// No users with a non-empty target set to evaluate.
    #[error("eval error: {0}")]
    Eval(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
