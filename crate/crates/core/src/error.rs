use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty data set")]
    EmptyData,

    #[error("coordinate {value} at point {index} lies outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("privacy budget exceeded: spending {requested} on top of {spent} exceeds the declared total {total}")]
    BudgetExceeded { requested: f64, spent: f64, total: f64 },

    #[error("fixture construction failed: {0}")]
    Construction(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("{path}: line {line}: {message}")]
    Data { path: PathBuf, line: u64, message: String },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Whether the error stems from bad caller input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::EmptyData
                | Error::OutOfRange { .. }
                | Error::InvalidParameter(_)
                | Error::Data { .. }
                | Error::Config(_)
        )
    }
}
