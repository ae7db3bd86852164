use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite gradient entry at index {index}: {value}")]
    NonFiniteGradient { index: usize, value: f64 },

    #[error("non-finite target value {value} at input {input:?}")]
    NonFiniteTarget { input: Vec<f64>, value: f64 },

    #[error(
        "training diverged at step {step}: running loss {running_loss:e} exceeds 1e6 x reference {reference:e}"
    )]
    Diverged {
        step: usize,
        running_loss: f64,
        reference: f64,
    },

    #[error("evaluation budget {requested} exceeds cap {cap}")]
    BudgetExceeded { requested: f64, cap: f64 },

    #[error("no closed-form solution available for {0}")]
    NotAvailable(String),

    #[error("expression parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for aborts raised by numerical guards rather than bad input.
    pub fn is_numerical_guard(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient { .. }
                | Error::NonFiniteTarget { .. }
                | Error::Diverged { .. }
                | Error::BudgetExceeded { .. }
        )
    }
}
