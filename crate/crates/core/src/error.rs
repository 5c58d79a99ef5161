use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("modulus {0} is not prime")]
    NotPrime(u32),

    #[error("operation requires an odd prime, got p = {0}")]
    EvenCharacteristic(u32),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("resource budget exceeded: {what} needs {required}, limit is {limit}")]
    BudgetExceeded {
        what: &'static str,
        required: u128,
        limit: u128,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("partition does not refine: {0}")]
    NotRefinement(String),

    #[error("sampling failed after {attempts} attempts: {reason}")]
    SamplingFailed { attempts: usize, reason: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
