use thiserror::Error;

/// Errors raised by the co-trading toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("tape for symbol {symbol} is not sorted at position {position}")]
    UnsortedTape { symbol: usize, position: usize },

    #[error("duplicate symbol {0} in daily input")]
    DuplicateSymbol(usize),

    #[error("symbol {0} has no sector label")]
    MissingSector(String),

    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations (KKT residual {residual:e})")]
    SolverFailed { iterations: usize, residual: f64 },

    #[error("dates are misaligned: {0}")]
    DateMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(message: impl Into<String>) -> Error {
    Error::InvalidInput(message.into())
}
