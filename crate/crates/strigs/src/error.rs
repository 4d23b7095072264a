//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor precondition or parameter inequality was violated.
    /// The message names the violated constraint, e.g. `"lambda <= delta/2"`.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// No admissible value exists (e.g. condition margin never positive).
    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    /// Matrix/vector dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An iterative solver exhausted its iteration budget.
    #[error("solver did not converge: {0}")]
    SolverFailure(String),

    /// A state coordinate became NaN or infinite during integration.
    #[error("nonfinite state at t = {t} (step {step})")]
    NonFiniteState { t: f64, step: usize },

    /// Not enough data points for the requested statistic.
    #[error("window too small: {0}")]
    WindowTooSmall(String),

    /// Operation requires a schedule kind that was not supplied.
    #[error("unsupported schedule: {0}")]
    UnsupportedSchedule(String),

    #[error("config error: {0}")]
    Config(String),

    /// An asserted experiment check failed (CLI exit code 3).
    #[error("acceptance check failed: {0}")]
    CheckFailed(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
