//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by estimation, inference and data handling.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Dataset or configuration failed a validity check.
    #[error("validation error: {0}")]
    Validation(String),

    /// Input file does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A value could not be parsed; `row` is the 1-based data row.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// Adaptive quadrature did not reach the requested tolerance.
    /// Carries the best estimate and its error bound.
    #[error("quadrature failed to converge ({context}): estimate {estimate:.6e}, error bound {error_bound:.3e}")]
    Quadrature {
        estimate: f64,
        error_bound: f64,
        context: String,
    },

    /// A matrix was numerically singular (condition estimate attached).
    #[error("near-singular matrix ({context}): condition estimate {condition:.3e}")]
    NearSingular { condition: f64, context: String },

    /// Information matrix too ill-conditioned for covariance or tests.
    #[error("degenerate information: {0}")]
    DegenerateInformation(String),

    /// An iterative routine exhausted its iteration budget.
    #[error("failed to converge: {0}")]
    NonConvergence(String),

    /// A requested quantity has no solution (e.g. sample size at the null).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
