//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failure modes of the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A malformed or out-of-range configuration value (family spec, grid, seed lane...).
    #[error("configuration error: {0}")]
    Config(String),
    /// A request outside the domain of the quantity (negative epsilon, missing moment, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// Adaptive quadrature ran out of subdivisions. The partial result is kept.
    #[error(
        "quadrature did not converge after {subdivisions} subdivisions \
         (partial value {value:e}, error estimate {error_estimate:e})"
    )]
    NotConverged {
        value: f64,
        error_estimate: f64,
        subdivisions: usize,
    },
    /// Any other numerical failure (truncation cap exceeded, non-finite result).
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("epsilon must be positive and finite, got {epsilon}")))
    }
}

pub(crate) fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::Domain("n must be at least 1".into()))
    } else {
        Ok(())
    }
}
