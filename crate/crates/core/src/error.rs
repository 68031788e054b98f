use thiserror::Error;

/// Errors raised anywhere in the discretization and solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("point {0} outside the parameter domain [0, 1]")]
    Domain(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("decomposition failed: {0}")]
    Decomposition(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("operator is not positive definite (curvature {0:e})")]
    NotSpd(f64),
    #[error("inner solver did not converge: {0}")]
    InnerSolve(String),
    #[error("consistency check failed: {0}")]
    Consistency(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
