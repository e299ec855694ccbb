use thiserror::Error;

/// Errors raised by the factorization kernels, model construction and I/O.
///
/// Filter divergence is not an error: it is recorded as a
/// [`FilterFailure`](crate::filters::FilterFailure) so a benchmark can
/// observe it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:e} exceeds {tolerance:e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive semidefinite (pivot {index} = {value:e})")]
    NotPositiveSemidefinite { index: usize, value: f64 },

    #[error("factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("innovation covariance is singular or indefinite at step {step}")]
    SingularInnovationCovariance { step: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
