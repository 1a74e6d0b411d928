use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Linear estimator with (numerically) zero variance.
    #[error("degenerate estimator: variance {variance:e} is not positive")]
    DegenerateEstimator { variance: f64 },

    /// Covariance matrix violates the uncertainty principle.
    #[error("unphysical state: minimum symplectic eigenvalue {min_symplectic_eigenvalue} < 1/2")]
    Unphysical { min_symplectic_eigenvalue: f64 },

    #[error("undersampled: {available} sifted rounds available, at least {required} required")]
    Undersampled { available: usize, required: usize },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
