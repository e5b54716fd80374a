use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("prediction {z} outside the loss interval [{lo}, {hi}]")]
    OutOfRange { z: f64, lo: f64, hi: f64 },

    #[error("label {y} is not admissible for this loss family")]
    InvalidLabel { y: f64 },

    #[error("custom loss family requires user-supplied (rho, alpha) constants")]
    MissingConstants,

    #[error("loss constants not certified: {0}")]
    Uncertified(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("matrix is not positive definite: eigenvalue {eigenvalue:e} below threshold {threshold:e}")]
    NotPositiveDefinite { eigenvalue: f64, threshold: f64 },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("domain {0} cannot be mapped through a non-identity preconditioner")]
    UnsupportedDomainTransform(&'static str),

    #[error("prediction {z} of sample {index} outside the loss interval [{lo}, {hi}]")]
    InfeasiblePrediction { index: usize, z: f64, lo: f64, hi: f64 },

    #[error("distribution spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
