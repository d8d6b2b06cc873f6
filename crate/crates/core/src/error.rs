use thiserror::Error;

/// Errors raised by the numerical kernels, the conjugate model and the calibrator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite: non-positive pivot at index {pivot}")]
    NotPositiveDefinite { pivot: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("argument outside its domain: {0}")]
    Domain(String),

    /// A sample-based predictive cannot resolve a tail probability smaller than `1 / samples`.
    #[error("quantile level {level} is below the resolution of {samples} samples")]
    Saturated { level: f64, samples: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
