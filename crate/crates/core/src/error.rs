use thiserror::Error;

/// Errors raised by the numerical engine and the experiment harness.
#[derive(Debug, Error)]
pub enum BoltzError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("real part of quadratic form is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("truncation tail {tail:.3e} exceeds tolerance {tolerance:.3e} ({context})")]
    Truncation {
        tail: f64,
        tolerance: f64,
        context: String,
    },

    #[error("lattice window too small: boundary mass {mass:.3e} above {threshold:.3e}")]
    Window { mass: f64, threshold: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input excluded: {0}")]
    Excluded(String),

    #[error("experiment failed at {coordinates}: {source}")]
    AtCoordinates {
        coordinates: String,
        #[source]
        source: Box<BoltzError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BoltzError {
    pub fn at(self, coordinates: impl Into<String>) -> BoltzError {
        BoltzError::AtCoordinates {
            coordinates: coordinates.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, BoltzError>;
