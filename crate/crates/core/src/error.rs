use thiserror::Error;

/// Errors produced while building models or running syntheses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("horizon must be at least {min}, got {got}")]
    InvalidHorizon { min: usize, got: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("{what} contains a non-finite entry")]
    NonFiniteEntry { what: &'static str },

    #[error("input weight is not positive definite (min eigenvalue {min_eig:.3e})")]
    IndefiniteWeight { min_eig: f64 },

    #[error("state weight is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    IndefiniteStateWeight { min_eig: f64 },

    #[error("noise bound must be strictly positive, got {got}")]
    InvalidBound { got: f64 },

    #[error("response matrix is not valid: {reason}")]
    InvalidResponse { reason: String },

    #[error("variable `{0}` is already declared")]
    DuplicateVariable(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid noise model parameters: {0}")]
    InvalidNoiseModel(String),

    #[error("bounds are not axis-aligned boxes; only box bounds are supported here")]
    UnsupportedBounds,

    #[error("solver failed: {0}")]
    SolverFailure(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
