//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("total dimension {total} exceeds the dense-matrix budget of {budget} rows")]
    CapacityExceeded { total: usize, budget: usize },

    #[error("factor index {index} out of range for {nfactors} tensor factors")]
    InvalidFactor { index: usize, nfactors: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("Fock cutoff insufficient: {detail}")]
    CutoffInsufficient { detail: String },

    #[error("singular matrix encountered in linear solve")]
    Singular,

    #[error("ill-conditioned projection: Gram condition number {cond:.3e} exceeds {limit:.1e}")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:.3e}")]
    NotPsd { min_eig: f64 },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
