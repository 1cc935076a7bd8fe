use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian: residual {residual:.3e} exceeds {bound:.3e}")]
    NotHermitian { residual: f64, bound: f64 },

    #[error("multiplicity mismatch: {left} vs {right}")]
    MultiplicityMismatch { left: usize, right: usize },

    #[error("operator basis does not span the matrix algebra: rank {rank} < {required}")]
    BasisNotSpanning { rank: usize, required: usize },

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:.3e}")]
    NotPsd { min_eig: f64 },

    #[error("step too large: h*|K| = {product:.3e} exceeds {limit}")]
    StepTooLarge { product: f64, limit: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
