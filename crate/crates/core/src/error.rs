use thiserror::Error;

/// Errors produced by the geometric and dynamical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConalError {
    #[error(
        "matrix is not symmetric: max asymmetry {max_asymmetry:e} exceeds tolerance {tolerance:e}"
    )]
    NotSymmetric { max_asymmetry: f64, tolerance: f64 },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error(
        "matrix is not positive definite: eigenvalue {eigenvalue:e} at or below floor {floor:e}"
    )]
    NotPositiveDefinite { eigenvalue: f64, floor: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("barrier breach at t = {time}: edge ({from}, {to}) gap {gap} reached the limit")]
    BarrierBreach {
        time: f64,
        from: usize,
        to: usize,
        gap: f64,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, ConalError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> ConalError {
    ConalError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
