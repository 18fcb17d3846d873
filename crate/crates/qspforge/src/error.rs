//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by protocol evaluation, analysis, and synthesis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {0}")]
    UnsupportedDim(usize),

    #[error("columns are not orthonormal (residual {residual:.3e})")]
    NotOrthonormal { residual: f64 },

    #[error("state is not normalized (autocorrelation residual {residual:.3e})")]
    NotNormalized { residual: f64 },

    #[error("state violates the {convention} conditions: {detail}")]
    ConventionViolated { convention: String, detail: String },

    #[error("Laurent state does not have definite parity ({even} even and {odd} odd exponents)")]
    IndefiniteParity { even: usize, odd: usize },

    #[error(
        "no processing operator lowers the degree: {detail} \
         (span ranks: a-axis {rank_a}, b-axis {rank_b}, diagonal {rank_d})"
    )]
    NotLowerable {
        rank_a: usize,
        rank_b: usize,
        rank_d: usize,
        detail: String,
    },

    #[error("endpoint coefficient at {index:?} has norm {norm:.3e}, below the decomposition threshold")]
    ZeroEndpoint { index: (i64, i64), norm: f64 },

    #[error("unsupported coefficient support: {0}")]
    BadSupport(String),

    #[error("not a polynomial state: autocorrelation residual {residual:.3e} after rescaling")]
    NotAPolynomialState { residual: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid signal convention: {0}")]
    InvalidConvention(String),

    #[error("degree reduction failed: residual mass {leaked:.3e} outside the target support")]
    DegreeReduction { leaked: f64 },
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::UnsupportedDim(_) => "unsupported-dim",
            Error::NotOrthonormal { .. } => "not-orthonormal",
            Error::NotNormalized { .. } => "not-normalized",
            Error::ConventionViolated { .. } => "convention-violated",
            Error::IndefiniteParity { .. } => "indefinite-parity",
            Error::NotLowerable { .. } => "not-lowerable",
            Error::ZeroEndpoint { .. } => "zero-endpoint",
            Error::BadSupport(_) => "bad-support",
            Error::NotAPolynomialState { .. } => "not-a-polynomial-state",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::InvalidConvention(_) => "invalid-convention",
            Error::DegreeReduction { .. } => "degree-reduction",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
