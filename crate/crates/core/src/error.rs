use thiserror::Error;

/// Errors produced while validating data, fitting nuisance models or
/// computing treatment-effect estimates.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("rank-deficient design matrix: {0}")]
    RankDeficient(String),

    #[error("covariate `{0}` is constant; the index direction is unidentifiable")]
    ConstantCovariate(String),

    #[error("treatment has no variation: {0}")]
    NoTreatmentVariation(String),

    #[error("degenerate treatment residual variation (sum of squares {0:e})")]
    DegenerateTreatmentResidual(f64),

    #[error("collinear design: {0}")]
    Collinear(String),

    #[error("truncation order selection failed for every candidate: {0}")]
    SelectionFailed(String),

    #[error("invalid data: {0}")]
    InvalidData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
