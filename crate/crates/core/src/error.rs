use thiserror::Error;

/// Errors surfaced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum CateError {
    /// Input data violates a structural requirement (shape, arms, finiteness).
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    /// A caller-supplied parameter is out of range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// The unpenalized design is not of full column rank.
    #[error("rank-deficient design ({context}); drop the singular covariate or use lasso mode")]
    RankDeficient { context: String },

    /// A solver failed to produce a usable answer and no fallback applied.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("csv schema error: {0}")]
    Schema(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CateError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        CateError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            CateError::InvalidData(_)
                | CateError::InvalidParameter { .. }
                | CateError::DimensionMismatch { .. }
                | CateError::RankDeficient { .. }
                | CateError::Schema(_)
                | CateError::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, CateError>;
