use thiserror::Error;

pub type Result<T> = std::result::Result<T, ChromaError>;

#[derive(Debug, Error)]
pub enum ChromaError {
    /// A coordinate vector is not on the sphere it was checked against.
    #[error("point off the sphere: |p| = {norm}, expected radius {radius}")]
    InvalidPoint { norm: f64, radius: f64 },

    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    /// Large-radius formulas were asked for at a radius where they have no solution.
    #[error("radius {radius} is outside the large-radius regime (requires R > sqrt(5)/2)")]
    Regime { radius: f64 },

    #[error("point has no preimage under the shrink map (tangential radius {tangential} > {limit})")]
    NoPreimage { tangential: f64, limit: f64 },

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The sampled edge family leaves these vertices uncovered.
    #[error("incomplete cover: {} vertices uncovered", uncovered.len())]
    IncompleteCover { uncovered: Vec<usize> },

    #[error("infeasible: vertex {vertex} lies in no edge")]
    Infeasible { vertex: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ChromaError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        ChromaError::Domain(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        ChromaError::InvalidParameter(msg.into())
    }
}
