use thiserror::Error;

/// Errors produced by the elicitation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid performance table: {0}")]
    InvalidTable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("pair ({0}, {1}) has already been asked")]
    DuplicatePair(usize, usize),

    #[error("non-finite gradient at iteration {iteration} (coordinate {coordinate})")]
    NonFiniteGradient { iteration: usize, coordinate: usize },

    #[error("no candidate questions remain: elicitation is saturated")]
    Saturated,

    #[error("preference constraints are infeasible")]
    Infeasible,

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("session not found: {0}")]
    SessionNotFound(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
