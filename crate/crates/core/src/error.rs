use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid dilation factor {0} (must be positive)")]
    InvalidDilation(String),
    #[error("degenerate box has zero measure")]
    DegenerateBox,
    #[error("enumeration cap exceeded: {count} candidates > cap {cap}")]
    CapExceeded { count: usize, cap: usize },
    #[error("rectangle is not contained in the enlarged set")]
    NotEmbedded,
    #[error("collection is not pairwise incomparable: member {0} contains member {1}")]
    NotIncomparable(usize, usize),
    #[error("no shifted-grid witness for {0}")]
    NoWitness(String),
    #[error("breakpoint {0} is not a dyadic rational; grid enumeration requires dyadic breakpoints")]
    NonDyadicBreakpoint(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
