use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] journe_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("ledger has no constant for {0}; run once with --freeze")]
    LedgerMissing(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("infeasible generation: {0}")]
    Infeasible(String),
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
}

impl LabError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        LabError::Io { path: path.as_ref().display().to_string(), source }
    }
}

pub type LabResult<T> = std::result::Result<T, LabError>;
