use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Response value outside the support of the loss family.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed numeric input (non-finite score, wrong length, ...).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("feature width mismatch: expected {expected} columns, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite scores at boosting iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },

    #[error("all grid cells diverged: {0}")]
    AllCellsDiverged(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::NonFinite { .. } | Error::AllCellsDiverged(_) => 3,
            _ => 2,
        }
    }
}
