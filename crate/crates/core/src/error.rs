use thiserror::Error;

/// Errors raised by the selector, the baseline and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design is rank deficient at column {index} ({name})")]
    RankDeficient { index: usize, name: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite log-likelihood at iteration {iteration}")]
    NonFiniteLikelihood { iteration: usize },

    #[error("{path}: row {row}, column {column}: {message}")]
    Cell {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("too many failed replicates: {failed} of {total}")]
    Study { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used in error JSON emitted by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Numerical(_) => "numerical",
            Error::NonFiniteLikelihood { .. } => "non_finite_likelihood",
            Error::Cell { .. } => "cell",
            Error::Schema(_) => "schema",
            Error::Study { .. } => "study",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
