use std::path::PathBuf;

use crate::month::Month;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid month string {0:?} (expected YYYY-MM)")]
    InvalidMonth(String),

    #[error("no snapshot files (*.vec) found in {0}")]
    EmptyDataset(PathBuf),

    #[error("dimension mismatch: {month} has dim {found}, expected {expected}")]
    DimensionMismatch {
        month: Month,
        expected: usize,
        found: usize,
    },

    #[error("duplicate month {0} in dataset")]
    DuplicateMonth(Month),

    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("token {token:?} absent from snapshot {month}")]
    TokenAbsent { token: String, month: Month },

    #[error("token {0:?} appears in no snapshot")]
    TokenNeverSeen(String),

    #[error("only {found} shared second-order components, need at least {required}")]
    TooFewComponents { found: usize, required: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("t statistic undefined: zero sample variance with mean {mean} != mu {mu}")]
    ZeroVariance { mean: f64, mu: f64 },

    #[error("fewer than 2 high-change tokens matched the lexicon; unmatched: {unmatched:?}")]
    TooFewMatched { unmatched: Vec<String> },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
