use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("header mismatch: {0}")]
    HeaderMismatch(String),

    #[error("cannot parse value {value:?} at row {row}, column {column}")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: String },

    #[error("arity mismatch: expected {expected} features, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("column {0} is constant and cannot be inverted")]
    ConstantColumn(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),

    #[error("length mismatch: {0} actual values vs {1} predictions")]
    LengthMismatch(usize, usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("sample {0} is not out-of-bag for any tree")]
    NoOobTrees(usize),

    #[error("prediction failed at sample {index}: {source}")]
    Prediction {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported model format version {0}")]
    Version(u32),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
