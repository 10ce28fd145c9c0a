use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("recipe: {0}")]
    Recipe(String),
    #[error("header mismatch: missing columns {0:?}")]
    HeaderMismatch(Vec<String>),
    #[error("all rows dropped ({read} read)")]
    AllRowsDropped { read: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("privacy budget exceeded: requested eps={requested}, remaining eps={remaining}")]
    BudgetExceeded { requested: f64, remaining: f64 },
    #[error("budget share #{0} was already consumed")]
    AlreadyConsumed(usize),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("labels contain a single class")]
    SingleClass,
    #[error("protected group `{0}` is empty")]
    EmptyGroup(&'static str),
    #[error("unknown synthesizer `{0}`")]
    UnknownSynthesizer(String),
    #[error("invalid experiment config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
