use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("numeric error in {op}: {msg}")]
    Numeric { op: &'static str, msg: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("capacity exceeded: {tokens} tokens requested, positional table holds {max_tokens}")]
    Capacity { tokens: usize, max_tokens: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("text-proxy pretraining failed: model perplexity {model_ppl:.4} is not below unigram perplexity {unigram_ppl:.4}")]
    PretrainFailed { model_ppl: f64, unigram_ppl: f64 },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),

    #[error("config mismatch: expected {expected}, found {found}")]
    ConfigMismatch { expected: String, found: String },

    #[error("csv parse error at row {row}, column '{column}': {msg}")]
    Parse {
        row: usize,
        column: String,
        msg: String,
    },

    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("underdetermined fit: {observations} observations for {parameters} free parameters")]
    Underdetermined {
        observations: usize,
        parameters: usize,
    },

    #[error("relative error undefined: reference mse is zero")]
    UndefinedReference,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
