use std::io;

use thiserror::Error;

/// Errors produced by the embedding engine.
#[derive(Debug, Error)]
pub enum GgdError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cannot normalize: {0}")]
    Normalization(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("corruption impossible: {0}")]
    Corruption(String),

    #[error("invalid probability {name}={value}")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("invalid config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("linear aggregation requires a weight vector")]
    MissingLinearWeight,

    #[error("forward cache does not match parameters: {0}")]
    StaleCache(String),

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("invalid node id {id} (num_nodes={num_nodes})")]
    InvalidNode { id: u64, num_nodes: usize },

    #[error(
        "non-finite loss at epoch {epoch}: loss={loss}, grad norms={grad_norms:?}"
    )]
    NonFinite {
        epoch: usize,
        loss: f64,
        grad_norms: Vec<f64>,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl GgdError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        GgdError::Shape(msg.into())
    }

    pub(crate) fn config(key: &str, msg: impl Into<String>) -> Self {
        GgdError::Config {
            key: key.to_string(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, GgdError>;
