use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("patient `{0}` has events or diagnoses but no outcome row")]
    UnknownPatient(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("center node {0} has neither labs nor diagnoses")]
    UntrainableCenter(String),

    #[error("no eligible negative {0} nodes for center")]
    EmptyNegativePool(&'static str),

    #[error("both classes must be present: {0}")]
    SingleClass(&'static str),

    #[error("feature mode {0} requires trained embedding parameters")]
    MissingEmbeddings(&'static str),

    #[error("input has {time_steps} time steps but the filter width is {width}")]
    TooShort { time_steps: usize, width: usize },

    #[error("{0} training diverged to non-finite parameters; lower the learning rate")]
    Diverged(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
