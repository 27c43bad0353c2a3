use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] blan_autograd::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {term} at iteration {iteration}")]
    NonFinite { term: &'static str, iteration: usize },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: malformed image: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed dataset: {0}")]
    Dataset(String),

    #[error("cosine similarity undefined for a zero-norm feature")]
    ZeroNorm,

    #[error("feature extractor reached nearest-neighbour accuracy {accuracy:.3} (need > {required}); final cross-entropy {loss:.4}")]
    Pretrain {
        accuracy: f64,
        required: f64,
        loss: f64,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
