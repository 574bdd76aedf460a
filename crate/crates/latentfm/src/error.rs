use std::io;
use std::path::PathBuf;

use latentfm_core::corpus::CorpusError;
use latentfm_core::embed::EmbedError;
use latentfm_core::eval::EvalError;
use latentfm_core::fm::FmError;
use latentfm_core::lda::LdaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: {message}")]
    Validation { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Mismatch(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lda(#[from] LdaError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Fm(#[from] FmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, message: message.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
