use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("word not found: {0}")]
    MissingWord(String),

    /// The two words defining a gender direction (nearly) coincide, so the
    /// direction is undefined. Metrics built on it report NA.
    #[error("degenerate direction: |{fem} - {masc}| = {norm:e}")]
    DegenerateDirection {
        fem: String,
        masc: String,
        norm: f64,
    },

    #[error("requested {requested} components but numerical rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("matrix is zero after centering")]
    ZeroMatrix,

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("manifest: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }
}
