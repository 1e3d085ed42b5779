//! Error type shared by every module of the toolkit.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input line; `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("duplicate entry for query {query:?}, doc {doc:?}")]
    DuplicatePair { query: String, doc: String },

    #[error("duplicate term {0} in sparse vector")]
    DuplicateTerm(u32),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{0} must be non-empty")]
    Empty(&'static str),

    #[error("invalid {what}: {msg}")]
    Invalid { what: &'static str, msg: String },

    #[error("score variance is zero but the target standard deviation is positive")]
    ZeroScoreVariance,

    #[error("cannot subsample {requested} negatives from a pool of {available}")]
    SubsampleTooLarge { requested: usize, available: usize },

    #[error("missing scores for {count} (query, doc) pairs, e.g. {examples:?}")]
    MissingScores {
        count: usize,
        examples: Vec<(String, String)>,
    },

    #[error("no token-count vector for id {0:?}")]
    MissingVector(String),

    #[error("token id {id} is outside the vocabulary (size {vocab_size})")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("run and qrels share no query")]
    NoSharedQueries,

    #[error("group {0:?} has no negatives")]
    EmptyNegatives(String),

    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },

    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),

    #[error("invalid training group {id:?}: {msg}")]
    InvalidGroup { id: String, msg: String },

    #[error("meta-analysis needs at least two query-set comparisons, got {0}")]
    NotEnoughSets(usize),

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn invalid(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            msg: msg.into(),
        }
    }
}
