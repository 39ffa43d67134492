use std::path::PathBuf;

use crate::vocab::TokenId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown token id {id} (vocabulary size {size})")]
    UnknownToken { id: TokenId, size: usize },

    #[error("candidate `{surface}`: {reason}")]
    InvalidCandidate { surface: String, reason: String },

    #[error("cannot remove base characters (target {target} < base size {base})")]
    ReduceBelowBase { target: usize, base: usize },

    #[error("reduce target {target} exceeds vocabulary size {size}")]
    ReduceAboveSize { target: usize, size: usize },

    #[error("character {character:?} at position {position} is not in the base alphabet")]
    UnknownCharacter { position: usize, character: char },

    #[error("chunk smaller than longest token ({chunk} < {max_len})")]
    ChunkTooSmall { chunk: usize, max_len: usize },

    #[error("span too short: {0} positions")]
    SpanTooShort(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("misaligned data: {0}")]
    Misaligned(String),

    #[error("vocabulary hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("wrong trace kind: expected {expected}, found {found}")]
    WrongTraceKind { expected: String, found: String },

    #[error("{0}")]
    Numeric(String),

    #[error("awaiting external entropy for stage {0}")]
    AwaitingEntropy(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

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
