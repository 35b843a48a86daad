use std::path::PathBuf;

/// Errors produced anywhere in the lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid world spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("cannot encode {text:?}: {reason}")]
    Unencodable { text: String, reason: String },

    #[error("{path}: {reason}")]
    Dataset { path: PathBuf, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("sequence of length {len} exceeds context length {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("token id {id} outside vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("continuation must contain at least one token")]
    EmptyContinuation,

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("category {0:?} has no beam dumps")]
    EmptyCategory(String),

    #[error("candidate pool is empty after removing the truth aliases of triple {0}")]
    EmptyPool(String),

    #[error("pad glyph inside pair text: {0:?}")]
    PadInText(String),

    #[error("loser equals winner after tokenization for triple {0}")]
    IdenticalPair(String),

    #[error("beam dump refers to unknown triple {0:?}")]
    UnknownTriple(String),

    #[error("similarity undefined: {0}")]
    Undefined(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("stage {stage} failed ({field}): {source}")]
    Stage {
        stage: String,
        field: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
