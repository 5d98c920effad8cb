use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("record {position} has empty text")]
    EmptyText { position: usize },

    #[error("malformed input on line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("invalid name {0:?}: use letters, digits, '.', '_' or '-'")]
    InvalidName(String),

    #[error("{0} is locked by another writer")]
    Locked(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty stop-word set")]
    EmptyStopwords,

    #[error("sample size {requested} exceeds corpus size {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("zero vector cannot be normalized")]
    ZeroVector,

    #[error("vector has non-finite component at index {index}")]
    NonFinite { index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("record {record}: dimension mismatch, expected {expected}, found {found}")]
    RecordDimMismatch {
        record: usize,
        expected: usize,
        found: usize,
    },

    #[error("record {record}: {source}")]
    InvalidRecord {
        record: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("embedding set is empty")]
    EmptyEmbeddingSet,

    #[error("corrupt embedding file: {0}")]
    Corrupt(String),

    #[error("corpus and embedding set share no ids")]
    EmptyIntersection,

    #[error("need at least {required} vectors, got {found}")]
    TooFewVectors { required: usize, found: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("percentile {0} outside (0, 100]")]
    PercentileOutOfRange(f64),

    #[error("topic {0:?} needs at least one exemplar")]
    NoExemplars(String),

    #[error("topic {0:?} already exists")]
    TopicExists(String),

    #[error("unknown topic {0:?}")]
    UnknownTopic(String),

    #[error("unknown scoring mode {0:?}")]
    UnknownMode(String),

    #[error("invalid scoring config: {0}")]
    InvalidConfig(String),

    #[error("version conflict: expected {expected}, current {current}")]
    VersionConflict { expected: u64, current: u64 },

    #[error("{count} sentences outside the supported range {min}..={max}")]
    CountOutOfRange { count: usize, min: usize, max: usize },

    #[error("sentence {0:?} has no relevance label")]
    Unlabeled(String),

    #[error("cutoff {k} outside 1..={len}")]
    CutoffOutOfRange { k: usize, len: usize },

    #[error("invalid hit-rate input: {0}")]
    InvalidHitRate(String),

    #[error("duplicate label for sentence {sentence_id:?} in topic {topic:?}")]
    DuplicateLabel { sentence_id: String, topic: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown id {0:?}")]
    UnknownId(String),

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

    /// Short stable identifier for the error variant, used in machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DuplicateId(_) => "duplicate_id",
            Error::EmptyText { .. } => "empty_text",
            Error::Malformed { .. } => "malformed",
            Error::InvalidName(_) => "invalid_name",
            Error::Locked(_) => "locked",
            Error::EmptyCorpus => "empty_corpus",
            Error::EmptyStopwords => "empty_stopwords",
            Error::SampleTooLarge { .. } => "sample_too_large",
            Error::ZeroVector => "zero_vector",
            Error::NonFinite { .. } => "non_finite",
            Error::DimMismatch { .. } | Error::RecordDimMismatch { .. } => "dim_mismatch",
            Error::InvalidRecord { .. } => "invalid_record",
            Error::EmptyEmbeddingSet => "empty_embedding_set",
            Error::Corrupt(_) => "corrupt",
            Error::EmptyIntersection => "empty_intersection",
            Error::TooFewVectors { .. } => "too_few_vectors",
            Error::EmptyInput => "empty_input",
            Error::PercentileOutOfRange(_) => "percentile_out_of_range",
            Error::NoExemplars(_) => "no_exemplars",
            Error::TopicExists(_) => "topic_exists",
            Error::UnknownTopic(_) => "unknown_topic",
            Error::UnknownMode(_) => "unknown_mode",
            Error::InvalidConfig(_) => "invalid_config",
            Error::VersionConflict { .. } => "version_conflict",
            Error::CountOutOfRange { .. } => "count_out_of_range",
            Error::Unlabeled(_) => "unlabeled",
            Error::CutoffOutOfRange { .. } => "cutoff_out_of_range",
            Error::InvalidHitRate(_) => "invalid_hit_rate",
            Error::DuplicateLabel { .. } => "duplicate_label",
            Error::Io { .. } => "io",
            Error::UnknownId(_) => "unknown_id",
            Error::Json(_) => "json",
        }
    }
}
