use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate caption id `{0}`")]
    DuplicateId(String),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("matrix has {rows} rows but {keys} keys were given")]
    RowCountMismatch { rows: usize, keys: usize },
    #[error("matrix data length {len} is not a multiple of dimension {dim}")]
    RaggedMatrix { len: usize, dim: usize },
    #[error("non-finite value in row {0}")]
    NonFiniteValue(usize),
    #[error("duplicate video id `{0}`")]
    DuplicateVideoId(String),
    #[error("video `{0}` has no frames")]
    EmptyVideo(String),
    #[error("missing embedding for `{0}`")]
    MissingEmbedding(String),
    #[error("phrase `{0}` has no category")]
    UncategorizedPhrase(String),
    #[error("phrase `{0}` is assigned to more than one category")]
    ConflictingAssignment(String),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("every category is empty")]
    AllCategoriesEmpty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("bank is empty")]
    EmptyBank,
    #[error("input is empty")]
    EmptyInput,
    #[error("statistics were computed for {found} but {expected} was requested")]
    StatsModeMismatch { expected: &'static str, found: &'static str },
    #[error("category layout of statistics does not match the bank")]
    CategoryMismatch,
    #[error("unknown caption `{0}`")]
    UnknownCaption(String),
    #[error("unknown video `{0}`")]
    UnknownVideo(String),
    #[error("{candidates} candidates but {references} reference sets")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("need at least 2 sentences, got {0}")]
    TooFewSentences(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}
