use std::io;
use std::path::PathBuf;

use crate::io::FormatError;

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("missing input file {0}")]
    MissingInput(PathBuf),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord { path: PathBuf, line: usize, reason: String },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("no prediction for id {0}")]
    MissingId(String),
    #[error(transparent)]
    Core(#[from] promptbank_core::Error),
}

impl PipelineError {
    /// Process exit status: 2 for configuration problems, 3 for absent
    /// inputs, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::InvalidConfig(_) => 2,
            Self::MissingInput(_) => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            Self::MissingInput(path)
        } else {
            Self::Io { path, source }
        }
    }
}
