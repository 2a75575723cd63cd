use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::BlockKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("empty file: {0}")]
    EmptyFile(PathBuf),

    #[error("unknown task label `{0}`")]
    UnknownLabel(String),

    #[error("time decreases within block {key} at line {line}")]
    NonMonotonicTime { key: BlockKey, line: u64 },

    #[error("cannot parse `{value}` in column `{column}` at line {line}")]
    Parse {
        column: String,
        value: String,
        line: u64,
    },

    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("cleaning excluded every subject and session")]
    AllDataExcluded,

    #[error("block {0} is too short to host a single fold")]
    BlockTooShort(BlockKey),

    #[error("need at least two usable folds, found {0}")]
    InsufficientFolds(usize),

    #[error("degenerate training input: {0}")]
    DegenerateInput(String),

    #[error("feature dimension mismatch: model expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid classifier spec `{spec}`: {reason}")]
    InvalidSpec { spec: String, reason: String },

    #[error("need at least two classifier specs to rank, got {0}")]
    TooFewSpecs(usize),

    #[error("empty timeline")]
    EmptyTimeline,

    #[error("no retained blocks left for phase 2")]
    NoRetainedBlocks,

    #[error("nothing to report: {0}")]
    EmptyResult(String),

    #[error("subject `{subject}` task {task} not present in result")]
    UnknownSubjectTask { subject: String, task: u8 },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invariant violated in stage `{stage}`: {detail}")]
    Invariant { stage: String, detail: String },

    #[error("stage `{stage}` failed")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Invariant { .. } | Error::Stage { .. } => self,
            other => Error::Stage {
                stage: stage.into(),
                source: Box::new(other),
            },
        }
    }

    pub fn stage(&self) -> Option<&str> {
        match self {
            Error::Invariant { stage, .. } | Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// The innermost error, past any stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
