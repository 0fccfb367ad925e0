use std::fmt;
use std::path::PathBuf;

/// Where in an input file a problem was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// 1-based line of a CSV file (the header is line 1).
    Line(usize),
    /// 1-based entry of a JSON array.
    Entry(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Entry(n) => write!(f, "entry {n}"),
        }
    }
}

/// Errors produced by the placement pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{location}: field `{field}`: {message}")]
    Parse {
        location: Location,
        field: String,
        message: String,
    },

    #[error("{location}: expected {expected} weekly counts, found {found}")]
    WeekCount {
        location: Location,
        expected: usize,
        found: usize,
    },

    #[error("duplicate dataset_id `{0}`")]
    DuplicateId(String),

    #[error("dataset `{dataset}`: field `{field}`: {message}")]
    Invariant {
        dataset: String,
        field: String,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),

    #[error("feature arity mismatch: model expects {expected}, got {found}")]
    Arity { expected: usize, found: usize },

    #[error("dataset `{0}` is kept on disk with zero replicas")]
    ZeroReplicas(String),

    #[error("baseline downloading time is zero; ratio is undefined")]
    UndefinedRatio,

    #[error("inputs are not aligned: {0}")]
    Misaligned(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
