use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which label class a degenerate-group diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelClass {
    Positive,
    Negative,
}

impl std::fmt::Display for LabelClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelClass::Positive => f.write_str("positive"),
            LabelClass::Negative => f.write_str("negative"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: field `{field}`: {message}")]
    Malformed {
        line: usize,
        field: String,
        message: String,
    },

    #[error("unknown dataset format `{0}` (expected jsonl or csv)")]
    UnknownFormat(String),

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("attribute `{0}` is not registered in the dataset")]
    UnknownAttribute(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("group `{group}` has no {class} labelled samples")]
    DegenerateGroup { group: String, class: LabelClass },

    #[error("zero variance in `{0}`")]
    ZeroVariance(&'static str),

    #[error("record `{id}` is missing {what}")]
    MissingField { id: String, what: &'static str },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("solver did not converge after {iterations} iterations (max violation {max_violation:.3e}, dual objective {dual_objective:.6e})")]
    NonConvergence {
        iterations: usize,
        max_violation: f64,
        dual_objective: f64,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
