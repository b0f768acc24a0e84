use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A moment profile lacks an entry required by the requested order.
    /// `var` is 1-based to match how profiles are usually written down.
    #[error("incomplete moment profile: missing entry for variable {var}, order {order}")]
    IncompleteProfile { var: usize, order: u32 },

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("linear program is infeasible: {0}")]
    Infeasible(String),

    #[error("pivot limit of {0} reached without convergence")]
    PivotLimit(usize),

    #[error("time budget of {0:?} exhausted")]
    Timeout(std::time::Duration),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Json(_) | Error::Parse(_) => 2,
            Error::HypothesisViolation(_) => 3,
            Error::SizeLimit(_) | Error::Timeout(_) => 4,
            _ => 1,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
