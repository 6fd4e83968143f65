use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, IltError>;

#[derive(Debug, Error)]
pub enum IltError {
    #[error("dense TCC materialization requested for n = {n} (limit {limit})")]
    CapacityExceeded { n: usize, limit: usize },

    #[error("eigensolver did not converge: {0}")]
    ConvergenceFailure(String),

    #[error("grid mismatch: expected {expected}x{expected}, got {got_rows}x{got_cols}")]
    GridMismatch {
        expected: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("objective is not finite at the initial guess (gamma = 0 requires a feasible start)")]
    NonFiniteObjective,

    #[error("geometry overflow: {0}")]
    GeometryOverflow(String),

    #[error("parse error at line {line}, offset {offset}: {msg}")]
    Parse { line: usize, offset: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IltError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IltError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            IltError::ConvergenceFailure(_) | IltError::NonFiniteObjective | IltError::DegenerateTarget(_) => 3,
            _ => 2,
        }
    }
}
