use std::path::PathBuf;

/// Errors produced anywhere in the clustering pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("cluster {cluster} has zero soft frequency")]
    DegenerateCluster { cluster: usize },

    #[error("infinite divergence: q[{row}][{col}] = 0 where p > 0")]
    InfiniteDivergence { row: usize, col: usize },

    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("malformed parameter file: {0}")]
    ParamFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Dimension { op, left, right }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
