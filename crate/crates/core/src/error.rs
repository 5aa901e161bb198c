use std::path::PathBuf;

use crate::baselines::ArimaModel;

/// Errors returned by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("kernel of size {kernel} does not fit a sequence of length {len}")]
    Window { kernel: usize, len: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value during evaluation: {0}")]
    NonFinite(String),
    #[error("degenerate window: max equals min ({0})")]
    DegenerateWindow(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("series {symbol}: {msg}")]
    Validation { symbol: String, msg: String },
    #[error("split: {0}")]
    Split(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {msg}")]
    Diverged { epoch: usize, batch: usize, msg: String },
    #[error("ARIMA fit did not converge after {iterations} iterations")]
    ArimaNotConverged { iterations: usize, last: Box<ArimaModel> },
    #[error("checkpoint {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Diverged { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
