use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Shape(String),

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("unknown label `{label}`{}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    UnknownLabel { label: String, row: Option<usize> },

    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        /// Parameters after the last epoch that finished with a finite, bounded loss.
        last_good: Option<Box<crate::model::Model>>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape_mismatch(op: &str, a: &[usize], b: &[usize]) -> Self {
        Error::Shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
    }

    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::UnknownLabel { .. }
                | Error::Parse { .. }
                | Error::Shape(_)
                | Error::Csv(_)
                | Error::Checkpoint(_)
        )
    }
}
