use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MilError {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty bag: {0}")]
    EmptyBag(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("stale trace: {0}")]
    StaleTrace(String),

    #[error("non-finite loss at epoch {epoch}, bag {bag_id}: {loss}")]
    NonFiniteLoss {
        epoch: usize,
        bag_id: String,
        loss: f64,
    },

    #[error("nothing to mine: hard negative pool is empty, skip augmentation")]
    NothingToMine,

    #[error("image format: {0}")]
    Image(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MilError {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        MilError::Config {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MilError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            MilError::Config { .. }
                | MilError::Dimension(_)
                | MilError::Parse { .. }
                | MilError::EmptyDataset
                | MilError::EmptyBag(_)
                | MilError::Precondition(_)
                | MilError::Image(_)
                | MilError::Json(_)
        )
    }
}

pub type Result<T, E = MilError> = std::result::Result<T, E>;
