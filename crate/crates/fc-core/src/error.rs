//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the pipeline, tagged with enough context
/// (subject id, column, stage coordinates) to locate the offending input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("subject {subject}: {reason}")]
    Subject { subject: String, reason: String },

    #[error("subject {subject}: column {column} has zero sample variance")]
    ConstantColumn { subject: String, column: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("missing label for subject {0}")]
    MissingLabel(String),

    #[error(
        "shrunk covariance is not positive definite (lambda = {lambda}); \
         retry with lambda >= {suggested}"
    )]
    NotPositiveDefinite { lambda: f64, suggested: f64 },

    #[error(
        "empty feature selection: every |weight| fell below the threshold {threshold}; lower it"
    )]
    EmptySelection { threshold: f64 },

    #[error("degenerate weak learner: weighted error {error:.4} >= 0.5 at stage {stage}")]
    DegenerateWeakLearner { stage: usize, error: f64 },

    #[error("training diverged: non-finite loss at epoch {epoch} (lr = {lr})")]
    Diverged { epoch: usize, lr: f64 },

    #[error("fold {fold} repeat {repeat}: {source}")]
    FoldFailure {
        fold: usize,
        repeat: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Helper for ad-hoc validation failures.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
