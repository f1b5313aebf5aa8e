//! Error types shared across the pipeline.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A metric that cannot be computed from the given sample set.
///
/// These are surfaced as values (not panics) because the checkpoint promotion
/// gate must observe them and keep the incumbent model.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    /// AUC needs at least one positive and one negative label.
    #[error("AUC undefined: single-class input ({positives} positives, {negatives} negatives)")]
    SingleClass { positives: usize, negatives: usize },
    /// COPC divides by the mean predicted score.
    #[error("COPC undefined: mean predicted score is zero")]
    ZeroMeanScore,
    /// No samples at all.
    #[error("metric undefined: empty sample set")]
    Empty,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A caller broke a documented precondition (unsorted input, shape
    /// mismatch, bucket id out of range, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A non-finite value appeared during forward/backward/update.
    #[error("non-finite value in {layer}: {detail}")]
    Numeric { layer: String, detail: String },

    #[error("fit error: {0}")]
    Fit(String),

    #[error(transparent)]
    Metric(#[from] MetricError),

    #[error("parse error in {context} at line {line}: {detail}")]
    Parse {
        context: String,
        line: usize,
        detail: String,
    },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn numeric(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            layer: layer.into(),
            detail: detail.into(),
        }
    }
}
