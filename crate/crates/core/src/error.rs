//! Error type shared by the simulator crates.

use thiserror::Error;

/// Errors surfaced by scenario generation, training, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field violated its documented constraint.
    #[error("invalid config: field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    /// Parameter/data dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Rejection sampling could not place cluster centers.
    #[error("center placement failed after {attempts} attempts (M={num_clusters}, d={dimension})")]
    CenterPlacementFailed {
        num_clusters: usize,
        dimension: usize,
        attempts: usize,
    },

    /// A parameter vector became non-finite during descent.
    #[error("divergence detected at round {round}, agent {agent} (learning rate too large?)")]
    DivergenceDetected { round: usize, agent: usize },

    /// A hard-cluster assignment left cluster `m` with no agents.
    #[error("empty cluster {0}")]
    EmptyCluster(usize),

    /// An evaluation method was requested for a model kind it does not support.
    #[error("unsupported evaluation: {0}")]
    UnsupportedEvaluation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
