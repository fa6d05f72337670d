use thiserror::Error;

use crate::mdp::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid noise variance {0}; must be positive and finite")]
    InvalidNoise(f64),

    #[error("empty target set")]
    EmptyTargets,

    #[error("query set must be non-empty")]
    EmptyQuerySet,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node {0} is out of range")]
    InvalidNode(NodeId),

    #[error("node {to} is unreachable from node {from}")]
    Unreachable { from: NodeId, to: NodeId },

    #[error("invalid sensing modalities: {0}")]
    InvalidModality(String),

    #[error("action {0} is not feasible in the current belief")]
    InfeasibleAction(String),

    #[error("no feasible action; the belief is terminal")]
    NoFeasibleAction,

    #[error("sensing requires a beacon at node {0}")]
    NotAtBeacon(NodeId),

    #[error("invalid environment parameters: {0}")]
    InvalidEnvironment(String),

    #[error("invalid solver configuration: {0}")]
    InvalidSolver(String),

    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Configuration problems are reported to the CLI user as usage errors.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidKernel(_)
                | Error::InvalidGraph(_)
                | Error::InvalidModality(_)
                | Error::InvalidEnvironment(_)
                | Error::InvalidSolver(_)
                | Error::InvalidConfig(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
