use thiserror::Error;

use crate::objectives::ObjectiveKind;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("agent {agent} out of range for {n_agents} agents")]
    AgentOutOfRange { agent: usize, n_agents: usize },

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error("agent {agent} diverged in round {round} (non-finite local iterate)")]
    Divergence { agent: usize, round: usize },

    #[error("aggregated model is non-finite in round {round}")]
    NonFiniteAggregate { round: usize },

    #[error("operation not supported for objective kind {0:?}")]
    UnsupportedKind(ObjectiveKind),

    #[error("estimation failed: {0}")]
    Estimation(String),
}

impl CoreError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CoreError::InvalidConfig(msg.into())
    }
}
