use thiserror::Error;

/// Problems with scenario files, parameters, or graph shape.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse scenario: {0}")]
    Parse(String),
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("communication graph is not strongly connected")]
    NotStronglyConnected,
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network solve did not converge after {iterations} iterations (residual {residual_pu:.3e} pu)")]
    NoConvergence { iterations: usize, residual_pu: f64 },
    #[error("PCC voltage collapsed to zero at iteration {iteration}")]
    VoltageCollapse { iteration: usize },
    #[error("invalid network input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("non-positive denominator z = {value} at node {node} in round {round}")]
    NonPositiveDenominator {
        node: usize,
        round: usize,
        value: f64,
    },
    #[error("consensus did not terminate within {rounds} rounds")]
    NoTermination { rounds: usize },
    #[error("initial vector has {got} entries for a {expected}-node graph")]
    SizeMismatch { expected: usize, got: usize },
    #[error("invalid consensus configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error("not at steady state: {0}")]
    NotSteady(String),
    #[error("invalid control input: {0}")]
    InvalidInput(String),
}
