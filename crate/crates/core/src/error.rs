use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation was given an out-of-range parameter.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A (context, arm) pair outside the feasible set was used.
    #[error("infeasible context-arm pair: context {context}, arm {arm}")]
    Infeasible { context: usize, arm: usize },

    /// The operation needs information the instance does not carry
    /// (e.g. exact expected payoffs on a per-round adversarial table).
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// An input value violated its contract (e.g. payoff outside [0,1]).
    #[error("invalid input: {0}")]
    Input(String),

    /// Caller broke the step/feedback protocol of a sequential policy.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A structural invariant that must hold in a correct build was violated.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// Bad experiment configuration (mismatched spaces, missing files, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Metric axioms failed validation.
    #[error("metric validation failed: {0}")]
    Metric(String),

    /// Lipschitz validation of an instance failed.
    #[error("lipschitz validation failed: {0}")]
    Lipschitz(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
