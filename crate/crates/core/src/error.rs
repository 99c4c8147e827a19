use alloc::string::String;

use crate::game::ValidationReport;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("agent index {index} out of range for a game with {agents} agents")]
    AgentOutOfRange { index: usize, agents: usize },
    #[error("state index {index} out of range for a game with {states} states")]
    StateOutOfRange { index: usize, states: usize },
    #[error("game failed validation with {} violation(s)", .0.violations.len())]
    InvalidGame(ValidationReport),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("induced chain is not ergodic: {0}")]
    Ergodicity(String),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("game has no certified potential function")]
    UnsupportedStructure,
    #[error("infeasible projection: lower bound {lower_bound} with {len} coordinates")]
    Infeasible { lower_bound: f64, len: usize },
    #[error("policy of agent {agent} has zero probability at state {state}, action {action}")]
    ZeroSupport {
        agent: usize,
        state: usize,
        action: usize,
    },
    #[error("trajectory length error: {0}")]
    Length(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),
}
