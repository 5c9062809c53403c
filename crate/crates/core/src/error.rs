use thiserror::Error;

use crate::sim::Trace;
use crate::topology::AgentId;

/// Errors produced by topology construction, simulation and the model helpers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("index {index} out of range for {len} agents")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("run exceeded {max_rounds} rounds without halting or quiescing")]
    Timeout { max_rounds: u64, trace: Box<Trace> },

    #[error("agent {agent}: state field `{field}` = {value} outside schema (max {max})")]
    SchemaViolation { agent: AgentId, field: &'static str, value: u64, max: u64 },

    #[error("agent {agent}: protocol violation: {reason}")]
    Protocol { agent: AgentId, reason: String },

    #[error("agent {0} has not decided a color")]
    IncompleteColoring(AgentId),

    #[error("invalid flag spec: {0}")]
    InvalidSpec(String),

    #[error("point coincides with a gradient source")]
    Singularity,

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("witness needs 0 < eps < 1/6, got {0}")]
    EpsilonTooLarge(f64),

    #[error("witness needs a > b > 0, got a={a}, b={b}")]
    UnsupportedAspect { a: f64, b: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("uncertainty intervals overlap: {0:?} and {1:?}")]
    OverlappingUncertainty((usize, usize), (usize, usize)),
}

pub type Result<T> = std::result::Result<T, Error>;
