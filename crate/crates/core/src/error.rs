use thiserror::Error;

use crate::model::Violation;

/// Errors raised by model construction, bound computation and the oracles.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", join_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("{what} index {index} out of range (cardinality {cardinality})")]
    IndexOutOfRange {
        what: String,
        index: usize,
        cardinality: usize,
    },

    #[error("{what}: need {required}, cap is {cap}")]
    CapExceeded { what: String, required: u128, cap: u128 },

    #[error("observation of agent {agent} depends on {parent}, which is outside the sub-problem")]
    ObservationDependenceViolation { agent: usize, parent: String },

    #[error("reward {reward} depends on {parent}, which is outside the sub-problem")]
    RewardDependenceViolation { reward: usize, parent: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("EAF needs two nonzero values of the same sign, got {0} and {1}")]
    SignMismatch(f64, f64),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Cap overruns and malformed inputs; the CLI maps these to exit code 2.
    pub fn is_cap_or_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }

    pub(crate) fn cap(what: impl Into<String>, required: u128, cap: u128) -> Self {
        Error::CapExceeded {
            what: what.into(),
            required,
            cap,
        }
    }

    pub(crate) fn range(what: impl Into<String>, index: usize, cardinality: usize) -> Self {
        Error::IndexOutOfRange {
            what: what.into(),
            index,
            cardinality,
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
