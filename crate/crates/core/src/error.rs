use thiserror::Error;

/// Errors produced by ingestion, estimation, selection and simulation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum RankError {
    #[error("comparison set is empty")]
    Empty,

    #[error("at least two items are required, got n={0}")]
    TooFewItems(usize),

    #[error("record {index}: self-comparison of item {item}")]
    SelfComparison { index: usize, item: usize },

    #[error("record {index}: pair ({i}, {j}) out of range for n={n}")]
    IndexOutOfRange {
        index: usize,
        i: usize,
        j: usize,
        n: usize,
    },

    #[error("record {index}: probability {value} is not in [0, 1]")]
    InvalidProbability { index: usize, value: f64 },

    #[error("record {index}: needs at least one of p or y")]
    MissingOutcome { index: usize },

    #[error("record {index}: probability p is required by {context}")]
    MissingProbability { index: usize, context: &'static str },

    #[error("pair ({i}, {j}) has no matching reverse permutation ({j}, {i})")]
    UnmatchedPair { i: usize, j: usize },

    #[error("budget k={k} infeasible for n={n}: {}", budget_range(*.min, *.max))]
    InfeasibleBudget {
        n: usize,
        k: usize,
        min: usize,
        max: usize,
    },

    #[error("item {item} takes part in no comparison")]
    NoComparisons { item: usize },

    #[error("comparison graph is disconnected: components {components:?}")]
    Disconnected { components: Vec<Vec<usize>> },

    #[error("{method} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("numerical breakdown: {0}")]
    Numerical(String),

    #[error("no admissible pair remains")]
    NoAdmissiblePair,

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn budget_range(min: usize, max: usize) -> String {
    if max == usize::MAX {
        format!("at least {min} comparisons are needed")
    } else {
        format!("feasible range is [{min}, {max}]")
    }
}

impl RankError {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            RankError::NonConvergence { .. } | RankError::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, RankError>;
