//! Synthetic-judge simulation of the comparison-budget experiments.

mod curve;
mod judge;
mod metrics;

pub use curve::{
    derive_seed, run_curve, trial_judge, trial_pairs, CurveConfig, CurveMethod, CurveResult, CurveRow,
    Metric, SubsetSelection, MAX_FAILURE_RATE,
};
pub use judge::{generate_judgments, JudgeModel};
pub use metrics::{average_ranks, pearson, spearman};
