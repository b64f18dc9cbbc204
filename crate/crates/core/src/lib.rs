//! Latent score inference from pairwise comparisons.
//!
//! Each comparison is treated as an expert over the score difference of its
//! two items and the experts are multiplied into a posterior over all scores.
//! Soft Bradley-Terry experts give a concave objective solved iteratively;
//! Gaussian experts with a linear mean in the judge probability give a
//! closed-form posterior. The crate also covers the win-ratio, average
//! probability and hard Bradley-Terry baselines, positional-bias correction,
//! greedy determinant-maximizing comparison selection and a synthetic-judge
//! simulator.

pub mod comparison;
pub mod error;
pub mod estimators;
pub mod gaussian;
pub mod io;
pub mod selection;
pub mod simulate;

pub use comparison::{
    sample_subset, symmetrize, validate_set, ComparisonRecord, ComparisonSet, Pair, ScoreEstimate,
    PROB_EPS,
};
pub use error::{RankError, Result};
pub use estimators::{
    avg_prob, bt_expert_mean, bt_hard, estimate, estimate_debias, poe_bt, win_ratio, DebiasParams,
    EstimatorConfig, Method,
};
pub use gaussian::{build_design, full_set_normal_matrix, poe_g, posterior, DesignSystem, GaussianPosterior};
pub use selection::{
    init_selection, laplace_hessian, next_pair_gaussian, next_pair_laplace_bt, select_batch,
    LaplaceApprox, LaplaceSelector, Selection, SelectionMode, SelectionState,
};
