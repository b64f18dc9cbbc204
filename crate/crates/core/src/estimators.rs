//! Score estimators over a [`ComparisonSet`]: win-ratio, average probability,
//! hard Bradley-Terry via Zermelo iteration, and the soft Bradley-Terry
//! product of experts with optional positional-bias shift.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonSet, ScoreEstimate};
use crate::error::{RankError, Result};
use crate::gaussian;

/// Gradient infinity-norm at which the soft Bradley-Terry fit stops.
pub const POE_BT_GRAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    WinRatio,
    AvgProb,
    BtHard,
    PoeBt,
    PoeG,
    PoeGHard,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::WinRatio,
        Method::AvgProb,
        Method::BtHard,
        Method::PoeBt,
        Method::PoeG,
        Method::PoeGHard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::WinRatio => "win-ratio",
            Method::AvgProb => "avg-prob",
            Method::BtHard => "bt-hard",
            Method::PoeBt => "poe-bt",
            Method::PoeG => "poe-g",
            Method::PoeGHard => "poe-g-hard",
        }
    }

    /// Whether the method only looks at hard decisions.
    pub fn is_hard(self) -> bool {
        matches!(self, Method::WinRatio | Method::BtHard | Method::PoeGHard)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = RankError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| RankError::InvalidConfig(format!("unknown method '{s}'")))
    }
}

/// Estimator settings. `zermelo_prior = None` means `1/(N-1)` pseudo-wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: Method,
    pub debias: bool,
    pub alpha: f64,
    pub beta: f64,
    pub sigma0_sq: f64,
    /// Constant variance of every comparison expert in the Gaussian model.
    #[serde(default = "unit")]
    pub expert_var: f64,
    pub zermelo_tol: f64,
    pub zermelo_prior: Option<f64>,
    pub max_iters: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            method: Method::PoeG,
            debias: false,
            alpha: 1.0,
            beta: 0.5,
            sigma0_sq: 1.0,
            expert_var: 1.0,
            zermelo_tol: 1e-4,
            zermelo_prior: None,
            max_iters: 10_000,
        }
    }
}

impl EstimatorConfig {
    pub fn for_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RankError::InvalidConfig(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.sigma0_sq > 0.0 && self.sigma0_sq.is_finite()) {
            return bad("sigma0_sq must be positive");
        }
        if !(self.expert_var > 0.0 && self.expert_var.is_finite()) {
            return bad("expert_var must be positive");
        }
        if self.zermelo_tol.is_nan() || self.zermelo_tol <= 0.0 {
            return bad("zermelo_tol must be positive");
        }
        if self.zermelo_prior.is_some_and(|p| !(p >= 0.0 && p.is_finite())) {
            return bad("zermelo_prior must be non-negative");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        Ok(())
    }

    /// Pseudo-win mass added to each direction of every compared pair.
    pub fn prior_for(&self, n: usize) -> f64 {
        self.zermelo_prior
            .unwrap_or(1.0 / (n.saturating_sub(1).max(1)) as f64)
    }
}

fn unit() -> f64 {
    1.0
}

/// Positional-bias parameters estimated from single-permutation data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebiasParams {
    pub mean_p: f64,
    /// Offset for the Gaussian expert mean, equal to `mean_p`.
    pub beta_g: f64,
    /// Shift of the soft Bradley-Terry expert, `-logit(mean_p)`.
    pub gamma_bt: f64,
    /// Standard error of `mean_p`.
    pub std_error: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Runs the estimator selected by `cfg.method`. With `cfg.debias`, debias
/// parameters are estimated from `set` and applied to the PoE methods.
pub fn estimate(set: &ComparisonSet, cfg: &EstimatorConfig) -> Result<ScoreEstimate> {
    cfg.validate()?;
    let debias = if cfg.debias && matches!(cfg.method, Method::PoeBt | Method::PoeG) {
        Some(estimate_debias(set)?)
    } else {
        None
    };
    match cfg.method {
        Method::WinRatio => win_ratio(set),
        Method::AvgProb => avg_prob(set),
        Method::BtHard => bt_hard(set, cfg),
        Method::PoeBt => poe_bt(set, cfg, debias.as_ref()),
        Method::PoeG => gaussian::poe_g(set, cfg, debias.as_ref()),
        Method::PoeGHard => gaussian::poe_g_hard(set, cfg),
    }
}

/// Fraction of comparisons won; ties at `p = 0.5` count half a win each.
pub fn win_ratio(set: &ComparisonSet) -> Result<ScoreEstimate> {
    set.require_coverage()?;
    let n = set.n_items();
    let mut wins = vec![0.0; n];
    for r in set.records() {
        let c = r.win_credit();
        wins[r.i] += c;
        wins[r.j] += 1.0 - c;
    }
    let scores = wins
        .iter()
        .zip(set.games())
        .map(|(w, g)| w / g as f64)
        .collect();
    ScoreEstimate::new(scores, Method::WinRatio)
}

/// Mean probability of each item over its comparisons, using `1 - p` when
/// the item was presented second.
pub fn avg_prob(set: &ComparisonSet) -> Result<ScoreEstimate> {
    set.require_coverage()?;
    let probs = set.probabilities("avg-prob")?;
    let mut sums = vec![0.0; set.n_items()];
    for (r, p) in set.records().iter().zip(probs) {
        sums[r.i] += p;
        sums[r.j] += 1.0 - p;
    }
    let scores = sums
        .iter()
        .zip(set.games())
        .map(|(s, g)| s / g as f64)
        .collect();
    ScoreEstimate::new(scores, Method::AvgProb)
}

fn center(scores: &mut [f64]) {
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    scores.iter_mut().for_each(|s| *s -= mean);
}

/// Hard Bradley-Terry scores by Zermelo's fixed-point iteration.
///
/// Every unordered pair that was compared at least once receives
/// `cfg.prior_for(n)` pseudo-wins in each direction. Iteration stops when the
/// largest change of the mean-centered log-strengths falls below
/// `cfg.zermelo_tol`.
pub fn bt_hard(set: &ComparisonSet, cfg: &EstimatorConfig) -> Result<ScoreEstimate> {
    set.require_coverage()?;
    let n = set.n_items();
    let mut wins = DMatrix::<f64>::zeros(n, n);
    for r in set.records() {
        let c = r.win_credit();
        wins[(r.i, r.j)] += c;
        wins[(r.j, r.i)] += 1.0 - c;
    }
    let prior = cfg.prior_for(n);
    let mut compared = vec![false; n * n];
    for r in set.records() {
        let (a, b) = (r.i.min(r.j), r.i.max(r.j));
        if !std::mem::replace(&mut compared[a * n + b], true) {
            wins[(a, b)] += prior;
            wins[(b, a)] += prior;
        }
    }
    let total_wins: Vec<f64> = (0..n).map(|i| wins.row(i).sum()).collect();
    if let Some(item) = total_wins.iter().position(|&w| w <= 0.0) {
        return Err(RankError::Numerical(format!(
            "bt-hard: item {item} never wins, its score diverges"
        )));
    }
    // games between i and j, neighbours listed once per item
    let neighbours: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, wins[(i, j)] + wins[(j, i)]))
                .filter(|&(_, g)| g > 0.0)
                .collect()
        })
        .collect();

    let mut strength = vec![1.0; n];
    let mut scores = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let denom: f64 = neighbours[i]
                    .iter()
                    .map(|&(j, g)| g / (strength[i] + strength[j]))
                    .sum();
                total_wins[i] / denom
            })
            .collect();
        let mut next_scores: Vec<f64> = next.iter().map(|s| s.ln()).collect();
        center(&mut next_scores);
        residual = next_scores
            .iter()
            .zip(&scores)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        scores = next_scores;
        strength = scores.iter().map(|s| s.exp()).collect();
        if !residual.is_finite() {
            break;
        }
        if residual < cfg.zermelo_tol {
            return ScoreEstimate::new(scores, Method::BtHard);
        }
    }
    Err(RankError::NonConvergence {
        method: "bt-hard",
        iterations: cfg.max_iters,
        residual,
        last: scores,
    })
}

/// Log of the soft Bradley-Terry expert density of score difference `d`
/// given probability `p`, including the normalizer `Z = pi / sin(pi p)`.
pub fn soft_bt_log_density(d: f64, p: f64) -> f64 {
    p * d - softplus(d) - (PI / (PI * p).sin()).ln()
}

/// Mean of the soft Bradley-Terry expert, `-pi * cot(pi p)`.
pub fn bt_expert_mean(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(RankError::InvalidConfig(format!(
            "expert mean needs p in (0, 1), got {p}"
        )));
    }
    Ok(-PI / (PI * p).tan())
}

/// Log-objective of the soft Bradley-Terry product of experts (normalizers
/// dropped): `sum_k p_k (d_k - gamma) - ln(1 + e^(d_k - gamma))`.
pub fn poe_bt_objective(set: &ComparisonSet, probs: &[f64], scores: &[f64], gamma: f64) -> f64 {
    set.records()
        .iter()
        .zip(probs)
        .map(|(r, &p)| {
            let d = scores[r.i] - scores[r.j] - gamma;
            p * d - softplus(d)
        })
        .sum()
}

/// Gradient of [`poe_bt_objective`] with respect to the scores.
pub fn poe_bt_gradient(set: &ComparisonSet, probs: &[f64], scores: &[f64], gamma: f64) -> Vec<f64> {
    let mut grad = vec![0.0; set.n_items()];
    for (r, &p) in set.records().iter().zip(probs) {
        let g = p - sigmoid(scores[r.i] - scores[r.j] - gamma);
        grad[r.i] += g;
        grad[r.j] -= g;
    }
    grad
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Result of a soft Bradley-Terry fit with its optimization trace.
#[derive(Debug, Clone)]
pub struct BtFit {
    pub estimate: ScoreEstimate,
    pub gamma: f64,
    pub iterations: usize,
    /// Objective value at the start and after every iteration.
    pub objective_trace: Vec<f64>,
}

/// Soft Bradley-Terry product-of-experts scores, mean-centered.
pub fn poe_bt(
    set: &ComparisonSet,
    cfg: &EstimatorConfig,
    debias: Option<&DebiasParams>,
) -> Result<ScoreEstimate> {
    poe_bt_fit(set, cfg, debias.map_or(0.0, |d| d.gamma_bt)).map(|fit| fit.estimate)
}

/// Maximizes the soft Bradley-Terry objective with expert shift `gamma`.
///
/// With `gamma == 0` the soft Zermelo fixed point is iterated (monotone
/// minorize-maximize steps with fractional wins). Otherwise a Newton ascent
/// with Armijo backtracking is used. Both stop at a gradient infinity-norm
/// below [`POE_BT_GRAD_TOL`], after which the point is polished by Newton
/// steps.
pub fn poe_bt_fit(set: &ComparisonSet, cfg: &EstimatorConfig, gamma: f64) -> Result<BtFit> {
    if set.is_empty() {
        return Err(RankError::Empty);
    }
    set.require_coverage()?;
    let probs = set.probabilities("poe-bt")?;
    if !gamma.is_finite() {
        return Err(RankError::InvalidConfig("poe-bt shift must be finite".into()));
    }
    let (mut scores, iterations, mut trace) = if gamma == 0.0 {
        soft_zermelo(set, &probs, cfg.max_iters)?
    } else {
        newton_ascent(set, &probs, gamma, cfg.max_iters)?
    };
    polish(set, &probs, gamma, &mut scores, &mut trace);
    Ok(BtFit {
        estimate: ScoreEstimate::new(scores, Method::PoeBt)?,
        gamma,
        iterations,
        objective_trace: trace,
    })
}

fn soft_zermelo(
    set: &ComparisonSet,
    probs: &[f64],
    max_iters: usize,
) -> Result<(Vec<f64>, usize, Vec<f64>)> {
    let n = set.n_items();
    let mut soft_wins = vec![0.0; n];
    for (r, &p) in set.records().iter().zip(probs) {
        soft_wins[r.i] += p;
        soft_wins[r.j] += 1.0 - p;
    }
    let mut scores = vec![0.0; n];
    let mut trace = vec![poe_bt_objective(set, probs, &scores, 0.0)];
    let mut denom = vec![0.0; n];
    for iter in 0..max_iters {
        let grad = poe_bt_gradient(set, probs, &scores, 0.0);
        let residual = inf_norm(&grad);
        if residual < POE_BT_GRAD_TOL {
            return Ok((scores, iter, trace));
        }
        denom.iter_mut().for_each(|d| *d = 0.0);
        let strength: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        for r in set.records() {
            let w = 1.0 / (strength[r.i] + strength[r.j]);
            denom[r.i] += w;
            denom[r.j] += w;
        }
        for i in 0..n {
            scores[i] = (soft_wins[i] / denom[i]).ln();
        }
        center(&mut scores);
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(RankError::Numerical("poe-bt: non-finite iterate".into()));
        }
        trace.push(poe_bt_objective(set, probs, &scores, 0.0));
    }
    let residual = inf_norm(&poe_bt_gradient(set, probs, &scores, 0.0));
    if residual < POE_BT_GRAD_TOL {
        return Ok((scores, max_iters, trace));
    }
    Err(RankError::NonConvergence {
        method: "poe-bt",
        iterations: max_iters,
        residual,
        last: scores,
    })
}

/// Negative Hessian of the soft Bradley-Terry objective at `scores`.
pub(crate) fn bt_curvature(set: &ComparisonSet, scores: &[f64], gamma: f64) -> DMatrix<f64> {
    let n = set.n_items();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for r in set.records() {
        let d = scores[r.i] - scores[r.j] - gamma;
        let w = sigmoid(d) * sigmoid(-d);
        h[(r.i, r.i)] += w;
        h[(r.j, r.j)] += w;
        h[(r.i, r.j)] -= w;
        h[(r.j, r.i)] -= w;
    }
    h
}

/// One damped Newton step with Armijo backtracking. Returns `None` when no
/// step length increases the objective enough.
fn newton_step(
    set: &ComparisonSet,
    probs: &[f64],
    gamma: f64,
    scores: &[f64],
    value: f64,
    grad: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let n = set.n_items();
    // the objective is flat along the all-ones direction; pinning it with
    // J/n keeps the system definite on connected graphs
    let mut h = bt_curvature(set, scores, gamma);
    h.add_scalar_mut(1.0 / n as f64);
    let g = DVector::from_column_slice(grad);
    let step = match h.cholesky() {
        Some(ch) => ch.solve(&g),
        None => g.clone(),
    };
    let slope = g.dot(&step);
    let mut t = 1.0;
    while t >= 1e-12 {
        let mut trial: Vec<f64> = scores.iter().zip(step.iter()).map(|(s, d)| s + t * d).collect();
        center(&mut trial);
        let trial_value = poe_bt_objective(set, probs, &trial, gamma);
        if trial_value >= value + 1e-4 * t * slope {
            return Some((trial, trial_value));
        }
        t *= 0.5;
    }
    None
}

fn newton_ascent(
    set: &ComparisonSet,
    probs: &[f64],
    gamma: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize, Vec<f64>)> {
    let n = set.n_items();
    let mut scores = vec![0.0; n];
    let mut value = poe_bt_objective(set, probs, &scores, gamma);
    let mut trace = vec![value];
    for iter in 0..max_iters {
        let grad = poe_bt_gradient(set, probs, &scores, gamma);
        let residual = inf_norm(&grad);
        if residual < POE_BT_GRAD_TOL {
            return Ok((scores, iter, trace));
        }
        match newton_step(set, probs, gamma, &scores, value, &grad) {
            Some((next, next_value)) => {
                scores = next;
                value = next_value;
                trace.push(value);
            }
            None => {
                return Err(RankError::NonConvergence {
                    method: "poe-bt",
                    iterations: iter,
                    residual,
                    last: scores,
                })
            }
        }
    }
    let residual = inf_norm(&poe_bt_gradient(set, probs, &scores, gamma));
    if residual < POE_BT_GRAD_TOL {
        return Ok((scores, max_iters, trace));
    }
    Err(RankError::NonConvergence {
        method: "poe-bt",
        iterations: max_iters,
        residual,
        last: scores,
    })
}

/// Refines a converged fit with a few Newton steps. Convergence is declared
/// at a gradient of 1e-6, which still leaves score errors of several times
/// that; near the optimum each Newton step squares the error.
fn polish(set: &ComparisonSet, probs: &[f64], gamma: f64, scores: &mut Vec<f64>, trace: &mut Vec<f64>) {
    let mut value = poe_bt_objective(set, probs, scores, gamma);
    for _ in 0..3 {
        let grad = poe_bt_gradient(set, probs, scores, gamma);
        if inf_norm(&grad) < 1e-12 {
            break;
        }
        match newton_step(set, probs, gamma, scores, value, &grad) {
            Some((next, next_value)) => {
                *scores = next;
                value = next_value;
                trace.push(value);
            }
            None => break,
        }
    }
}

/// Estimates positional bias from the mean observed probability.
pub fn estimate_debias(set: &ComparisonSet) -> Result<DebiasParams> {
    if set.is_empty() {
        return Err(RankError::Empty);
    }
    let probs = set.probabilities("debias")?;
    let k = probs.len() as f64;
    let mean_p = probs.iter().sum::<f64>() / k;
    let std_error = if probs.len() > 1 {
        let var = probs.iter().map(|p| (p - mean_p).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    Ok(DebiasParams {
        mean_p,
        beta_g: mean_p,
        gamma_bt: -logit(mean_p),
        std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::{validate_set, ComparisonRecord};
    use approx::assert_abs_diff_eq;

    fn soft(records: &[(usize, usize, f64)], n: usize) -> ComparisonSet {
        validate_set(
            records
                .iter()
                .map(|&(i, j, p)| ComparisonRecord::soft(i, j, p))
                .collect(),
            n,
        )
        .unwrap()
    }

    fn hard(records: &[(usize, usize, bool)], n: usize) -> ComparisonSet {
        validate_set(
            records
                .iter()
                .map(|&(i, j, y)| ComparisonRecord::hard(i, j, y))
                .collect(),
            n,
        )
        .unwrap()
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn win_ratio_round_robin() {
        let mut recs = Vec::new();
        for a in 0..4 {
            for b in (a + 1)..4 {
                recs.push((a, b, true));
            }
        }
        let est = win_ratio(&hard(&recs, 4)).unwrap();
        let want = [1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0];
        for (s, w) in est.scores.iter().zip(want) {
            assert_abs_diff_eq!(*s, w, epsilon = 1e-12);
        }
    }

    #[test]
    fn win_ratio_soft_decisions_and_ties() {
        assert_eq!(win_ratio(&soft(&[(0, 1, 0.7)], 2)).unwrap().scores, vec![1.0, 0.0]);
        assert_eq!(win_ratio(&soft(&[(0, 1, 0.5)], 2)).unwrap().scores, vec![0.5, 0.5]);
    }

    #[test]
    fn win_ratio_needs_coverage() {
        let err = win_ratio(&soft(&[(0, 1, 0.7)], 3)).unwrap_err();
        assert_eq!(err, RankError::NoComparisons { item: 2 });
    }

    #[test]
    fn avg_prob_examples() {
        let est = avg_prob(&soft(&[(0, 1, 0.6), (0, 2, 0.8), (1, 2, 0.5)], 3)).unwrap();
        assert_abs_diff_eq!(est.scores[0], 0.7, epsilon = 1e-12);
        let est = avg_prob(&soft(&[(0, 1, 0.7)], 2)).unwrap();
        assert_abs_diff_eq!(est.scores[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(est.scores[1], 0.3, epsilon = 1e-12);
        let all_half = soft(&[(0, 1, 0.5), (1, 0, 0.5), (0, 2, 0.5), (2, 0, 0.5), (1, 2, 0.5), (2, 1, 0.5)], 3);
        assert!(avg_prob(&all_half).unwrap().scores.iter().all(|&s| s == 0.5));
    }

    #[test]
    fn avg_prob_needs_probabilities() {
        let err = avg_prob(&hard(&[(0, 1, true)], 2)).unwrap_err();
        assert!(matches!(err, RankError::MissingProbability { index: 0, .. }));
    }

    #[test]
    fn bt_hard_two_items_closed_form() {
        // counts (2 + 1, 1 + 1) -> ratio 3/2 -> logit(3/5)
        let set = hard(&[(0, 1, true), (0, 1, true), (1, 0, true)], 2);
        let cfg = EstimatorConfig {
            zermelo_tol: 1e-12,
            ..EstimatorConfig::for_method(Method::BtHard)
        };
        let est = bt_hard(&set, &cfg).unwrap();
        assert_abs_diff_eq!(est.scores[0] - est.scores[1], logit(0.6), epsilon = 1e-9);
        assert_abs_diff_eq!(logit(0.6), 0.4055, epsilon = 1e-4);
    }

    #[test]
    fn bt_hard_symmetric_cases() {
        let cfg = EstimatorConfig::for_method(Method::BtHard);
        let est = bt_hard(&hard(&[(0, 1, true), (1, 0, true)], 2), &cfg).unwrap();
        assert_abs_diff_eq!(est.scores[0], est.scores[1], epsilon = 1e-12);
        let cycle = hard(&[(0, 1, true), (1, 2, true), (2, 0, true)], 3);
        let est = bt_hard(&cycle, &cfg).unwrap();
        for s in est.scores {
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bt_hard_reports_non_convergence() {
        let set = hard(&[(0, 1, true), (1, 2, true), (0, 2, true)], 3);
        let cfg = EstimatorConfig {
            max_iters: 2,
            zermelo_tol: 1e-14,
            ..EstimatorConfig::for_method(Method::BtHard)
        };
        match bt_hard(&set, &cfg).unwrap_err() {
            RankError::NonConvergence { last, iterations, .. } => {
                assert_eq!(iterations, 2);
                assert_eq!(last.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bt_hard_zero_prior_diverging_item() {
        let set = hard(&[(0, 1, true)], 2);
        let cfg = EstimatorConfig {
            zermelo_prior: Some(0.0),
            ..EstimatorConfig::for_method(Method::BtHard)
        };
        assert!(bt_hard(&set, &cfg).unwrap_err().is_numerical());
    }

    #[test]
    fn poe_bt_single_comparison() {
        let cfg = EstimatorConfig::for_method(Method::PoeBt);
        let est = poe_bt(&soft(&[(0, 1, 0.7)], 2), &cfg, None).unwrap();
        assert_abs_diff_eq!(est.scores[0] - est.scores[1], 0.8473, epsilon = 1e-4);
        assert_abs_diff_eq!(est.scores[0] + est.scores[1], 0.0, epsilon = 1e-12);

        let est = poe_bt(&soft(&[(0, 1, 0.5)], 2), &cfg, None).unwrap();
        assert_abs_diff_eq!(est.scores[0], est.scores[1], epsilon = 1e-12);

        let fit = poe_bt_fit(&soft(&[(0, 1, 0.7)], 2), &cfg, 0.3).unwrap();
        let d = fit.estimate.scores[0] - fit.estimate.scores[1];
        assert_abs_diff_eq!(d, 1.1473, epsilon = 1e-4);
    }

    #[test]
    fn poe_bt_rejects_empty_and_hard_only() {
        let cfg = EstimatorConfig::for_method(Method::PoeBt);
        let err = poe_bt(&hard(&[(0, 1, true)], 2), &cfg, None).unwrap_err();
        assert!(matches!(err, RankError::MissingProbability { .. }));
    }

    #[test]
    fn debias_examples() {
        let d = estimate_debias(&soft(&[(0, 1, 0.5), (1, 0, 0.5)], 2)).unwrap();
        assert_eq!(d.beta_g, 0.5);
        assert_abs_diff_eq!(d.gamma_bt, 0.0, epsilon = 1e-15);
        let d = estimate_debias(&soft(&[(0, 1, 0.7), (1, 0, 0.86)], 2)).unwrap();
        assert_abs_diff_eq!(d.mean_p, 0.78, epsilon = 1e-12);
        assert_abs_diff_eq!(d.gamma_bt, -1.2657, epsilon = 1e-4);
        let d = estimate_debias(&soft(&[(0, 1, 0.51)], 2)).unwrap();
        assert_abs_diff_eq!(d.gamma_bt, -0.0400, epsilon = 1e-4);
    }

    #[test]
    fn expert_mean_values() {
        assert_abs_diff_eq!(bt_expert_mean(0.5).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(bt_expert_mean(0.25).unwrap(), -PI, epsilon = 1e-12);
        let near_one = bt_expert_mean(1.0 - 1e-6).unwrap();
        assert!(near_one.is_finite() && near_one > 1e5);
        assert!(bt_expert_mean(1.0).is_err());
        assert!(bt_expert_mean(0.0).is_err());
    }

    /// Trapezoid quadrature over a wide window, independent of the closed form.
    fn integrate(f: impl Fn(f64) -> f64) -> f64 {
        let (lo, hi, steps) = (-200.0, 200.0, 400_000);
        let h = (hi - lo) / steps as f64;
        (0..=steps)
            .map(|k| {
                let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
                w * f(lo + k as f64 * h)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn soft_expert_is_normalized_with_cot_mean() {
        for p in [0.2, 0.5, 0.7, 0.9] {
            let mass = integrate(|d| soft_bt_log_density(d, p).exp());
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
            let mean = integrate(|d| d * soft_bt_log_density(d, p).exp());
            assert_abs_diff_eq!(mean, bt_expert_mean(p).unwrap(), epsilon = 1e-5);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = EstimatorConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.beta = 1.0;
        assert!(cfg.validate().is_err());
        cfg = EstimatorConfig {
            alpha: 0.0,
            ..EstimatorConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!(EstimatorConfig::default().prior_for(16), 1.0 / 15.0);
    }
}
