//! Greedy information-optimal comparison selection.
//!
//! The Gaussian scheme maximizes `det(W̃ᵀW̃)` one comparison at a time. By the
//! matrix determinant lemma adding the row `r = e_i - e_j` multiplies the
//! determinant by `1 + rᵀAr` with `A = (W̃ᵀW̃)⁻¹`, so the best next pair
//! maximizes `A_ii + A_jj - 2 A_ij`, and `A` is kept current with rank-one
//! Sherman-Morrison updates.
//!
//! The Laplace scheme replaces `W̃ᵀW̃` with the Hessian of the soft
//! Bradley-Terry log-density at the current fit, which weights each pair by
//! `σ(d)σ(-d)`. Those weights move whenever the fit moves, so the inverse is
//! refactorized after every commit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::comparison::{validate_set, ComparisonRecord, ComparisonSet, Pair};
use crate::error::{RankError, Result};
use crate::estimators::{bt_curvature, poe_bt, sigmoid, EstimatorConfig, Method};
use crate::gaussian::normal_matrix;

/// Relative margin below which two objective values count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    Gaussian,
    LaplaceBt,
}

impl std::str::FromStr for SelectionMode {
    type Err = RankError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(SelectionMode::Gaussian),
            "laplace-bt" => Ok(SelectionMode::LaplaceBt),
            _ => Err(RankError::InvalidConfig(format!("unknown selection mode '{s}'"))),
        }
    }
}

/// Inverse information matrix plus the comparisons chosen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionState {
    n: usize,
    a_inv: DMatrix<f64>,
    chosen: Vec<Pair>,
    log_det: f64,
}

impl SelectionState {
    pub fn n_items(&self) -> usize {
        self.n
    }

    /// `A = (W̃ᵀW̃)⁻¹`, or the inverse Laplace Hessian in Laplace mode.
    pub fn a_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn chosen(&self) -> &[Pair] {
        &self.chosen
    }

    /// Number of comparisons selected so far.
    pub fn k(&self) -> usize {
        self.chosen.len()
    }

    /// Log-determinant of the information matrix `A⁻¹`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `W̃ᵀW̃` rebuilt from the anchor and the chosen pairs.
    pub fn normal_matrix(&self) -> DMatrix<f64> {
        normal_matrix(self.n, &self.chosen)
    }

    /// `rᵀAr` for `r = e_i - e_j`.
    pub fn pair_gain(&self, (i, j): Pair) -> f64 {
        let a = &self.a_inv;
        a[(i, i)] + a[(j, j)] - 2.0 * a[(i, j)]
    }

    fn check_pair(&self, (i, j): Pair) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(RankError::IndexOutOfRange {
                index: self.k(),
                i,
                j,
                n: self.n,
            });
        }
        if i == j {
            return Err(RankError::SelfComparison {
                index: self.k(),
                item: i,
            });
        }
        Ok(())
    }

    /// Appends `pair` and applies the Sherman-Morrison update
    /// `A ← A - (A r)(A r)ᵀ / (1 + rᵀAr)`.
    pub fn commit_pair(&mut self, pair: Pair) -> Result<()> {
        self.check_pair(pair)?;
        let (i, j) = pair;
        let denom = 1.0 + self.pair_gain(pair);
        if !(denom > 0.0 && denom.is_finite()) {
            return Err(RankError::Numerical(format!(
                "rank-one update denominator {denom} for pair ({i}, {j})"
            )));
        }
        let u = self.a_inv.column(i) - self.a_inv.column(j);
        self.a_inv.ger(-1.0 / denom, &u, &u, 1.0);
        self.log_det += denom.ln();
        self.chosen.push(pair);
        Ok(())
    }

    /// Replaces `A` with the inverse of `precision` (Laplace mode).
    fn refactor(&mut self, precision: DMatrix<f64>) -> Result<()> {
        let chol = precision.cholesky().ok_or_else(|| {
            RankError::Numerical("Laplace precision is not positive definite".into())
        })?;
        self.log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        self.a_inv = chol.inverse();
        Ok(())
    }
}

/// Seeds the selection with the anchor and the chain `(0,1), …, (N-2,N-1)`.
/// That `W̃` is lower bidiagonal with unit diagonal, so `det(W̃ᵀW̃) = 1`.
pub fn init_selection(n: usize) -> Result<SelectionState> {
    if n < 2 {
        return Err(RankError::TooFewItems(n));
    }
    let chosen: Vec<Pair> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let normal = normal_matrix(n, &chosen);
    let chol = normal
        .cholesky()
        .ok_or_else(|| RankError::Numerical("strip normal matrix not positive definite".into()))?;
    Ok(SelectionState {
        n,
        a_inv: chol.inverse(),
        chosen,
        log_det: 0.0,
    })
}

fn argmax_pair(
    n: usize,
    allowed: Option<&dyn Fn(Pair) -> bool>,
    objective: impl Fn(Pair) -> f64,
) -> Result<Pair> {
    let mut best: Option<(Pair, f64)> = None;
    for i in 0..n {
        for j in (i + 1)..n {
            if allowed.is_some_and(|f| !f((i, j))) {
                continue;
            }
            let v = objective((i, j));
            match best {
                Some((_, b)) if v <= b + TIE_TOL * b.abs().max(1.0) => {}
                _ => best = Some(((i, j), v)),
            }
        }
    }
    best.map(|(p, _)| p).ok_or(RankError::NoAdmissiblePair)
}

/// Admissible pair maximizing `A_ii + A_jj - 2 A_ij`; ties resolve to the
/// lexicographically smallest `(i, j)` with `i < j`.
pub fn next_pair_gaussian(
    state: &SelectionState,
    allowed: Option<&dyn Fn(Pair) -> bool>,
) -> Result<Pair> {
    argmax_pair(state.n, allowed, |p| state.pair_gain(p))
}

/// Pair maximizing `σ(ŝ_i - ŝ_j) σ(ŝ_j - ŝ_i) (A_ii + A_jj - 2 A_ij)`.
pub fn next_pair_laplace_bt(
    state: &SelectionState,
    s_hat: &[f64],
    allowed: Option<&dyn Fn(Pair) -> bool>,
) -> Result<Pair> {
    if s_hat.len() != state.n {
        return Err(RankError::LengthMismatch {
            left: s_hat.len(),
            right: state.n,
        });
    }
    argmax_pair(state.n, allowed, |(i, j)| {
        let d = s_hat[i] - s_hat[j];
        sigmoid(d) * sigmoid(-d) * state.pair_gain((i, j))
    })
}

/// Hessian of the negative soft Bradley-Terry log-density at `s_hat`, with
/// `1/sigma0_sq` added at `(0, 0)` for the anchor.
pub fn laplace_hessian(set: &ComparisonSet, s_hat: &[f64], sigma0_sq: f64) -> Result<DMatrix<f64>> {
    if s_hat.len() != set.n_items() {
        return Err(RankError::LengthMismatch {
            left: s_hat.len(),
            right: set.n_items(),
        });
    }
    if s_hat.iter().any(|s| !s.is_finite()) {
        return Err(RankError::Numerical("laplace_hessian: non-finite scores".into()));
    }
    let mut h = bt_curvature(set, s_hat, 0.0);
    h[(0, 0)] += 1.0 / sigma0_sq;
    Ok(h)
}

/// Gaussian approximation of the soft Bradley-Terry posterior at its mode.
#[derive(Debug, Clone)]
pub struct LaplaceApprox {
    pub s_hat: Vec<f64>,
    /// Inverse covariance (anchored Hessian).
    pub precision: DMatrix<f64>,
}

impl LaplaceApprox {
    pub fn fit(set: &ComparisonSet, cfg: &EstimatorConfig) -> Result<Self> {
        let s_hat = poe_bt(set, cfg, None)?.scores;
        let precision = laplace_hessian(set, &s_hat, cfg.sigma0_sq)?;
        Ok(Self { s_hat, precision })
    }
}

/// Step-wise Laplace-BT selection. Every chosen pair needs an observed
/// probability before the next pair can be proposed.
#[derive(Debug, Clone)]
pub struct LaplaceSelector {
    state: SelectionState,
    observed: Vec<Option<f64>>,
    cfg: EstimatorConfig,
    unique: bool,
}

impl LaplaceSelector {
    pub fn new(n: usize, cfg: EstimatorConfig, unique: bool) -> Result<Self> {
        let state = init_selection(n)?;
        let observed = vec![None; state.k()];
        Ok(Self {
            state,
            observed,
            cfg: EstimatorConfig {
                method: Method::PoeBt,
                ..cfg
            },
            unique,
        })
    }

    pub fn state(&self) -> &SelectionState {
        &self.state
    }

    /// Chosen pairs still waiting for a probability.
    pub fn pending(&self) -> Vec<Pair> {
        self.state
            .chosen
            .iter()
            .zip(&self.observed)
            .filter(|(_, p)| p.is_none())
            .map(|(&pair, _)| pair)
            .collect()
    }

    /// Records the probability that `pair.0` beats `pair.1` for the first
    /// pending occurrence of `pair`.
    pub fn observe(&mut self, pair: Pair, p: f64) -> Result<()> {
        let slot = self
            .state
            .chosen
            .iter()
            .zip(&self.observed)
            .position(|(&c, o)| c == pair && o.is_none())
            .ok_or(RankError::UnmatchedPair { i: pair.0, j: pair.1 })?;
        self.observed[slot] = Some(p);
        Ok(())
    }

    /// Current observed comparisons as a validated set.
    pub fn comparison_set(&self) -> Result<ComparisonSet> {
        let records = self
            .state
            .chosen
            .iter()
            .zip(&self.observed)
            .enumerate()
            .map(|(index, (&(i, j), p))| {
                p.map(|p| ComparisonRecord::soft(i, j, p))
                    .ok_or(RankError::MissingProbability {
                        index,
                        context: "laplace-bt selection",
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        validate_set(records, self.state.n)
    }

    /// Refits the soft Bradley-Terry scores, refactorizes the Laplace
    /// precision and commits the best next pair.
    pub fn propose(&mut self) -> Result<Pair> {
        let approx = LaplaceApprox::fit(&self.comparison_set()?, &self.cfg)?;
        self.state.refactor(approx.precision)?;
        let seen: std::collections::HashSet<Pair> = self
            .state
            .chosen
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        let filter = |p: Pair| !seen.contains(&p);
        let allowed: Option<&dyn Fn(Pair) -> bool> = if self.unique { Some(&filter) } else { None };
        let pair = next_pair_laplace_bt(&self.state, &approx.s_hat, allowed)?;
        self.state.chosen.push(pair);
        self.observed.push(None);
        Ok(pair)
    }

    /// Refactorizes at the final observed set and returns the state.
    pub fn finish(mut self) -> Result<SelectionState> {
        let approx = LaplaceApprox::fit(&self.comparison_set()?, &self.cfg)?;
        self.state.refactor(approx.precision)?;
        Ok(self.state)
    }
}

/// Pairs from a full selection run with the final log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub pairs: Vec<Pair>,
    pub log_det: f64,
}

/// Budget bounds `(min, max)`; `max` is `usize::MAX` when repeats are allowed.
pub fn selection_bounds(n: usize, unique: bool) -> (usize, usize) {
    let max = if unique {
        n * n.saturating_sub(1) / 2
    } else {
        usize::MAX
    };
    (n.saturating_sub(1), max)
}

/// Strip initialization followed by `k - (N-1)` greedy steps.
///
/// For [`SelectionMode::LaplaceBt`], `probs` supplies the probability that
/// the first item of a committed pair beats the second; it is asked once per
/// chosen pair, in selection order.
pub fn select_batch(
    n: usize,
    k: usize,
    mode: SelectionMode,
    probs: Option<&mut dyn FnMut(Pair) -> Result<f64>>,
    unique: bool,
) -> Result<Selection> {
    if n < 2 {
        return Err(RankError::TooFewItems(n));
    }
    let (min, max) = selection_bounds(n, unique);
    if k < min || k > max {
        return Err(RankError::InfeasibleBudget { n, k, min, max });
    }
    match mode {
        SelectionMode::Gaussian => {
            let mut state = init_selection(n)?;
            let mut seen: std::collections::HashSet<Pair> = state.chosen.iter().copied().collect();
            while state.k() < k {
                let pair = {
                    let filter = |p: Pair| !seen.contains(&p);
                    let allowed: Option<&dyn Fn(Pair) -> bool> =
                        if unique { Some(&filter) } else { None };
                    next_pair_gaussian(&state, allowed)?
                };
                state.commit_pair(pair)?;
                seen.insert(pair);
            }
            Ok(Selection {
                log_det: state.log_det,
                pairs: state.chosen,
            })
        }
        SelectionMode::LaplaceBt => {
            let probs = probs.ok_or_else(|| {
                RankError::InvalidConfig("laplace-bt selection needs probabilities".into())
            })?;
            let mut selector = LaplaceSelector::new(n, EstimatorConfig::default(), unique)?;
            for pair in selector.pending() {
                let p = probs(pair)?;
                selector.observe(pair, p)?;
            }
            while selector.state.k() < k {
                let pair = selector.propose()?;
                let p = probs(pair)?;
                selector.observe(pair, p)?;
            }
            let state = selector.finish()?;
            Ok(Selection {
                log_det: state.log_det,
                pairs: state.chosen,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn strip_init_matches_bidiagonal_design() {
        let state = init_selection(4).unwrap();
        assert_eq!(state.chosen(), &[(0, 1), (1, 2), (2, 3)]);
        let w = crate::gaussian::design_matrix(4, state.chosen());
        #[rustfmt::skip]
        let want = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.0, 0.0, 0.0,
            1.0, -1.0, 0.0, 0.0,
            0.0, 1.0, -1.0, 0.0,
            0.0, 0.0, 1.0, -1.0,
        ]);
        assert_eq!(w, want);
    }

    #[test]
    fn strip_init_two_items() {
        let state = init_selection(2).unwrap();
        assert_eq!(state.chosen(), &[(0, 1)]);
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        assert!(max_abs(state.a_inv(), &want) < 1e-12);
    }

    #[test]
    fn strip_determinant_is_one() {
        for n in 2..=10 {
            let state = init_selection(n).unwrap();
            assert_abs_diff_eq!(state.normal_matrix().determinant(), 1.0, epsilon = 1e-9);
            // closed form of the strip inverse: A_ij = 1 + min(i, j)
            let closed = DMatrix::from_fn(n, n, |r, c| 1.0 + r.min(c) as f64);
            assert!(max_abs(state.a_inv(), &closed) < 1e-9);
        }
    }

    #[test]
    fn repeated_commit_two_items() {
        let mut state = init_selection(2).unwrap();
        state.commit_pair((0, 1)).unwrap();
        assert_eq!(
            state.normal_matrix(),
            DMatrix::from_row_slice(2, 2, &[3.0, -2.0, -2.0, 2.0])
        );
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.5]);
        assert!(max_abs(state.a_inv(), &want) < 1e-12);
        assert_abs_diff_eq!(state.log_det(), 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn single_candidate_and_exhaustion() {
        let state = init_selection(2).unwrap();
        assert_eq!(next_pair_gaussian(&state, None).unwrap(), (0, 1));
        let none = |_: Pair| false;
        assert_eq!(
            next_pair_gaussian(&state, Some(&none)).unwrap_err(),
            RankError::NoAdmissiblePair
        );
        assert_eq!(
            next_pair_laplace_bt(&state, &[0.0, 0.0], None).unwrap(),
            (0, 1)
        );
    }

    #[test]
    fn repeats_still_grow_determinant() {
        let mut state = init_selection(3).unwrap();
        for _ in 0..6 {
            let before = state.log_det();
            let pair = next_pair_gaussian(&state, None).unwrap();
            state.commit_pair(pair).unwrap();
            assert!(state.log_det() > before);
        }
    }

    #[test]
    fn commit_rejects_bad_pair() {
        let mut state = init_selection(3).unwrap();
        assert!(state.commit_pair((1, 1)).is_err());
        assert!(state.commit_pair((0, 3)).is_err());
    }

    #[test]
    fn laplace_weights_prefer_close_items() {
        let w = |d: f64| sigmoid(d) * sigmoid(-d);
        assert_abs_diff_eq!(w(3.0), 0.0452, epsilon = 1e-4);
        assert_abs_diff_eq!(w(0.1), 0.2494, epsilon = 1e-4);
        // strip inverse for n = 3 gives equal gains of 1 to (0,1) and (1,2)
        let state = init_selection(3).unwrap();
        assert_abs_diff_eq!(state.pair_gain((0, 1)), state.pair_gain((1, 2)), epsilon = 1e-12);
        let only = |p: Pair| p == (0, 1) || p == (1, 2);
        assert_eq!(next_pair_gaussian(&state, Some(&only)).unwrap(), (0, 1));
        assert_eq!(
            next_pair_laplace_bt(&state, &[0.0, 0.1, 3.1], Some(&only)).unwrap(),
            (0, 1)
        );
        assert_eq!(
            next_pair_laplace_bt(&state, &[0.0, 3.0, 3.1], Some(&only)).unwrap(),
            (1, 2)
        );
    }

    #[test]
    fn uniform_scores_reduce_to_gaussian_rule() {
        let mut state = init_selection(6).unwrap();
        for _ in 0..5 {
            let g = next_pair_gaussian(&state, None).unwrap();
            let l = next_pair_laplace_bt(&state, &[0.7; 6], None).unwrap();
            assert_eq!(g, l);
            state.commit_pair(g).unwrap();
        }
    }

    #[test]
    fn laplace_hessian_examples() {
        let set = validate_set(vec![ComparisonRecord::soft(0, 1, 0.7)], 2).unwrap();
        let d = crate::estimators::logit(0.7);
        let h = laplace_hessian(&set, &[d, 0.0], 1.0).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.21, -0.21, -0.21, 0.21]);
        assert!(max_abs(&h, &want) < 1e-12);

        let set = validate_set(
            vec![
                ComparisonRecord::soft(0, 1, 0.6),
                ComparisonRecord::soft(0, 2, 0.6),
                ComparisonRecord::soft(1, 2, 0.6),
            ],
            3,
        )
        .unwrap();
        let h = laplace_hessian(&set, &[0.0; 3], 1.0).unwrap();
        assert_eq!(h[(0, 0)] - 1.0, 0.5);
        assert_eq!(h[(1, 1)], 0.5);
        assert_eq!(h[(2, 2)], 0.5);
        assert!(laplace_hessian(&set, &[0.0; 2], 1.0).is_err());
    }

    #[test]
    fn batch_edge_cases() {
        let strip = select_batch(5, 4, SelectionMode::Gaussian, None, true).unwrap();
        assert_eq!(strip.pairs, init_selection(5).unwrap().chosen);
        assert_eq!(strip.log_det, 0.0);
        assert!(matches!(
            select_batch(4, 2, SelectionMode::Gaussian, None, false),
            Err(RankError::InfeasibleBudget { min: 3, .. })
        ));
        assert!(select_batch(4, 7, SelectionMode::Gaussian, None, true).is_err());
        assert!(select_batch(4, 7, SelectionMode::Gaussian, None, false).is_ok());
        assert!(matches!(
            select_batch(4, 5, SelectionMode::LaplaceBt, None, true),
            Err(RankError::InvalidConfig(_))
        ));
    }

    #[test]
    fn full_unique_budget_covers_every_pair() {
        let sel = select_batch(4, 6, SelectionMode::Gaussian, None, true).unwrap();
        let mut pairs = sel.pairs.clone();
        pairs.sort_unstable();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert_abs_diff_eq!(
            sel.log_det,
            crate::gaussian::full_set_normal_matrix(4).determinant().ln(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn laplace_batch_runs_and_is_unique() {
        let truth = [0.0, 1.0, -0.5, 2.0, 0.3];
        let mut probs = |(i, j): Pair| Ok(sigmoid(truth[i] - truth[j]));
        let sel = select_batch(5, 8, SelectionMode::LaplaceBt, Some(&mut probs), true).unwrap();
        assert_eq!(sel.pairs.len(), 8);
        let unique: std::collections::HashSet<Pair> = sel.pairs.iter().copied().collect();
        assert_eq!(unique.len(), 8);
        assert!(sel.log_det.is_finite());
    }

    #[test]
    fn selector_requires_observations() {
        let mut sel = LaplaceSelector::new(3, EstimatorConfig::default(), true).unwrap();
        assert_eq!(sel.pending(), vec![(0, 1), (1, 2)]);
        assert!(sel.propose().is_err());
        sel.observe((0, 1), 0.6).unwrap();
        sel.observe((1, 2), 0.4).unwrap();
        assert!(sel.observe((1, 2), 0.4).is_err());
        assert_eq!(sel.propose().unwrap(), (0, 2));
        assert_eq!(sel.pending(), vec![(0, 2)]);
    }
}
