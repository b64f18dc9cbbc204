//! Gaussian-expert product of experts: anchored design system, closed-form
//! posterior and the linear-mean / constant-variance estimators.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::comparison::{ComparisonSet, Pair, ScoreEstimate};
use crate::error::{RankError, Result};
use crate::estimators::{DebiasParams, EstimatorConfig, Method};

/// Anchored comparison system: row 0 pins item 0, row `k` holds `+1` at the
/// first item and `-1` at the second item of comparison `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSystem {
    pub w_tilde: DMatrix<f64>,
    pub mu_tilde: DVector<f64>,
    pub sigma_sq_tilde: DVector<f64>,
}

impl DesignSystem {
    pub fn n_items(&self) -> usize {
        self.w_tilde.ncols()
    }

    /// `W̃ᵀ Σ̃⁻¹ W̃`.
    pub fn normal_matrix(&self) -> DMatrix<f64> {
        let precision = self.sigma_sq_tilde.map(|v| 1.0 / v);
        let weighted = DMatrix::from_diagonal(&precision) * &self.w_tilde;
        self.w_tilde.transpose() * weighted
    }

    /// Connected components implied by the comparison rows.
    fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n_items();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for row in self.w_tilde.row_iter().skip(1) {
            let cols: Vec<usize> = (0..n).filter(|&c| row[c] != 0.0).collect();
            if let [a, b] = cols[..] {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut roots: Vec<usize> = Vec::new();
        for item in 0..n {
            let root = find(&mut parent, item);
            match roots.iter().position(|&r| r == root) {
                Some(g) => groups[g].push(item),
                None => {
                    roots.push(root);
                    groups.push(vec![item]);
                }
            }
        }
        groups
    }
}

/// Closed-form Gaussian posterior over scores.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Log density of the posterior at its mean.
    pub log_max_density: f64,
}

/// JSON export shape for a posterior; covariance is row-major.
#[derive(Debug, Clone, Serialize)]
pub struct PosteriorExport {
    pub mean: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<f64>>,
    pub log_max_density: f64,
}

impl GaussianPosterior {
    pub fn export(&self, with_covariance: bool) -> PosteriorExport {
        let n = self.covariance.nrows();
        PosteriorExport {
            mean: self.mean.iter().copied().collect(),
            covariance: with_covariance.then(|| {
                (0..n)
                    .flat_map(|r| (0..n).map(move |c| (r, c)))
                    .map(|rc| self.covariance[rc])
                    .collect()
            }),
            log_max_density: self.log_max_density,
        }
    }
}

/// Anchored `(K+1) x N` matrix for a list of pairs.
pub fn design_matrix(n: usize, pairs: &[Pair]) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(pairs.len() + 1, n);
    w[(0, 0)] = 1.0;
    for (k, &(i, j)) in pairs.iter().enumerate() {
        w[(k + 1, i)] = 1.0;
        w[(k + 1, j)] = -1.0;
    }
    w
}

/// `W̃ᵀW̃` for unit variances, accumulated without forming `W̃`.
pub fn normal_matrix(n: usize, pairs: &[Pair]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    m[(0, 0)] = 1.0;
    for &(i, j) in pairs {
        m[(i, i)] += 1.0;
        m[(j, j)] += 1.0;
        m[(i, j)] -= 1.0;
        m[(j, i)] -= 1.0;
    }
    m
}

/// Builds the design system under the linear-mean / constant-variance
/// assumptions: row `k` has mean `alpha * (p_k - beta)` and variance
/// `cfg.expert_var`; the anchor row has mean 0 and variance `sigma0_sq`.
/// `beta` comes from `debias` when given. For [`Method::PoeGHard`] the hard
/// decision replaces `p`.
pub fn build_design(
    set: &ComparisonSet,
    cfg: &EstimatorConfig,
    debias: Option<&DebiasParams>,
) -> Result<DesignSystem> {
    cfg.validate()?;
    let values: Vec<f64> = if cfg.method == Method::PoeGHard {
        set.records().iter().map(|r| r.win_credit()).collect()
    } else {
        set.probabilities("poe-g")?
    };
    let beta = debias.map_or(cfg.beta, |d| d.beta_g);
    let pairs: Vec<Pair> = set.pairs().collect();
    let k = pairs.len();
    let mut mu = DVector::zeros(k + 1);
    let mut var = DVector::from_element(k + 1, cfg.expert_var);
    var[0] = cfg.sigma0_sq;
    for (row, v) in values.iter().enumerate() {
        mu[row + 1] = cfg.alpha * (v - beta);
    }
    Ok(DesignSystem {
        w_tilde: design_matrix(set.n_items(), &pairs),
        mu_tilde: mu,
        sigma_sq_tilde: var,
    })
}

/// Exact posterior mean, covariance and peak log density.
pub fn posterior(design: &DesignSystem) -> Result<GaussianPosterior> {
    let n = design.n_items();
    let normal = design.normal_matrix();
    let chol = match normal.clone().cholesky() {
        Some(c) => c,
        None => {
            let components = design.components();
            if components.len() > 1 {
                return Err(RankError::Disconnected { components });
            }
            return Err(RankError::Numerical(
                "normal matrix is not positive definite".into(),
            ));
        }
    };
    let weighted_mu = design.mu_tilde.component_div(&design.sigma_sq_tilde);
    let rhs = design.w_tilde.transpose() * weighted_mu;
    let mean = chol.solve(&rhs);
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let covariance = chol.inverse();
    Ok(GaussianPosterior {
        mean,
        covariance,
        log_max_density: 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln(),
    })
}

/// Gaussian product-of-experts scores from soft probabilities.
pub fn poe_g(
    set: &ComparisonSet,
    cfg: &EstimatorConfig,
    debias: Option<&DebiasParams>,
) -> Result<ScoreEstimate> {
    let cfg = EstimatorConfig {
        method: Method::PoeG,
        ..cfg.clone()
    };
    solve(set, &cfg, debias, Method::PoeG)
}

/// Gaussian product-of-experts scores from hard decisions.
pub fn poe_g_hard(set: &ComparisonSet, cfg: &EstimatorConfig) -> Result<ScoreEstimate> {
    let cfg = EstimatorConfig {
        method: Method::PoeGHard,
        ..cfg.clone()
    };
    solve(set, &cfg, None, Method::PoeGHard)
}

fn solve(
    set: &ComparisonSet,
    cfg: &EstimatorConfig,
    debias: Option<&DebiasParams>,
    method: Method,
) -> Result<ScoreEstimate> {
    set.require_coverage()?;
    set.require_connected()?;
    let post = posterior(&build_design(set, cfg, debias)?)?;
    Ok(ScoreEstimate::new(post.mean.iter().copied().collect(), method)?
        .with_covariance(post.covariance))
}

/// Analytic `W̃ᵀW̃` of the full undirected comparison set: `N` then `N-1` on
/// the diagonal, `-1` elsewhere.
pub fn full_set_normal_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |r, c| match (r, c) {
        (0, 0) => n as f64,
        _ if r == c => (n - 1) as f64,
        _ => -1.0,
    })
}
