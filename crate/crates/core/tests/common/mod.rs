#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use poe_rank::comparison::{validate_set, ComparisonRecord, ComparisonSet, Pair};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Connected comparison set: a random spanning tree plus `extra` edges.
pub fn random_connected(n: usize, extra: usize, seed: u64) -> ComparisonSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<Pair> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    for _ in 0..extra {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        pairs.push((i, j));
    }
    let records = pairs
        .into_iter()
        .map(|(i, j)| {
            let (i, j) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
            ComparisonRecord::soft(i, j, rng.random_range(0.03..0.97))
        })
        .collect();
    validate_set(records, n).unwrap()
}

pub fn connected_set() -> impl Strategy<Value = ComparisonSet> {
    (2usize..=10, 0usize..20, any::<u64>()).prop_map(|(n, extra, seed)| random_connected(n, extra, seed))
}

/// Every ordered pair once, with probabilities from a noisy logistic judge
/// and their symmetrized counterpart.
pub fn full_directed(n: usize, seed: u64) -> ComparisonSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut records = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let z = s[i] - s[j] + rng.random_range(-1.0..1.0);
                records.push(ComparisonRecord::soft(i, j, 1.0 / (1.0 + (-z).exp())));
            }
        }
    }
    validate_set(records, n).unwrap()
}

/// Dense least squares: minimizes `|D^(-1/2) (W s - mu)|^2` through an SVD,
/// independent of the library's normal-equation path.
pub fn weighted_lstsq(w: &DMatrix<f64>, mu: &DVector<f64>, var: &DVector<f64>) -> DVector<f64> {
    let scale = var.map(|v| 1.0 / v.sqrt());
    let ws = DMatrix::from_fn(w.nrows(), w.ncols(), |r, c| w[(r, c)] * scale[r]);
    let ms = mu.component_mul(&scale);
    ws.svd(true, true).solve(&ms, 1e-14).unwrap()
}

pub fn logdet_spd(m: &DMatrix<f64>) -> f64 {
    let l = m.clone().cholesky().expect("positive definite").l();
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}
