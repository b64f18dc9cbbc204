//! Comparison records, validated comparison sets and subset sampling.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RankError, Result};
use crate::estimators::Method;

/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` on ingestion.
pub const PROB_EPS: f64 = 1e-6;

/// An ordered pair of item indices; the first entry is presented first.
pub type Pair = (usize, usize);

/// One judged pair: `p` is the probability that item `i` beats item `j`,
/// `y` an optional hard outcome (`true` when `i` wins).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub i: usize,
    pub j: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "crate::io::outcome_serde"
    )]
    pub y: Option<bool>,
}

impl ComparisonRecord {
    pub fn soft(i: usize, j: usize, p: f64) -> Self {
        Self {
            i,
            j,
            p: Some(p),
            y: None,
        }
    }

    pub fn hard(i: usize, j: usize, i_wins: bool) -> Self {
        Self {
            i,
            j,
            p: None,
            y: Some(i_wins),
        }
    }

    /// Credit earned by `i` in this comparison: the hard outcome if present,
    /// otherwise the decision implied by `p` with ties at 0.5 split evenly.
    pub fn win_credit(&self) -> f64 {
        match (self.y, self.p) {
            (Some(true), _) => 1.0,
            (Some(false), _) => 0.0,
            (None, Some(p)) if p > 0.5 => 1.0,
            (None, Some(p)) if p < 0.5 => 0.0,
            _ => 0.5,
        }
    }

    /// Whether `item` takes part in this comparison.
    pub fn involves(&self, item: usize) -> bool {
        self.i == item || self.j == item
    }
}

/// A validated collection of comparisons over `n_items` items.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSet {
    n_items: usize,
    records: Vec<ComparisonRecord>,
    directed: bool,
    clamped: usize,
}

impl ComparisonSet {
    /// Validates `records` against `n` items and clamps probabilities.
    pub fn validate(records: Vec<ComparisonRecord>, n: usize) -> Result<Self> {
        validate_set(records, n)
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn records(&self) -> &[ComparisonRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Whether `(i, j)` and `(j, i)` are kept as distinct observations.
    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn with_directed(mut self, directed: bool) -> Self {
        self.directed = directed;
        self
    }

    /// Number of probabilities moved onto the clamp boundary during validation.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn pairs(&self) -> impl Iterator<Item = Pair> + '_ {
        self.records.iter().map(|r| (r.i, r.j))
    }

    /// Returns the probabilities, failing on the first record without one.
    pub fn probabilities(&self, context: &'static str) -> Result<Vec<f64>> {
        self.records
            .iter()
            .enumerate()
            .map(|(index, r)| r.p.ok_or(RankError::MissingProbability { index, context }))
            .collect()
    }

    /// Number of comparisons each item takes part in.
    pub fn games(&self) -> Vec<usize> {
        let mut games = vec![0; self.n_items];
        for r in &self.records {
            games[r.i] += 1;
            games[r.j] += 1;
        }
        games
    }

    /// Fails with the first item that is never compared.
    pub fn require_coverage(&self) -> Result<()> {
        match self.games().iter().position(|&g| g == 0) {
            Some(item) => Err(RankError::NoComparisons { item }),
            None => Ok(()),
        }
    }

    /// Connected components of the comparison graph, each sorted ascending.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.n_items).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for r in &self.records {
            let (a, b) = (find(&mut parent, r.i), find(&mut parent, r.j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        for item in 0..self.n_items {
            let root = find(&mut parent, item);
            let g = *slot.entry(root).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(item);
        }
        groups
    }

    /// Fails with [`RankError::Disconnected`] unless every item is reachable.
    pub fn require_connected(&self) -> Result<()> {
        let components = self.components();
        if components.len() > 1 {
            return Err(RankError::Disconnected { components });
        }
        Ok(())
    }
}

/// Inferred scores for every item.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreEstimate {
    pub scores: Vec<f64>,
    pub method: Method,
    #[serde(skip)]
    pub covariance: Option<DMatrix<f64>>,
}

impl ScoreEstimate {
    pub fn new(scores: Vec<f64>, method: Method) -> Result<Self> {
        if let Some(k) = scores.iter().position(|s| !s.is_finite()) {
            return Err(RankError::Numerical(format!(
                "{method}: score of item {k} is not finite"
            )));
        }
        Ok(Self {
            scores,
            method,
            covariance: None,
        })
    }

    pub fn with_covariance(mut self, covariance: DMatrix<f64>) -> Self {
        self.covariance = Some(covariance);
        self
    }
}

/// Validates raw records for `n` items. Probabilities on or beyond the clamp
/// boundary are moved to `[PROB_EPS, 1 - PROB_EPS]` and counted.
pub fn validate_set(mut records: Vec<ComparisonRecord>, n: usize) -> Result<ComparisonSet> {
    if n < 2 {
        return Err(RankError::TooFewItems(n));
    }
    if records.is_empty() {
        return Err(RankError::Empty);
    }
    let mut clamped = 0;
    let mut seen = HashSet::new();
    let mut directed = false;
    for (index, r) in records.iter_mut().enumerate() {
        if r.i >= n || r.j >= n {
            return Err(RankError::IndexOutOfRange {
                index,
                i: r.i,
                j: r.j,
                n,
            });
        }
        if r.i == r.j {
            return Err(RankError::SelfComparison { index, item: r.i });
        }
        if r.p.is_none() && r.y.is_none() {
            return Err(RankError::MissingOutcome { index });
        }
        if let Some(p) = r.p {
            if !(0.0..=1.0).contains(&p) {
                return Err(RankError::InvalidProbability { index, value: p });
            }
            let c = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if c != p {
                clamped += 1;
                r.p = Some(c);
            }
        }
        if seen.contains(&(r.j, r.i)) {
            directed = true;
        }
        seen.insert((r.i, r.j));
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} probabilities into [{PROB_EPS}, {}]", 1.0 - PROB_EPS);
    }
    Ok(ComparisonSet {
        n_items: n,
        records,
        directed,
        clamped,
    })
}

/// Combines both presentation orders of every pair into one record with
/// `p = (p_ij + 1 - p_ji) / 2`. Repeated draws are matched in order of
/// appearance; the output keeps the orientation and position of the first
/// record of each matched couple.
pub fn symmetrize(set: &ComparisonSet) -> Result<ComparisonSet> {
    let probs = set.probabilities("symmetrize")?;
    let mut out: Vec<Option<ComparisonRecord>> = Vec::with_capacity(set.len() / 2);
    // ordered pair -> queue of (output slot, p) still waiting for the reverse
    let mut pending: HashMap<Pair, Vec<(usize, f64)>> = HashMap::new();
    for (r, &p) in set.records().iter().zip(&probs) {
        let reverse = pending.get_mut(&(r.j, r.i)).filter(|q| !q.is_empty());
        match reverse {
            Some(queue) => {
                let (slot, p_first) = queue.remove(0);
                let first = out[slot].as_mut().expect("reserved slot");
                first.p = Some(0.5 * (p_first + (1.0 - p)));
            }
            None => {
                pending
                    .entry((r.i, r.j))
                    .or_default()
                    .push((out.len(), p));
                out.push(Some(ComparisonRecord::soft(r.i, r.j, p)));
            }
        }
    }
    let mut unmatched: Vec<Pair> = pending
        .iter()
        .filter(|(_, q)| !q.is_empty())
        .map(|(&pair, _)| pair)
        .collect();
    unmatched.sort_unstable();
    if let Some(&(i, j)) = unmatched.first() {
        return Err(RankError::UnmatchedPair { i, j });
    }
    let records = out.into_iter().map(|r| r.expect("filled slot")).collect();
    Ok(ComparisonSet {
        n_items: set.n_items,
        records,
        directed: false,
        clamped: set.clamped,
    })
}

/// Largest admissible budget for `n` items.
pub fn max_pairs(n: usize, directed: bool) -> usize {
    let undirected = n * n.saturating_sub(1) / 2;
    if directed {
        2 * undirected
    } else {
        undirected
    }
}

/// Draws `k` unique pairs such that every item appears at least once.
///
/// A random permutation chain supplies `n - 1` pairs covering all items; the
/// remaining `k - (n - 1)` pairs are drawn uniformly without replacement from
/// the pairs not yet used. Undirected pairs get a random presentation order.
pub fn sample_subset(n: usize, k: usize, seed: u64, directed: bool) -> Result<Vec<Pair>> {
    if n < 2 {
        return Err(RankError::TooFewItems(n));
    }
    let (min, max) = (n - 1, max_pairs(n, directed));
    if k < min || k > max {
        return Err(RankError::InfeasibleBudget { n, k, min, max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key = |(a, b): Pair| if directed { (a, b) } else { (a.min(b), a.max(b)) };

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut pairs: Vec<Pair> = order.windows(2).map(|w| (w[0], w[1])).collect();
    let used: HashSet<Pair> = pairs.iter().map(|&p| key(p)).collect();

    let candidates: Vec<Pair> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b && (directed || a < b))
        .filter(|&p| !used.contains(&p))
        .collect();
    for idx in index::sample(&mut rng, candidates.len(), k - min) {
        let (a, b) = candidates[idx];
        if directed || rng.random_bool(0.5) {
            pairs.push((a, b));
        } else {
            pairs.push((b, a));
        }
    }
    pairs.shuffle(&mut rng);
    Ok(pairs)
}
