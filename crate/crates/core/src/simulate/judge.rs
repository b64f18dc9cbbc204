//! Synthetic judge standing in for a language-model comparator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::comparison::{validate_set, ComparisonRecord, ComparisonSet, Pair};
use crate::error::{RankError, Result};
use crate::estimators::sigmoid;

/// Judge with logistic response to the scaled score difference, Gaussian
/// logit noise and a fixed logit offset for the first presentation slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeModel {
    #[serde(rename = "scores")]
    pub latent_scores: Vec<f64>,
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default)]
    pub position_bias: f64,
}

fn one() -> f64 {
    1.0
}

impl JudgeModel {
    pub fn new(latent_scores: Vec<f64>, temperature: f64, noise_sd: f64, position_bias: f64) -> Result<Self> {
        let judge = Self {
            latent_scores,
            temperature,
            noise_sd,
            position_bias,
        };
        judge.validate()?;
        Ok(judge)
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_scores.len() < 2 {
            return Err(RankError::TooFewItems(self.latent_scores.len()));
        }
        if self.latent_scores.iter().any(|s| !s.is_finite()) {
            return Err(RankError::InvalidConfig("judge scores must be finite".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(RankError::InvalidConfig("temperature must be positive".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(RankError::InvalidConfig("noise_sd must be non-negative".into()));
        }
        if !self.position_bias.is_finite() {
            return Err(RankError::InvalidConfig("position_bias must be finite".into()));
        }
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.latent_scores.len()
    }

    /// Noise-free logit of `i` beating `j` when shown in that order.
    pub fn mean_logit(&self, i: usize, j: usize) -> f64 {
        (self.latent_scores[i] - self.latent_scores[j]) / self.temperature + self.position_bias
    }
}

/// Judges every pair: `p = logistic((s_i - s_j)/τ + b + ε)` with
/// `ε ~ N(0, ν²)`, and a hard outcome drawn as `Bernoulli(p)` from a separate
/// stream of the same seed.
pub fn generate_judgments(judge: &JudgeModel, pairs: &[Pair], seed: u64) -> Result<ComparisonSet> {
    judge.validate()?;
    let n = judge.n_items();
    let noise = Normal::new(0.0, judge.noise_sd)
        .map_err(|e| RankError::InvalidConfig(e.to_string()))?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcome_rng = ChaCha8Rng::seed_from_u64(seed);
    outcome_rng.set_stream(1);
    let mut records = Vec::with_capacity(pairs.len());
    for (index, &(i, j)) in pairs.iter().enumerate() {
        if i >= n || j >= n {
            return Err(RankError::IndexOutOfRange { index, i, j, n });
        }
        let eps = if judge.noise_sd > 0.0 {
            noise.sample(&mut noise_rng)
        } else {
            0.0
        };
        let p = sigmoid(judge.mean_logit(i, j) + eps);
        let y = outcome_rng.random_bool(p.clamp(0.0, 1.0));
        records.push(ComparisonRecord {
            i,
            j,
            p: Some(p),
            y: Some(y),
        });
    }
    validate_set(records, n)
}
