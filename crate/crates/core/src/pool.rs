//! Pool of augmentation pairs and the boosting-style adaptive sampler.
//!
//! Every entry starts at weight `e^alpha`. At each mini-batch boundary an
//! entry that has been applied at least once moves toward `e^{alpha (1 - phi)}`
//! with momentum `lambda`, where `phi` is its running mean matching F1. Poorly
//! matched (hard) pairs therefore gain sampling probability. Since
//! `e^{alpha (1 - phi)}` lies in `[1, e^alpha]` for `phi` in `[0, 1]`, weights
//! never leave that interval.

use num_traits::Float;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugKind, AugSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoolError {
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("pool entry {0} does not exist")]
    NoSuchEntry(usize),
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Uniform,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasConfig {
    /// Momentum on the previous weight, in `[0, 1]`.
    pub lambda: f64,
    /// Magnitude of the exponential reweighting, `>= 1`.
    pub alpha: f64,
    pub pool_size: usize,
    pub sampler: SamplerKind,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            lambda: 0.8,
            alpha: 3.0,
            pool_size: 512,
            sampler: SamplerKind::Bias,
        }
    }
}

impl BiasConfig {
    pub fn validate(&self) -> Result<(), PoolError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(PoolError::InvalidConfig(format!(
                "lambda {} not in [0, 1]",
                self.lambda
            )));
        }
        if !(self.alpha >= 1.0) || !self.alpha.is_finite() {
            return Err(PoolError::InvalidConfig(format!("alpha {} must be >= 1", self.alpha)));
        }
        if self.pool_size == 0 {
            return Err(PoolError::InvalidConfig("pool_size must be positive".into()));
        }
        Ok(())
    }
}

/// `lambda * w + (1 - lambda) * exp(alpha * (1 - phi))`.
///
/// Evaluated as a step from `w` toward the target and clamped between the
/// two, so a weight already at its target is returned bit-for-bit.
pub fn bias_update<T: Float>(weight: T, phi: T, lambda: T, alpha: T) -> T {
    let target = (alpha * (T::one() - phi)).exp();
    let next = weight + (T::one() - lambda) * (target - weight);
    next.max(weight.min(target)).min(weight.max(target))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugPairEntry {
    pub first: AugSpec,
    pub second: AugSpec,
    pub weight: f64,
    pub perf_sum: f64,
    pub perf_count: u64,
    #[serde(skip)]
    pub batch_scores: Vec<f64>,
}

impl AugPairEntry {
    pub fn new(first: AugSpec, second: AugSpec, alpha: f64) -> Self {
        Self {
            first,
            second,
            weight: alpha.exp(),
            perf_sum: 0.0,
            perf_count: 0,
            batch_scores: Vec::new(),
        }
    }

    /// Running mean score, `None` before the first application.
    pub fn phi(&self) -> Option<f64> {
        (self.perf_count > 0).then(|| self.perf_sum / self.perf_count as f64)
    }

    pub fn kinds(&self) -> (AugKind, AugKind) {
        (self.first.kind(), self.second.kind())
    }
}

/// Kind pairs that never form an entry.
pub fn is_excluded(a: AugKind, b: AugKind) -> bool {
    matches!(
        (a, b),
        (AugKind::Identity, AugKind::Identity) | (AugKind::Mixup, AugKind::Mixup)
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub entries: Vec<AugPairEntry>,
}

impl Pool {
    /// Draws `pool_size` ordered pairs: a kind pair uniformly from the allowed
    /// ones, then each spec's parameters uniformly from their ranges.
    pub fn build(cfg: &BiasConfig, rng: &mut impl Rng) -> Result<Self, PoolError> {
        Self::build_from_kinds(cfg, &AugKind::ALL, rng)
    }

    /// Like [`Pool::build`] but restricted to `kinds`.
    pub fn build_from_kinds(cfg: &BiasConfig, kinds: &[AugKind], rng: &mut impl Rng) -> Result<Self, PoolError> {
        cfg.validate()?;
        let allowed: Vec<(AugKind, AugKind)> = kinds
            .iter()
            .flat_map(|&a| kinds.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| !is_excluded(a, b))
            .collect();
        if allowed.is_empty() {
            return Err(PoolError::InvalidConfig("no admissible augmentation pair".into()));
        }
        let entries = (0..cfg.pool_size)
            .map(|_| {
                let (a, b) = allowed[rng.random_range(0..allowed.len())];
                let first = AugSpec::sample(a, rng);
                let second = AugSpec::sample(b, rng);
                AugPairEntry::new(first, second, cfg.alpha)
            })
            .collect();
        Ok(Self { entries })
    }

    pub fn from_entries(entries: Vec<AugPairEntry>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Normalized sampling distribution over entries.
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.entries.iter().map(|e| e.weight).sum();
        self.entries.iter().map(|e| e.weight / total).collect()
    }

    /// Shannon entropy (nats) of the sampling distribution.
    pub fn entropy(&self) -> f64 {
        -self
            .probabilities()
            .into_iter()
            .filter(|&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    /// Frozen view of the current distribution for one mini-batch.
    pub fn sampler(&self, kind: SamplerKind) -> PoolSampler {
        match kind {
            SamplerKind::Uniform => PoolSampler::Uniform(self.len()),
            SamplerKind::Bias => PoolSampler::Weighted(
                WeightedIndex::new(self.entries.iter().map(|e| e.weight)).expect("weights are positive and finite"),
            ),
        }
    }

    pub fn sample_pair(&self, kind: SamplerKind, rng: &mut impl Rng) -> usize {
        self.sampler(kind).sample(rng)
    }

    pub fn record_score(&mut self, idx: usize, score: f64) -> Result<(), PoolError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(PoolError::ScoreOutOfRange(score));
        }
        self.entries
            .get_mut(idx)
            .ok_or(PoolError::NoSuchEntry(idx))?
            .batch_scores
            .push(score);
        Ok(())
    }

    /// Folds buffered scores into the running statistics and, for the
    /// adaptive sampler, moves every applied entry's weight.
    pub fn end_batch_update(&mut self, cfg: &BiasConfig) {
        let ceiling = cfg.alpha.exp();
        for e in &mut self.entries {
            e.perf_sum += e.batch_scores.iter().sum::<f64>();
            e.perf_count += e.batch_scores.len() as u64;
            e.batch_scores.clear();
            if cfg.sampler != SamplerKind::Bias {
                continue;
            }
            if let Some(phi) = e.phi() {
                e.weight = bias_update(e.weight, phi, cfg.lambda, cfg.alpha);
                debug_assert!(
                    e.weight >= 1.0 - 1e-12 && e.weight <= ceiling * (1.0 + 1e-12),
                    "weight {} escaped [1, e^alpha]",
                    e.weight
                );
            }
        }
    }

    /// Entries ordered by descending weight, for reporting.
    pub fn snapshot(&self) -> Vec<PoolSnapshotRow> {
        let mut rows: Vec<PoolSnapshotRow> = self
            .entries
            .iter()
            .enumerate()
            .map(|(index, e)| PoolSnapshotRow {
                index,
                first: e.first,
                second: e.second,
                weight: e.weight,
                phi: e.phi(),
                count: e.perf_count,
            })
            .collect();
        rows.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.index.cmp(&b.index)));
        rows
    }
}

pub enum PoolSampler {
    Uniform(usize),
    Weighted(WeightedIndex<f64>),
}

impl PoolSampler {
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        match self {
            PoolSampler::Uniform(n) => rng.random_range(0..*n),
            PoolSampler::Weighted(w) => w.sample(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSnapshotRow {
    pub index: usize,
    pub first: AugSpec,
    pub second: AugSpec,
    pub weight: f64,
    pub phi: Option<f64>,
    pub count: u64,
}
