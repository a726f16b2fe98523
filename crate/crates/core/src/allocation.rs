//! Per-bucket capital weights and their conversion into fixed liquidity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bucketing::{Bucket, BucketPartition};
use crate::error::{ConfigError, Error, Result};
use crate::math::{position_value, split_capital, Liquidity};

/// Non-negative per-bucket weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationWeights {
    weights: Vec<f64>,
}

impl AllocationWeights {
    /// Normalize raw non-negative weights.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ConfigError::Weights("weights must be finite and >= 0".into()).into());
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(ConfigError::Weights("weights sum to zero".into()).into());
        }
        let mut weights: Vec<f64> = raw.into_iter().map(|w| w / total).collect();
        // pin the sum to one against rounding drift
        let resid = 1.0 - weights.iter().sum::<f64>();
        if let Some(top) = weights
            .iter_mut()
            .max_by(|a, b| a.partial_cmp(b).unwrap())
        {
            *top += resid;
        }
        Ok(Self { weights })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, b: Bucket) -> f64 {
        self.weights[b.index()]
    }

    /// Buckets with positive weight, ascending.
    pub fn active_set(&self) -> Vec<Bucket> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, _)| Bucket::from_index(i))
            .collect()
    }
}

/// Clipped window `[s - tau, s + tau] ∩ [1, n]` as zero-based bounds.
fn window(partition: &BucketPartition, s: Bucket, tau: usize) -> Result<(usize, usize)> {
    let n = partition.len();
    if s.0 == 0 || s.0 > n {
        return Err(Error::Domain(format!("bucket {} outside 1..={n}", s.0)));
    }
    let lo = s.index().saturating_sub(tau);
    let hi = (s.index().saturating_add(tau)).min(n - 1);
    Ok((lo, hi))
}

/// Equal weight on every bucket within `tau` of `s`.
pub fn uniform_tau_weights(
    partition: &BucketPartition,
    s: Bucket,
    tau: usize,
) -> Result<AllocationWeights> {
    let (lo, hi) = window(partition, s, tau)?;
    let mut raw = vec![0.0; partition.len()];
    raw[lo..=hi].iter_mut().for_each(|w| *w = 1.0);
    AllocationWeights::from_raw(raw)
}

/// Random weights supported on the tau window around `s`, drawn from `rng`.
pub fn random_weights<R: Rng + ?Sized>(
    partition: &BucketPartition,
    s: Bucket,
    tau: usize,
    rng: &mut R,
) -> Result<AllocationWeights> {
    let (lo, hi) = window(partition, s, tau)?;
    let mut raw = vec![0.0; partition.len()];
    for w in &mut raw[lo..=hi] {
        // (0, 1] keeps every window bucket active
        *w = 1.0 - rng.gen::<f64>();
    }
    AllocationWeights::from_raw(raw)
}

/// User weights given relative to the benchmark: entry `j` applies to bucket
/// `s - tau + j`. Entries falling off the partition are dropped before
/// normalization.
pub fn window_weights(
    partition: &BucketPartition,
    s: Bucket,
    tau: usize,
    relative: &[f64],
) -> Result<AllocationWeights> {
    if relative.len() != 2 * tau + 1 {
        return Err(ConfigError::Weights(format!(
            "window weights need 2*tau+1 = {} entries, got {}",
            2 * tau + 1,
            relative.len()
        ))
        .into());
    }
    window(partition, s, tau)?;
    let mut raw = vec![0.0; partition.len()];
    for (j, w) in relative.iter().enumerate() {
        let b = s.index() as i64 - tau as i64 + j as i64;
        if b >= 0 && (b as usize) < partition.len() {
            raw[b as usize] = *w;
        }
    }
    AllocationWeights::from_raw(raw)
}

/// Shape parameters of the whole-pool normal liquidity profile.
///
/// `mu` and `variance` live on the standardized axis `[-bound, bound]`, which
/// is mapped linearly onto the partition's price span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub mu: f64,
    pub variance: f64,
    pub bound: f64,
}

impl ProfileParams {
    pub const DEFAULT_BOUND: f64 = 3.0;

    pub fn new(mu: f64, variance: f64, bound: f64) -> Result<Self> {
        let p = Self {
            mu,
            variance,
            bound,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(ConfigError::ProfileMean(self.mu).into());
        }
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(ConfigError::Variance(self.variance).into());
        }
        if !(self.bound.is_finite() && self.bound > 0.0) {
            return Err(ConfigError::ProfileBound(self.bound).into());
        }
        Ok(())
    }
}

/// Weights proportional to a normal density evaluated at each bucket midpoint.
pub fn normal_profile_weights(
    partition: &BucketPartition,
    params: &ProfileParams,
) -> Result<AllocationWeights> {
    params.validate()?;
    let n = partition.len();
    let span = partition.upper() - partition.lower();
    let exponents: Vec<f64> = (1..=n)
        .map(|i| {
            let mid = partition.midpoint(Bucket(i));
            let u = -params.bound + 2.0 * params.bound * (mid - partition.lower()) / span;
            let d = u - params.mu;
            -d * d / (2.0 * params.variance)
        })
        .collect();
    // shift by the max exponent so at least one weight is exactly 1
    let top = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    AllocationWeights::from_raw(exponents.iter().map(|e| (e - top).exp()).collect())
}

/// Fixed liquidity for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochAllocation {
    pub liquidity: Vec<Liquidity>,
    pub deployed_capital: f64,
    pub anchor_price: f64,
}

impl EpochAllocation {
    pub fn active_set(&self) -> Vec<Bucket> {
        self.liquidity
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_zero())
            .map(|(i, _)| Bucket::from_index(i))
            .collect()
    }

    /// Token-B value of all positions at pool price `p`.
    pub fn value_at(&self, partition: &BucketPartition, p: f64) -> Result<f64> {
        let mut total = 0.0;
        for (i, l) in self.liquidity.iter().enumerate() {
            if !l.is_zero() {
                total += position_value(*l, p, &partition.range(Bucket::from_index(i)), p)?;
            }
        }
        Ok(total)
    }
}

/// Deploy `capital` across buckets by weight at `anchor_price`.
pub fn allocate_epoch(
    weights: &AllocationWeights,
    capital: f64,
    anchor_price: f64,
    partition: &BucketPartition,
) -> Result<EpochAllocation> {
    if !(capital.is_finite() && capital > 0.0) {
        return Err(ConfigError::Capital(capital).into());
    }
    if weights.len() != partition.len() {
        return Err(Error::Domain(format!(
            "{} weights for {} buckets",
            weights.len(),
            partition.len()
        )));
    }
    let mut liquidity = vec![Liquidity::ZERO; partition.len()];
    for (i, w) in weights.as_slice().iter().enumerate() {
        if *w > 0.0 {
            let range = partition.range(Bucket::from_index(i));
            liquidity[i] = split_capital(w * capital, anchor_price, &range)?.1;
        }
    }
    Ok(EpochAllocation {
        liquidity,
        deployed_capital: capital,
        anchor_price,
    })
}
