//! Equal-width price buckets and tau-reset epoch segmentation.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DataError, Result};
use crate::math::PriceRange;

/// 1-based bucket number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bucket(pub usize);

impl Bucket {
    /// Zero-based position in per-bucket vectors.
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn from_index(i: usize) -> Self {
        Bucket(i + 1)
    }
}

/// What to do with a price outside the partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceMode {
    /// Reject it.
    #[default]
    Strict,
    /// Assign it to the nearest end bucket.
    Clamp,
}

/// `n` equal-width buckets tiling `[lower, upper]`.
///
/// Bucket `i` spans `[edge(i-1), edge(i))`; the last bucket also contains `upper`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketPartition {
    lower: f64,
    upper: f64,
    n: usize,
    width: f64,
}

impl BucketPartition {
    pub fn new(lower: f64, upper: f64, n: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower <= 0.0 || upper <= lower {
            return Err(ConfigError::Bounds { lower, upper }.into());
        }
        if n == 0 {
            return Err(ConfigError::BucketCount.into());
        }
        let width = (upper - lower) / n as f64;
        if !(width > 0.0) {
            return Err(ConfigError::Bounds { lower, upper }.into());
        }
        let partition = Self {
            lower,
            upper,
            n,
            width,
        };
        // every bucket must be a usable price range
        for i in 1..=n {
            if partition.edge(i) <= partition.edge(i - 1) {
                return Err(ConfigError::Bounds { lower, upper }.into());
            }
        }
        Ok(partition)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Edge `k` for `k` in `0..=n`; edge 0 is `lower` and edge `n` is `upper`.
    pub fn edge(&self, k: usize) -> f64 {
        if k >= self.n {
            self.upper
        } else {
            self.lower + k as f64 * self.width
        }
    }

    pub fn range(&self, b: Bucket) -> PriceRange {
        PriceRange::new(self.edge(b.0 - 1), self.edge(b.0))
            .expect("partition edges are validated at construction")
    }

    pub fn ranges(&self) -> Vec<PriceRange> {
        (1..=self.n).map(|i| self.range(Bucket(i))).collect()
    }

    /// Midpoint of bucket `b`.
    pub fn midpoint(&self, b: Bucket) -> f64 {
        0.5 * (self.edge(b.0 - 1) + self.edge(b.0))
    }

    pub fn contains(&self, p: f64) -> bool {
        p >= self.lower && p <= self.upper
    }

    /// Bucket holding `p`, rejecting prices outside `[lower, upper]`.
    pub fn bucket_of(&self, p: f64) -> std::result::Result<Bucket, DataError> {
        if !self.contains(p) {
            return Err(DataError::OutOfPartition {
                index: 0,
                price: p,
                lower: self.lower,
                upper: self.upper,
            });
        }
        Ok(self.locate(p))
    }

    /// Bucket holding `p` under the given mode.
    pub fn bucket_with_mode(
        &self,
        p: f64,
        mode: PriceMode,
    ) -> std::result::Result<Bucket, DataError> {
        match mode {
            PriceMode::Strict => self.bucket_of(p),
            PriceMode::Clamp if p.is_nan() => self.bucket_of(p),
            PriceMode::Clamp => Ok(self.locate(p.clamp(self.lower, self.upper))),
        }
    }

    fn locate(&self, p: f64) -> Bucket {
        let guess = ((p - self.lower) / self.width).floor();
        let mut k = if guess <= 0.0 {
            0
        } else {
            (guess as usize).min(self.n - 1)
        };
        // settle rounding so lookup agrees with `edge`
        while k > 0 && p < self.edge(k) {
            k -= 1;
        }
        while k + 1 < self.n && p >= self.edge(k + 1) {
            k += 1;
        }
        Bucket(k + 1)
    }
}

/// A maximal run of prices with fixed liquidity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Epoch {
    pub start: usize,
    /// Inclusive; shared with the next epoch's `start`.
    pub end: usize,
    pub benchmark: Bucket,
}

impl Epoch {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub epochs: Vec<Epoch>,
    pub series_length: usize,
}

impl EpochPlan {
    /// One epoch covering the whole series, anchored on the bucket of the first price.
    pub fn single(
        partition: &BucketPartition,
        prices: &[f64],
        mode: PriceMode,
    ) -> std::result::Result<Self, DataError> {
        let first = *prices.first().ok_or(DataError::TooShort { need: 1, found: 0 })?;
        let benchmark = partition
            .bucket_with_mode(first, mode)
            .map_err(|e| at_index(e, 0))?;
        if mode == PriceMode::Strict {
            if let Some(i) = prices.iter().position(|&p| !partition.contains(p)) {
                return Err(at_index(partition.bucket_of(prices[i]).unwrap_err(), i));
            }
        }
        Ok(Self {
            epochs: vec![Epoch {
                start: 0,
                end: prices.len() - 1,
                benchmark,
            }],
            series_length: prices.len(),
        })
    }

    /// Indices where liquidity is redeployed (every epoch start after the first).
    pub fn transitions(&self) -> impl Iterator<Item = usize> + '_ {
        self.epochs.iter().skip(1).map(|e| e.start)
    }
}

fn at_index(e: DataError, index: usize) -> DataError {
    match e {
        DataError::OutOfPartition {
            price, lower, upper, ..
        } => DataError::OutOfPartition {
            index,
            price,
            lower,
            upper,
        },
        other => other,
    }
}

/// Split `prices` into tau-reset epochs.
///
/// The first price's bucket is the benchmark. The first later price whose bucket
/// is more than `tau` away from the benchmark closes the epoch and opens the next
/// one with its own bucket as benchmark.
pub fn segment_epochs(
    partition: &BucketPartition,
    prices: &[f64],
    tau: usize,
    mode: PriceMode,
) -> std::result::Result<EpochPlan, DataError> {
    if prices.is_empty() {
        return Err(DataError::TooShort { need: 1, found: 0 });
    }
    let mut epochs = Vec::new();
    let mut start = 0;
    let mut benchmark = partition
        .bucket_with_mode(prices[0], mode)
        .map_err(|e| at_index(e, 0))?;
    for (i, &p) in prices.iter().enumerate().skip(1) {
        let b = partition
            .bucket_with_mode(p, mode)
            .map_err(|e| at_index(e, i))?;
        if b.0.abs_diff(benchmark.0) > tau {
            epochs.push(Epoch {
                start,
                end: i,
                benchmark,
            });
            start = i;
            benchmark = b;
        }
    }
    epochs.push(Epoch {
        start,
        end: prices.len() - 1,
        benchmark,
    });
    Ok(EpochPlan {
        epochs,
        series_length: prices.len(),
    })
}
