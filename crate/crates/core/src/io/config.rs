//! Run configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! lower = 1900
//! upper = 2100
//! buckets = 200
//! tau = 5
//! strategy = uniform
//! capital = 1000000
//! fee_rate = 0.003
//! ```
//!
//! Keys: `lower`, `upper`, `buckets`, `capital`, `fee_rate`, `strategy`
//! (required); `tau` (integer or `none`), `weights`, `weights_anchor`
//! (`absolute` | `window`), `seed`, `mu`, `variance`, `bound`, `gas_mint`,
//! `gas_burn`, `gas_price_gwei`, `gas_token_price` (`token_a` or a number),
//! `reinvestment` (`reinvest` | `exclude` | `fix`), `fixed_capital`,
//! `volume_cap`, `price_mode` (`strict` | `clamp`).

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocation::ProfileParams;
use crate::bucketing::{BucketPartition, PriceMode};
use crate::engine::{GasParams, GasTokenPrice};
use crate::error::{ConfigError, Error, Result};

const KEYS: &[&str] = &[
    "lower",
    "upper",
    "buckets",
    "tau",
    "strategy",
    "weights",
    "weights_anchor",
    "seed",
    "mu",
    "variance",
    "bound",
    "capital",
    "fee_rate",
    "gas_mint",
    "gas_burn",
    "gas_price_gwei",
    "gas_token_price",
    "reinvestment",
    "fixed_capital",
    "volume_cap",
    "price_mode",
];

/// How user-supplied weights are indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightAnchor {
    /// One weight per bucket of the partition.
    Absolute,
    /// `2*tau + 1` weights centred on each epoch's benchmark bucket.
    Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Strategy {
    Uniform,
    Custom { weights: Vec<f64>, anchor: WeightAnchor },
    Random { seed: u64 },
    Normal(ProfileParams),
}

/// What capital the next epoch deploys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reinvestment {
    /// Exit value of the previous epoch plus its converted fees.
    Reinvest,
    /// Exit value of the previous epoch only.
    Exclude,
    /// A constant level every epoch.
    FixAtLevel(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub partition: BucketPartition,
    /// `None` disables resets: one epoch, strategy window spans the partition.
    pub tau: Option<usize>,
    pub strategy: Strategy,
    pub capital: f64,
    pub fee_rate: f64,
    pub gas: GasParams,
    pub reinvestment: Reinvestment,
    pub volume_cap: Option<f64>,
    pub price_mode: PriceMode,
}

impl RunConfig {
    /// A single-epoch uniform configuration with default gas and exclusion of fees.
    pub fn new(partition: BucketPartition, capital: f64, fee_rate: f64) -> Self {
        Self {
            partition,
            tau: None,
            strategy: Strategy::Uniform,
            capital,
            fee_rate,
            gas: GasParams::default(),
            reinvestment: Reinvestment::Exclude,
            volume_cap: None,
            price_mode: PriceMode::Strict,
        }
    }

    pub fn with_tau(mut self, tau: Option<usize>) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_reinvestment(mut self, reinvestment: Reinvestment) -> Self {
        self.reinvestment = reinvestment;
        self
    }

    pub fn with_gas(mut self, gas: GasParams) -> Self {
        self.gas = gas;
        self
    }

    /// Cross-field checks; run before any backtest.
    pub fn validate(&self) -> Result<()> {
        if !(self.capital.is_finite() && self.capital > 0.0) {
            return Err(ConfigError::Capital(self.capital).into());
        }
        if !(self.fee_rate > 0.0 && self.fee_rate < 1.0) {
            return Err(ConfigError::FeeRate(self.fee_rate).into());
        }
        self.gas.validate()?;
        if let Reinvestment::FixAtLevel(level) = self.reinvestment {
            if !(level.is_finite() && level > 0.0) {
                return Err(ConfigError::FixedCapital(level).into());
            }
        }
        if let Some(cap) = self.volume_cap {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(ConfigError::VolumeCap(cap).into());
            }
        }
        match &self.strategy {
            Strategy::Normal(p) => p.validate()?,
            Strategy::Custom { weights, anchor } => {
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(ConfigError::Weights("weights must be finite and >= 0".into()).into());
                }
                if !(weights.iter().sum::<f64>() > 0.0) {
                    return Err(ConfigError::Weights("weights sum to zero".into()).into());
                }
                match anchor {
                    WeightAnchor::Absolute if weights.len() != self.partition.len() => {
                        return Err(ConfigError::Weights(format!(
                            "{} weights for {} buckets",
                            weights.len(),
                            self.partition.len()
                        ))
                        .into());
                    }
                    WeightAnchor::Window => {
                        let tau = self
                            .tau
                            .ok_or_else(|| ConfigError::TauRequired("custom window".into()))?;
                        if weights.len() != 2 * tau + 1 {
                            return Err(ConfigError::Weights(format!(
                                "window weights need 2*tau+1 = {} entries, got {}",
                                2 * tau + 1,
                                weights.len()
                            ))
                            .into());
                        }
                    }
                    _ => {}
                }
            }
            Strategy::Uniform | Strategy::Random { .. } => {}
        }
        Ok(())
    }

    /// Parse the flat key-value format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: lineno + 1,
                text: raw.trim().to_string(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax {
                    line: lineno + 1,
                    text: raw.trim().to_string(),
                }
                .into());
            }
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey(key.to_string()).into());
            }
            if map.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::DuplicateKey(key.to_string()).into());
            }
        }
        Self::from_map(&map)
    }

    fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let lower: f64 = required(map, "lower")?;
        let upper: f64 = required(map, "upper")?;
        let buckets: usize = required(map, "buckets")?;
        let partition = BucketPartition::new(lower, upper, buckets)?;

        let tau = match map.get("tau").map(String::as_str) {
            None | Some("none") => None,
            Some(_) => Some(required::<usize>(map, "tau")?),
        };

        let strategy_name: String = required(map, "strategy")?;
        let strategy = match strategy_name.as_str() {
            "uniform" => Strategy::Uniform,
            "random" => Strategy::Random {
                seed: optional(map, "seed")?.unwrap_or(0),
            },
            "custom" => {
                let raw: String = required(map, "weights")?;
                let weights = raw
                    .split(',')
                    .map(|w| {
                        w.trim().parse::<f64>().map_err(|_| ConfigError::InvalidValue {
                            key: "weights".into(),
                            value: w.trim().into(),
                        })
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let anchor = match map.get("weights_anchor").map(String::as_str) {
                    None | Some("absolute") => WeightAnchor::Absolute,
                    Some("window") => WeightAnchor::Window,
                    Some(other) => return Err(invalid("weights_anchor", other)),
                };
                Strategy::Custom { weights, anchor }
            }
            "normal" => Strategy::Normal(ProfileParams {
                mu: required(map, "mu")?,
                variance: required(map, "variance")?,
                bound: optional(map, "bound")?.unwrap_or(ProfileParams::DEFAULT_BOUND),
            }),
            other => return Err(invalid("strategy", other)),
        };

        let defaults = GasParams::default();
        let gas_token_price = match map.get("gas_token_price").map(String::as_str) {
            None | Some("token_a") => GasTokenPrice::TokenA,
            Some(_) => GasTokenPrice::Fixed(required(map, "gas_token_price")?),
        };
        let gas = GasParams {
            mint_gas: optional(map, "gas_mint")?.unwrap_or(defaults.mint_gas),
            burn_gas: optional(map, "gas_burn")?.unwrap_or(defaults.burn_gas),
            gas_price_gwei: optional(map, "gas_price_gwei")?.unwrap_or(defaults.gas_price_gwei),
            gas_token_price,
        };

        let capital: f64 = required(map, "capital")?;
        let reinvestment = match map.get("reinvestment").map(String::as_str) {
            None | Some("exclude") => Reinvestment::Exclude,
            Some("reinvest") => Reinvestment::Reinvest,
            Some("fix") => {
                Reinvestment::FixAtLevel(optional(map, "fixed_capital")?.unwrap_or(capital))
            }
            Some(other) => return Err(invalid("reinvestment", other)),
        };
        let price_mode = match map.get("price_mode").map(String::as_str) {
            None | Some("strict") => PriceMode::Strict,
            Some("clamp") => PriceMode::Clamp,
            Some(other) => return Err(invalid("price_mode", other)),
        };

        let config = RunConfig {
            partition,
            tau,
            strategy,
            capital,
            fee_rate: required(map, "fee_rate")?,
            gas,
            reinvestment,
            volume_cap: optional(map, "volume_cap")?,
            price_mode,
        };
        config.validate()?;
        Ok(config)
    }
}

fn invalid(key: &str, value: &str) -> Error {
    ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
    }
    .into()
}

fn optional<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|_| invalid(key, v)))
        .transpose()
}

fn required<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    optional(map, key)?.ok_or_else(|| ConfigError::MissingKey(key.into()).into())
}
