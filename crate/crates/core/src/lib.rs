//! Backtesting for concentrated-liquidity market-maker pools.
//!
//! A price series is replayed against fixed per-bucket liquidity. Pool states
//! come from closed-form position math, trader volume from the positive parts
//! of reserve changes, and fees from the pool fee rate applied to that volume.
//! Liquidity can follow a tau-reset window strategy or a whole-pool normal
//! profile, whose variance [`calibration`] fits to an observed fee total.

pub mod allocation;
pub mod bucketing;
pub mod calibration;
pub mod engine;
pub mod error;
pub mod io;
pub mod math;

pub use allocation::{AllocationWeights, EpochAllocation, ProfileParams};
pub use bucketing::{Bucket, BucketPartition, Epoch, EpochPlan, PriceMode};
pub use calibration::{CalibrationResult, FeeCurve};
pub use engine::{run_backtest, BacktestReport, FeeLedger, GasParams, GasTokenPrice, PoolStateTensor};
pub use error::{ConfigError, DataError, Error, Result};
pub use io::config::{Reinvestment, RunConfig, Strategy, WeightAnchor};
pub use io::PriceSeries;
pub use math::{Liquidity, PriceRange, ReservePair};
