//! Pool-state replay: reserves per bucket over time, trader inflows and fees
//! from positive reserve differences, gas, and the capital trajectory.
//!
//! Reductions run in a fixed order so results do not depend on the thread
//! count: each step sums its buckets in ascending order, steps are summed
//! sequentially, and per-bucket totals combine fixed-size time chunks in order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{
    allocate_epoch, normal_profile_weights, random_weights, uniform_tau_weights, window_weights,
    AllocationWeights, EpochAllocation,
};
use crate::bucketing::{segment_epochs, Bucket, BucketPartition, EpochPlan};
use crate::error::{ConfigError, DataError, Error, Result};
use crate::io::config::{Reinvestment, RunConfig, Strategy, WeightAnchor};
use crate::io::PriceSeries;
use crate::math::{liquidity_state, PriceRange, ReservePair};

/// Steps per parallel work unit.
const CHUNK: usize = 4096;

/// Relative tolerance under which a bucket's liquidity counts as unchanged
/// across an epoch transition.
pub const UNCHANGED_LIQUIDITY_RTOL: f64 = 1e-12;

/// Reserves of every bucket at every step of one epoch, row-major by step.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStates {
    pub start: usize,
    pub rows: usize,
    pub cols: usize,
    cells: Vec<ReservePair>,
}

impl EpochStates {
    /// State at global price index `t` (must lie in this epoch) for bucket `b`.
    pub fn at(&self, t: usize, b: Bucket) -> ReservePair {
        self.cells[(t - self.start) * self.cols + b.index()]
    }

    pub fn row(&self, local: usize) -> &[ReservePair] {
        &self.cells[local * self.cols..(local + 1) * self.cols]
    }
}

#[derive(Debug, Clone)]
pub struct PoolStateTensor {
    pub plan: EpochPlan,
    pub epochs: Vec<EpochStates>,
}

fn check_plan(plan: &EpochPlan, allocations: &[EpochAllocation], prices: &[f64]) -> Result<()> {
    if plan.series_length != prices.len() {
        return Err(DataError::Mismatch(format!(
            "plan covers {} prices, series has {}",
            plan.series_length,
            prices.len()
        ))
        .into());
    }
    if allocations.len() != plan.epochs.len() {
        return Err(DataError::Mismatch(format!(
            "{} allocations for {} epochs",
            allocations.len(),
            plan.epochs.len()
        ))
        .into());
    }
    Ok(())
}

/// Materialize `state(t, i) = liquidity_state(L_i, p_t, B_i)` for every epoch.
pub fn build_state_tensor(
    partition: &BucketPartition,
    plan: &EpochPlan,
    allocations: &[EpochAllocation],
    prices: &[f64],
) -> Result<PoolStateTensor> {
    check_plan(plan, allocations, prices)?;
    let ranges = partition.ranges();
    let mut epochs = Vec::with_capacity(plan.epochs.len());
    for (epoch, alloc) in plan.epochs.iter().zip(allocations) {
        if alloc.liquidity.len() != ranges.len() {
            return Err(DataError::Mismatch("allocation width differs from partition".into()).into());
        }
        let cols = ranges.len();
        let rows = epoch.len();
        let mut cells = vec![ReservePair::default(); rows * cols];
        cells
            .par_chunks_mut(cols)
            .enumerate()
            .try_for_each(|(local, row)| -> Result<()> {
                let p = prices[epoch.start + local];
                for ((cell, l), range) in row.iter_mut().zip(&alloc.liquidity).zip(&ranges) {
                    *cell = liquidity_state(*l, p, range)?;
                }
                Ok(())
            })?;
        epochs.push(EpochStates {
            start: epoch.start,
            rows,
            cols,
            cells,
        });
    }
    Ok(PoolStateTensor {
        plan: plan.clone(),
        epochs,
    })
}

/// Fees and trader inflows of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochFees {
    pub epoch: usize,
    pub start: usize,
    pub end: usize,
    pub final_price: f64,
    /// Token A brought in by traders.
    pub inflow_a: f64,
    /// Token B brought in by traders.
    pub inflow_b: f64,
    pub fee_a: f64,
    pub fee_b: f64,
    /// `fee_b + fee_a * final_price`.
    pub fee_converted_b: f64,
    /// `inflow_b + inflow_a * final_price`.
    pub volume_converted_b: f64,
}

impl EpochFees {
    fn new(
        epoch: usize,
        start: usize,
        end: usize,
        final_price: f64,
        inflow_a: f64,
        inflow_b: f64,
        fee_rate: f64,
    ) -> Self {
        let fee_a = fee_rate * inflow_a;
        let fee_b = fee_rate * inflow_b;
        Self {
            epoch,
            start,
            end,
            final_price,
            inflow_a,
            inflow_b,
            fee_a,
            fee_b,
            fee_converted_b: fee_b + fee_a * final_price,
            volume_converted_b: inflow_b + inflow_a * final_price,
        }
    }

    fn scaled(&self, k: f64) -> Self {
        Self {
            inflow_a: self.inflow_a * k,
            inflow_b: self.inflow_b * k,
            fee_a: self.fee_a * k,
            fee_b: self.fee_b * k,
            fee_converted_b: self.fee_converted_b * k,
            volume_converted_b: self.volume_converted_b * k,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeeTotals {
    pub inflow_a: f64,
    pub inflow_b: f64,
    pub fee_a: f64,
    pub fee_b: f64,
    pub fee_converted_b: f64,
    pub volume_converted_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeLedger {
    pub fee_rate: f64,
    pub epochs: Vec<EpochFees>,
    pub totals: FeeTotals,
}

impl FeeLedger {
    fn from_epochs(fee_rate: f64, epochs: Vec<EpochFees>) -> Self {
        let mut totals = FeeTotals::default();
        for e in &epochs {
            totals.inflow_a += e.inflow_a;
            totals.inflow_b += e.inflow_b;
            totals.fee_a += e.fee_a;
            totals.fee_b += e.fee_b;
            totals.fee_converted_b += e.fee_converted_b;
            totals.volume_converted_b += e.volume_converted_b;
        }
        Self {
            fee_rate,
            epochs,
            totals,
        }
    }

    fn scaled(&self, k: f64) -> Self {
        Self::from_epochs(self.fee_rate, self.epochs.iter().map(|e| e.scaled(k)).collect())
    }
}

fn check_fee_rate(fee_rate: f64) -> Result<()> {
    if !(fee_rate > 0.0 && fee_rate < 1.0) {
        return Err(ConfigError::FeeRate(fee_rate).into());
    }
    Ok(())
}

#[inline]
fn positive(d: f64) -> f64 {
    if d > 0.0 {
        d
    } else {
        0.0
    }
}

/// Positive-difference fees over a materialized tensor.
///
/// Within each epoch, every consecutive pair of rows contributes the positive
/// part of each bucket's reserve change; the first difference of an epoch
/// starts at its (shared) first index with that epoch's liquidity.
pub fn compute_fees(tensor: &PoolStateTensor, fee_rate: f64, prices: &[f64]) -> Result<FeeLedger> {
    check_fee_rate(fee_rate)?;
    if tensor.plan.series_length != prices.len() {
        return Err(DataError::Mismatch("tensor and price series lengths differ".into()).into());
    }
    let epochs = tensor
        .plan
        .epochs
        .iter()
        .zip(&tensor.epochs)
        .enumerate()
        .map(|(k, (epoch, states))| {
            let steps: Vec<(f64, f64)> = (1..states.rows)
                .into_par_iter()
                .map(|local| {
                    let (mut a, mut b) = (0.0, 0.0);
                    for (prev, cur) in states.row(local - 1).iter().zip(states.row(local)) {
                        a += positive(cur.x - prev.x);
                        b += positive(cur.y - prev.y);
                    }
                    (a, b)
                })
                .collect();
            let (mut inflow_a, mut inflow_b) = (0.0, 0.0);
            for (a, b) in steps {
                inflow_a += a;
                inflow_b += b;
            }
            EpochFees::new(
                k + 1,
                epoch.start,
                epoch.end,
                prices[epoch.end],
                inflow_a,
                inflow_b,
                fee_rate,
            )
        })
        .collect();
    Ok(FeeLedger::from_epochs(fee_rate, epochs))
}

/// Per-step flows of one epoch computed without materializing the tensor.
struct EpochFlows {
    /// Token A inflow of step `start+j -> start+j+1`, for `j` in `0..len-1`.
    step_a: Vec<f64>,
    step_b: Vec<f64>,
    /// Position value at `start+j`, marked at that price.
    value: Vec<f64>,
    /// Per-bucket inflow totals (A, B), zero for inactive buckets.
    bucket_a: Vec<f64>,
    bucket_b: Vec<f64>,
    /// Aggregate reserves at the epoch's first and last price.
    first: ReservePair,
    last: ReservePair,
}

fn epoch_flows(ranges: &[PriceRange], alloc: &EpochAllocation, prices: &[f64]) -> EpochFlows {
    let active: Vec<(usize, f64, &PriceRange)> = alloc
        .liquidity
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.is_zero())
        .map(|(i, l)| (i, l.get(), &ranges[i]))
        .collect();
    let len = prices.len();
    let n_chunks = len.div_ceil(CHUNK);

    struct Chunk {
        step_a: Vec<f64>,
        step_b: Vec<f64>,
        value: Vec<f64>,
        bucket_a: Vec<f64>,
        bucket_b: Vec<f64>,
    }

    let chunks: Vec<Chunk> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(len);
            let mut prev: Vec<ReservePair> = Vec::with_capacity(active.len());
            let mut out = Chunk {
                step_a: Vec::with_capacity(hi - lo),
                step_b: Vec::with_capacity(hi - lo),
                value: Vec::with_capacity(hi - lo),
                bucket_a: vec![0.0; active.len()],
                bucket_b: vec![0.0; active.len()],
            };
            // seed with the row before the chunk so its first step is counted here
            let seed = if lo == 0 { 0 } else { lo - 1 };
            let p = prices[seed];
            let sp = p.sqrt();
            prev.extend(active.iter().map(|(_, l, r)| r.state_at(*l, p, sp)));
            if lo == 0 {
                out.value
                    .push(prev.iter().fold(0.0, |acc, s| acc + s.value_at(p)));
            }
            for &p in &prices[lo.max(1)..hi] {
                let sp = p.sqrt();
                let (mut a, mut b, mut v) = (0.0, 0.0, 0.0);
                for (k, (_, l, r)) in active.iter().enumerate() {
                    let cur = r.state_at(*l, p, sp);
                    let da = positive(cur.x - prev[k].x);
                    let db = positive(cur.y - prev[k].y);
                    a += da;
                    b += db;
                    out.bucket_a[k] += da;
                    out.bucket_b[k] += db;
                    v += cur.value_at(p);
                    prev[k] = cur;
                }
                out.step_a.push(a);
                out.step_b.push(b);
                out.value.push(v);
            }
            out
        })
        .collect();

    let n = ranges.len();
    let mut flows = EpochFlows {
        step_a: Vec::with_capacity(len.saturating_sub(1)),
        step_b: Vec::with_capacity(len.saturating_sub(1)),
        value: Vec::with_capacity(len),
        bucket_a: vec![0.0; n],
        bucket_b: vec![0.0; n],
        first: ReservePair::default(),
        last: ReservePair::default(),
    };
    for chunk in chunks {
        flows.step_a.extend(chunk.step_a);
        flows.step_b.extend(chunk.step_b);
        flows.value.extend(chunk.value);
        for (k, (i, _, _)) in active.iter().enumerate() {
            flows.bucket_a[*i] += chunk.bucket_a[k];
            flows.bucket_b[*i] += chunk.bucket_b[k];
        }
    }
    let aggregate = |p: f64| {
        let sp = p.sqrt();
        active
            .iter()
            .fold(ReservePair::default(), |acc, (_, l, r)| acc + r.state_at(*l, p, sp))
    };
    flows.first = aggregate(prices[0]);
    flows.last = aggregate(prices[len - 1]);
    flows
}

/// Where the gas token's price comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GasTokenPrice {
    /// Token A is the gas token: use the pool price at the event.
    TokenA,
    /// Fixed gas-token price in token B.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasParams {
    pub mint_gas: f64,
    pub burn_gas: f64,
    pub gas_price_gwei: f64,
    pub gas_token_price: GasTokenPrice,
}

impl Default for GasParams {
    fn default() -> Self {
        Self {
            mint_gas: 430_000.0,
            burn_gas: 215_000.0,
            gas_price_gwei: 100.0,
            gas_token_price: GasTokenPrice::TokenA,
        }
    }
}

impl GasParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let token_ok = match self.gas_token_price {
            GasTokenPrice::TokenA => true,
            GasTokenPrice::Fixed(p) => ok(p),
        };
        if ok(self.mint_gas) && ok(self.burn_gas) && ok(self.gas_price_gwei) && token_ok {
            Ok(())
        } else {
            Err(ConfigError::Gas.into())
        }
    }

    /// Token-B cost of `units` of gas with the pool at `pool_price`.
    pub fn cost(&self, units: f64, pool_price: f64) -> f64 {
        let token_price = match self.gas_token_price {
            GasTokenPrice::TokenA => pool_price,
            GasTokenPrice::Fixed(p) => p,
        };
        units * self.gas_price_gwei * 1e-9 * token_price
    }
}

/// Gas spent on mints and burns, split by when it happened.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GasBreakdown {
    pub initial_mints: usize,
    pub transition_mints: usize,
    pub transition_burns: usize,
    pub final_burns: usize,
    pub initial_cost_b: f64,
    pub transition_cost_b: f64,
    pub final_cost_b: f64,
    pub total_cost_b: f64,
}

/// Burns and mints needed to move from one allocation to the next.
pub fn transition_events(old: &EpochAllocation, new: &EpochAllocation) -> (usize, usize) {
    let (mut burns, mut mints) = (0, 0);
    for (o, n) in old.liquidity.iter().zip(&new.liquidity) {
        let (o, n) = (o.get(), n.get());
        if o > 0.0 && n > 0.0 && (o - n).abs() <= UNCHANGED_LIQUIDITY_RTOL * o.max(n) {
            continue;
        }
        burns += usize::from(o > 0.0);
        mints += usize::from(n > 0.0);
    }
    (burns, mints)
}

/// Gas for the initial deployment, every epoch transition, and the final withdrawal.
pub fn gas_cost(
    plan: &EpochPlan,
    allocations: &[EpochAllocation],
    params: &GasParams,
    prices: &[f64],
) -> Result<GasBreakdown> {
    params.validate()?;
    check_plan(plan, allocations, prices)?;
    let price_at = |i: usize| {
        prices
            .get(i)
            .copied()
            .ok_or_else(|| Error::from(DataError::Mismatch(format!("no price at index {i}"))))
    };
    let mut g = GasBreakdown::default();
    let (Some(first_epoch), Some(last_epoch)) = (plan.epochs.first(), plan.epochs.last()) else {
        return Ok(g);
    };

    g.initial_mints = allocations[0].active_set().len();
    g.initial_cost_b = params.cost(g.initial_mints as f64 * params.mint_gas, price_at(first_epoch.start)?);

    for (k, epoch) in plan.epochs.iter().enumerate().skip(1) {
        let (burns, mints) = transition_events(&allocations[k - 1], &allocations[k]);
        let p = price_at(epoch.start)?;
        g.transition_burns += burns;
        g.transition_mints += mints;
        g.transition_cost_b +=
            params.cost(burns as f64 * params.burn_gas + mints as f64 * params.mint_gas, p);
    }

    g.final_burns = allocations[allocations.len() - 1].active_set().len();
    g.final_cost_b = params.cost(g.final_burns as f64 * params.burn_gas, price_at(last_epoch.end)?);
    g.total_cost_b = g.initial_cost_b + g.transition_cost_b + g.final_cost_b;
    Ok(g)
}

/// Token-B value over time of holding `initial_split` untouched.
pub fn buy_and_hold(prices: &[f64], initial_split: ReservePair) -> Vec<f64> {
    prices.iter().map(|p| initial_split.value_at(*p)).collect()
}

/// Fees attributed to one calendar month (UTC) of the price timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthFees {
    pub month: String,
    pub fee_converted_b: f64,
    pub volume_converted_b: f64,
}

/// Liquidity and flows of one active bucket in one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStateSummary {
    pub epoch: usize,
    pub bucket: usize,
    pub lower: f64,
    pub upper: f64,
    pub liquidity: f64,
    pub x_start: f64,
    pub y_start: f64,
    pub x_end: f64,
    pub y_end: f64,
    pub inflow_a: f64,
    pub inflow_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub start: usize,
    pub end: usize,
    pub benchmark: usize,
    pub active_buckets: usize,
    pub deployed_capital: f64,
    /// Position value at the epoch's last price.
    pub exit_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub capital: f64,
    pub epochs: usize,
    pub fees_total_b: f64,
    pub volume_total_b: f64,
    pub gas_cost_b: f64,
    /// `lp_value[M] / lp_value[0] - 1`.
    pub profit_rate: f64,
    /// `bh_value[M] / bh_value[0] - 1`.
    pub bh_profit_rate: f64,
    /// Final LP value plus fees not already in it, minus gas, relative to `lp_value[0]`.
    pub net_profit_rate: f64,
    /// Multiplier applied to reported volumes and fees by the volume cap (1 if none).
    pub volume_scale: f64,
    pub initial_split: ReservePair,
    pub gas: GasBreakdown,
    pub fee_ledger: FeeLedger,
    pub epoch_summaries: Vec<EpochSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monthly: Option<Vec<MonthFees>>,
    pub bucket_states: Vec<BucketStateSummary>,
    pub prices: Vec<f64>,
    pub lp_value: Vec<f64>,
    pub bh_value: Vec<f64>,
}

fn epoch_weights(
    config: &RunConfig,
    benchmark: Bucket,
    rng: &mut ChaCha8Rng,
) -> Result<AllocationWeights> {
    let partition = &config.partition;
    // without resets the window is the whole partition
    let tau = config.tau.unwrap_or(partition.len());
    match &config.strategy {
        Strategy::Uniform => uniform_tau_weights(partition, benchmark, tau),
        Strategy::Random { .. } => random_weights(partition, benchmark, tau, rng),
        Strategy::Custom {
            weights,
            anchor: WeightAnchor::Absolute,
        } => AllocationWeights::from_raw(weights.clone()),
        Strategy::Custom {
            weights,
            anchor: WeightAnchor::Window,
        } => {
            let tau = config
                .tau
                .ok_or_else(|| ConfigError::TauRequired("custom window".into()))?;
            window_weights(partition, benchmark, tau, weights)
        }
        Strategy::Normal(params) => normal_profile_weights(partition, params),
    }
}

fn month_key(ts: i64) -> Option<String> {
    chrono::DateTime::from_timestamp(ts, 0).map(|d| d.format("%Y-%m").to_string())
}

/// Replay `series` against the allocation described by `config`.
pub fn run_backtest(config: &RunConfig, series: &PriceSeries) -> Result<BacktestReport> {
    config.validate()?;
    let prices = series.prices();
    if prices.len() < 2 {
        return Err(DataError::TooShort {
            need: 2,
            found: prices.len(),
        }
        .into());
    }
    let partition = &config.partition;
    let ranges = partition.ranges();
    let plan = match config.tau {
        Some(tau) => segment_epochs(partition, prices, tau, config.price_mode)?,
        None => EpochPlan::single(partition, prices, config.price_mode)?,
    };

    let seed = match config.strategy {
        Strategy::Random { seed } => seed,
        _ => 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let m = prices.len();
    let mut lp_value = vec![0.0; m];
    let mut step_a = Vec::with_capacity(m - 1);
    let mut step_b = Vec::with_capacity(m - 1);
    let mut step_final_price = Vec::with_capacity(m - 1);
    let mut allocations = Vec::with_capacity(plan.epochs.len());
    let mut fee_epochs = Vec::with_capacity(plan.epochs.len());
    let mut summaries: Vec<EpochSummary> = Vec::with_capacity(plan.epochs.len());
    let mut bucket_states = Vec::new();
    let mut initial_split = ReservePair::default();
    let mut capital = config.capital;
    let mut pending_fees = 0.0;

    for (k, epoch) in plan.epochs.iter().enumerate() {
        if let Some(prev) = summaries.last() {
            capital = match config.reinvestment {
                Reinvestment::Reinvest => prev.exit_value + pending_fees,
                Reinvestment::Exclude => prev.exit_value,
                Reinvestment::FixAtLevel(level) => level,
            };
            pending_fees = 0.0;
        }
        let weights = epoch_weights(config, epoch.benchmark, &mut rng)?;
        let slice = &prices[epoch.start..=epoch.end];
        let alloc = allocate_epoch(&weights, capital, slice[0], partition)?;
        let flows = epoch_flows(&ranges, &alloc, slice);
        if k == 0 {
            initial_split = flows.first;
        }

        lp_value[epoch.start..=epoch.end].copy_from_slice(&flows.value);
        let final_price = slice[slice.len() - 1];
        let (mut inflow_a, mut inflow_b) = (0.0, 0.0);
        for (a, b) in flows.step_a.iter().zip(&flows.step_b) {
            inflow_a += a;
            inflow_b += b;
        }
        let fees = EpochFees::new(
            k + 1,
            epoch.start,
            epoch.end,
            final_price,
            inflow_a,
            inflow_b,
            config.fee_rate,
        );
        pending_fees += fees.fee_converted_b;
        step_a.extend_from_slice(&flows.step_a);
        step_b.extend_from_slice(&flows.step_b);
        step_final_price.extend(std::iter::repeat_n(final_price, flows.step_a.len()));

        for b in alloc.active_set() {
            let i = b.index();
            let range = &ranges[i];
            let l = alloc.liquidity[i];
            let s0 = liquidity_state(l, slice[0], range)?;
            let s1 = liquidity_state(l, final_price, range)?;
            bucket_states.push(BucketStateSummary {
                epoch: k + 1,
                bucket: b.0,
                lower: range.lower(),
                upper: range.upper(),
                liquidity: l.get(),
                x_start: s0.x,
                y_start: s0.y,
                x_end: s1.x,
                y_end: s1.y,
                inflow_a: flows.bucket_a[i],
                inflow_b: flows.bucket_b[i],
            });
        }
        summaries.push(EpochSummary {
            epoch: k + 1,
            start: epoch.start,
            end: epoch.end,
            benchmark: epoch.benchmark.0,
            active_buckets: alloc.active_set().len(),
            deployed_capital: capital,
            exit_value: flows.last.value_at(final_price),
        });
        fee_epochs.push(fees);
        allocations.push(alloc);
    }

    // boundary indices already carry the redeployed position; under
    // reinvestment the last epoch's fees land on the final point
    if config.reinvestment == Reinvestment::Reinvest {
        lp_value[m - 1] += pending_fees;
    }

    let raw_ledger = FeeLedger::from_epochs(config.fee_rate, fee_epochs);
    let volume_scale = match config.volume_cap {
        Some(cap) if raw_ledger.totals.volume_converted_b > cap => {
            cap / raw_ledger.totals.volume_converted_b
        }
        _ => 1.0,
    };
    let fee_ledger = if volume_scale < 1.0 {
        raw_ledger.scaled(volume_scale)
    } else {
        raw_ledger
    };

    let gas = gas_cost(&plan, &allocations, &config.gas, prices)?;
    let bh_value = buy_and_hold(prices, initial_split);

    let monthly = series.timestamps().map(|ts| {
        let mut months: Vec<MonthFees> = Vec::new();
        for j in 0..step_a.len() {
            let key = month_key(ts[j + 1]).unwrap_or_else(|| "invalid".into());
            let fp = step_final_price[j];
            let vol = (step_b[j] + step_a[j] * fp) * volume_scale;
            let fee = config.fee_rate * (step_b[j] + step_a[j] * fp) * volume_scale;
            match months.last_mut() {
                Some(last) if last.month == key => {
                    last.fee_converted_b += fee;
                    last.volume_converted_b += vol;
                }
                _ => months.push(MonthFees {
                    month: key,
                    fee_converted_b: fee,
                    volume_converted_b: vol,
                }),
            }
        }
        months
    });

    let lp0 = lp_value[0];
    let lp_end = lp_value[m - 1];
    let fees_total_b = fee_ledger.totals.fee_converted_b;
    // under reinvestment the trajectory already holds every fee
    let fees_outside = match config.reinvestment {
        Reinvestment::Reinvest => 0.0,
        _ => fees_total_b,
    };
    let net_profit_rate = (lp_end + fees_outside - gas.total_cost_b) / lp0 - 1.0;

    Ok(BacktestReport {
        capital: config.capital,
        epochs: plan.epochs.len(),
        fees_total_b,
        volume_total_b: fee_ledger.totals.volume_converted_b,
        gas_cost_b: gas.total_cost_b,
        profit_rate: lp_end / lp0 - 1.0,
        bh_profit_rate: bh_value[m - 1] / bh_value[0] - 1.0,
        net_profit_rate,
        volume_scale,
        initial_split,
        gas,
        fee_ledger,
        epoch_summaries: summaries,
        monthly,
        bucket_states,
        prices: prices.to_vec(),
        lp_value,
        bh_value,
    })
}
