//! Fit the whole-pool normal liquidity profile to an observed fee total.
//!
//! The usual workflow fixes `mu`, sweeps the variance over a grid, and takes
//! the first grid interval where the model fee crosses the target, refined by
//! bisection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::ProfileParams;
use crate::engine::run_backtest;
use crate::error::{Error, Result};
use crate::io::config::{RunConfig, Strategy};
use crate::io::PriceSeries;

/// Relative fee mismatch at which bisection stops.
pub const FEE_RTOL: f64 = 1e-3;
pub const MAX_BISECTIONS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeCurve {
    pub mu: f64,
    pub bound: f64,
    pub variance_grid: Vec<f64>,
    pub fees: Vec<f64>,
}

impl FeeCurve {
    pub fn min(&self) -> f64 {
        self.fees.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.fees.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub mu: f64,
    pub variance: f64,
    pub bound: f64,
    pub model_fee: f64,
    pub target_fee: f64,
    pub relative_error: f64,
    pub bisections: usize,
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Domain("variance grid is empty".into()));
    }
    if grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain("variance grid values must be finite and > 0".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("variance grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Whole-pool configuration: one epoch, normal profile, capital = TVL.
fn profile_config(base: &RunConfig, params: ProfileParams) -> RunConfig {
    base.clone()
        .with_tau(None)
        .with_strategy(Strategy::Normal(params))
}

/// Model fee total (token B, gas excluded) for one profile.
pub fn profile_fee(base: &RunConfig, series: &PriceSeries, params: ProfileParams) -> Result<f64> {
    params.validate()?;
    Ok(run_backtest(&profile_config(base, params), series)?.fees_total_b)
}

pub fn fee_curve(
    base: &RunConfig,
    series: &PriceSeries,
    mu: f64,
    bound: f64,
    variance_grid: &[f64],
) -> Result<FeeCurve> {
    check_grid(variance_grid)?;
    ProfileParams::new(mu, variance_grid[0], bound)?;
    let fees = variance_grid
        .par_iter()
        .map(|&variance| profile_fee(base, series, ProfileParams { mu, variance, bound }))
        .collect::<Result<Vec<f64>>>()?;
    Ok(FeeCurve {
        mu,
        bound,
        variance_grid: variance_grid.to_vec(),
        fees,
    })
}

fn result(curve: &FeeCurve, variance: f64, model_fee: f64, target_fee: f64, bisections: usize) -> CalibrationResult {
    CalibrationResult {
        mu: curve.mu,
        variance,
        bound: curve.bound,
        model_fee,
        target_fee,
        relative_error: (model_fee - target_fee).abs() / target_fee,
        bisections,
    }
}

/// Refine the first crossing of `curve` with `target_fee`.
pub fn calibrate_on_curve(
    base: &RunConfig,
    series: &PriceSeries,
    curve: &FeeCurve,
    target_fee: f64,
) -> Result<CalibrationResult> {
    if !(target_fee.is_finite() && target_fee > 0.0) {
        return Err(Error::Domain(format!("target fee must be > 0, got {target_fee}")));
    }
    let unreachable = || Error::Unreachable {
        target: target_fee,
        curve_min: curve.min(),
        curve_max: curve.max(),
    };
    let grid = &curve.variance_grid;
    let gap: Vec<f64> = curve.fees.iter().map(|f| f - target_fee).collect();

    let mut bracket = None;
    for j in 0..grid.len() {
        if gap[j] == 0.0 {
            return Ok(result(curve, grid[j], curve.fees[j], target_fee, 0));
        }
        if j + 1 < grid.len() && (gap[j] < 0.0) != (gap[j + 1] < 0.0) {
            bracket = Some(j);
            break;
        }
    }
    let j = bracket.ok_or_else(unreachable)?;

    let (mut lo, mut hi) = (grid[j], grid[j + 1]);
    let lo_below = gap[j] < 0.0;
    let mut best = if gap[j].abs() <= gap[j + 1].abs() {
        result(curve, lo, curve.fees[j], target_fee, 0)
    } else {
        result(curve, hi, curve.fees[j + 1], target_fee, 0)
    };
    if best.relative_error < FEE_RTOL {
        return Ok(best);
    }
    for k in 1..=MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let fee = profile_fee(
            base,
            series,
            ProfileParams {
                mu: curve.mu,
                variance: mid,
                bound: curve.bound,
            },
        )?;
        let r = result(curve, mid, fee, target_fee, k);
        let done = r.relative_error < FEE_RTOL;
        if r.relative_error < best.relative_error {
            best = r;
        }
        if done {
            break;
        }
        best.bisections = k;
        if (fee < target_fee) == lo_below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// Fix `mu`, sweep `grid`, and return the refined first crossing.
pub fn calibrate_variance(
    base: &RunConfig,
    series: &PriceSeries,
    mu: f64,
    bound: f64,
    target_fee: f64,
    grid: &[f64],
) -> Result<CalibrationResult> {
    let curve = fee_curve(base, series, mu, bound, grid)?;
    calibrate_on_curve(base, series, &curve, target_fee)
}

/// Coarse outer search over `mu`: calibrate the variance for each candidate
/// and keep the smallest fee error (earliest candidate on ties).
pub fn calibrate_mu_variance(
    base: &RunConfig,
    series: &PriceSeries,
    mu_grid: &[f64],
    bound: f64,
    target_fee: f64,
    grid: &[f64],
) -> Result<CalibrationResult> {
    let mut best: Option<CalibrationResult> = None;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &mu in mu_grid {
        let curve = fee_curve(base, series, mu, bound, grid)?;
        lo = lo.min(curve.min());
        hi = hi.max(curve.max());
        match calibrate_on_curve(base, series, &curve, target_fee) {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.relative_error < b.relative_error) {
                    best = Some(r);
                }
            }
            Err(Error::Unreachable { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or(Error::Unreachable {
        target: target_fee,
        curve_min: lo,
        curve_max: hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bucketing::BucketPartition;

    fn base(capital: f64) -> RunConfig {
        RunConfig::new(BucketPartition::new(1000.0, 4000.0, 60).unwrap(), capital, 0.003)
    }

    /// Oscillation around `mid` with the given amplitude.
    fn series(mid: f64, amp: f64, n: usize) -> PriceSeries {
        PriceSeries::from_prices((0..n).map(|i| mid + amp * (i as f64 * 0.37).sin()).collect()).unwrap()
    }

    #[test]
    fn one_point_curve_is_a_backtest() {
        let s = series(2600.0, 300.0, 400);
        let curve = fee_curve(&base(1e6), &s, 0.5, 3.0, &[0.3]).unwrap();
        let direct = run_backtest(
            &base(1e6).with_strategy(Strategy::Normal(ProfileParams::new(0.5, 0.3, 3.0).unwrap())),
            &s,
        )
        .unwrap();
        assert_eq!(curve.fees, vec![direct.fees_total_b]);
    }

    #[test]
    fn fees_scale_with_tvl() {
        let s = series(2600.0, 300.0, 400);
        let grid = linear_grid(0.1, 2.0, 7);
        let one = fee_curve(&base(1e6), &s, 0.2, 3.0, &grid).unwrap();
        let two = fee_curve(&base(2e6), &s, 0.2, 3.0, &grid).unwrap();
        for (a, b) in one.fees.iter().zip(&two.fees) {
            assert!((b / a - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn refining_the_grid_keeps_existing_points() {
        let s = series(2600.0, 300.0, 300);
        let coarse = linear_grid(0.2, 1.8, 5);
        let mut fine = linear_grid(0.2, 1.8, 9);
        fine.retain(|v| !coarse.contains(v));
        fine.extend(&coarse);
        fine.sort_by(f64::total_cmp);
        let a = fee_curve(&base(1e6), &s, 0.0, 3.0, &coarse).unwrap();
        let b = fee_curve(&base(1e6), &s, 0.0, 3.0, &fine).unwrap();
        for (v, f) in a.variance_grid.iter().zip(&a.fees) {
            let j = b.variance_grid.iter().position(|x| x == v).unwrap();
            assert_eq!(b.fees[j], *f);
        }
    }

    #[test]
    fn wide_profile_approaches_flat_pool() {
        let s = series(2600.0, 300.0, 300);
        let flat = run_backtest(&base(1e6), &s).unwrap().fees_total_b;
        let wide = profile_fee(&base(1e6), &s, ProfileParams::new(0.0, 1e8, 3.0).unwrap()).unwrap();
        assert!((wide - flat).abs() / flat < 1e-6);
        let curve = fee_curve(&base(1e6), &s, 0.0, 3.0, &[0.05, 1.0, 100.0, 1e8]).unwrap();
        assert_eq!(curve.min(), *curve.fees.last().unwrap());
    }

    #[test]
    fn fees_fall_with_variance_near_the_peak() {
        // path hugs the partition centre, which is where mu = 0 puts the peak
        let s = series(2500.0, 40.0, 500);
        let curve = fee_curve(&base(1e6), &s, 0.0, 3.0, &linear_grid(0.05, 3.0, 30)).unwrap();
        for w in curve.fees.windows(2) {
            assert!(w[1] <= w[0], "{w:?}");
        }
    }

    #[test]
    fn recovers_its_own_fee() {
        let s = series(2700.0, 500.0, 800);
        let target = profile_fee(&base(1e6), &s, ProfileParams::new(0.9, 0.4, 3.0).unwrap()).unwrap();
        let grid = linear_grid(0.02, 3.0, 60);
        let r = calibrate_variance(&base(1e6), &s, 0.9, 3.0, target, &grid).unwrap();
        assert!(r.relative_error < FEE_RTOL);
        assert!((r.model_fee - target).abs() / target < 1e-3);
        assert_eq!(r.relative_error, (r.model_fee - r.target_fee).abs() / r.target_fee);
    }

    #[test]
    fn unreachable_target_reports_the_curve_span() {
        let s = series(2600.0, 300.0, 200);
        let grid = linear_grid(0.1, 2.0, 10);
        let curve = fee_curve(&base(1e6), &s, 0.0, 3.0, &grid).unwrap();
        let err = calibrate_on_curve(&base(1e6), &s, &curve, curve.max() * 10.0).unwrap_err();
        match err {
            Error::Unreachable { curve_min, curve_max, .. } => {
                assert_eq!((curve_min, curve_max), (curve.min(), curve.max()));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            calibrate_on_curve(&base(1e6), &s, &curve, curve.max() * 10.0).unwrap_err().exit_code(),
            4
        );
        assert!(calibrate_on_curve(&base(1e6), &s, &curve, -1.0).is_err());
    }

    #[test]
    fn bad_grids_are_rejected() {
        let s = series(2600.0, 300.0, 50);
        for g in [vec![], vec![0.0, 1.0], vec![1.0, 0.5], vec![0.5, f64::NAN]] {
            assert!(fee_curve(&base(1e6), &s, 0.0, 3.0, &g).is_err(), "{g:?}");
        }
    }

    #[test]
    fn outer_mu_search_finds_a_fit() {
        let s = series(2700.0, 500.0, 400);
        let target = profile_fee(&base(1e6), &s, ProfileParams::new(0.5, 0.6, 3.0).unwrap()).unwrap();
        let r = calibrate_mu_variance(
            &base(1e6),
            &s,
            &linear_grid(-1.0, 1.0, 5),
            3.0,
            target,
            &linear_grid(0.05, 2.0, 40),
        )
        .unwrap();
        assert!(r.relative_error < FEE_RTOL);
    }

    #[test]
    fn grid_helper() {
        assert_eq!(linear_grid(1.0, 2.0, 3), vec![1.0, 1.5, 2.0]);
        assert_eq!(linear_grid(1.0, 2.0, 1), vec![1.0]);
        assert!(linear_grid(1.0, 2.0, 0).is_empty());
    }
}
