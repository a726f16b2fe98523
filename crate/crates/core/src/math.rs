//! Closed-form position mathematics for a single concentrated-liquidity range.
//!
//! Prices are quoted as token B per token A. All quantities are `f64`; there is
//! no tick or Q-number arithmetic here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A liquidity range `[p_a, p_b]` with cached square roots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceRange {
    p_a: f64,
    p_b: f64,
    #[serde(skip)]
    sqrt_a: f64,
    #[serde(skip)]
    sqrt_b: f64,
    #[serde(skip)]
    inv_sqrt_a: f64,
    #[serde(skip)]
    inv_sqrt_b: f64,
}

impl PriceRange {
    pub fn new(p_a: f64, p_b: f64) -> Result<Self> {
        if !(p_a.is_finite() && p_b.is_finite()) || p_a <= 0.0 || p_b <= p_a {
            return Err(Error::Domain(format!(
                "invalid price range [{p_a}, {p_b}]: need 0 < p_a < p_b"
            )));
        }
        let sqrt_a = p_a.sqrt();
        let sqrt_b = p_b.sqrt();
        if sqrt_a >= sqrt_b {
            return Err(Error::Domain(format!(
                "price range [{p_a}, {p_b}] collapses under sqrt"
            )));
        }
        Ok(Self {
            p_a,
            p_b,
            sqrt_a,
            sqrt_b,
            inv_sqrt_a: 1.0 / sqrt_a,
            inv_sqrt_b: 1.0 / sqrt_b,
        })
    }

    pub fn lower(&self) -> f64 {
        self.p_a
    }

    pub fn upper(&self) -> f64 {
        self.p_b
    }

    /// `1/sqrt(p_a) - 1/sqrt(p_b)`: token-A reserves per unit of liquidity
    /// when the price sits at or below the range.
    pub fn delta_x(&self) -> f64 {
        self.inv_sqrt_a - self.inv_sqrt_b
    }

    /// `sqrt(p_b) - sqrt(p_a)`: token-B reserves per unit of liquidity
    /// when the price sits at or above the range.
    pub fn delta_y(&self) -> f64 {
        self.sqrt_b - self.sqrt_a
    }

    /// Reserves for liquidity `l` at price `p`, given `sqrt_p = p.sqrt()`.
    ///
    /// Hot path for the engine; callers iterating over many ranges at the same
    /// price compute the square root once.
    #[inline]
    pub(crate) fn state_at(&self, l: f64, p: f64, sqrt_p: f64) -> ReservePair {
        if p <= self.p_a {
            ReservePair {
                x: l * (self.inv_sqrt_a - self.inv_sqrt_b),
                y: 0.0,
            }
        } else if p >= self.p_b {
            ReservePair {
                x: 0.0,
                y: l * (self.sqrt_b - self.sqrt_a),
            }
        } else {
            ReservePair {
                x: l * (1.0 / sqrt_p - self.inv_sqrt_b),
                y: l * (sqrt_p - self.sqrt_a),
            }
        }
    }
}

impl<'de> Deserialize<'de> for PriceRange {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            p_a: f64,
            p_b: f64,
        }
        let raw = Raw::deserialize(d)?;
        PriceRange::new(raw.p_a, raw.p_b).map_err(serde::de::Error::custom)
    }
}

/// Real token reserves held by a position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReservePair {
    /// Token A amount.
    pub x: f64,
    /// Token B amount.
    pub y: f64,
}

impl ReservePair {
    /// Value in token B at `price`.
    pub fn value_at(&self, price: f64) -> f64 {
        self.y + self.x * price
    }
}

impl std::ops::Add for ReservePair {
    type Output = ReservePair;

    fn add(self, rhs: Self) -> Self {
        ReservePair {
            x: self.x + rhs.x,
            y: self.y + rhs.y,
        }
    }
}

/// Position liquidity, in units of sqrt(A*B). Fixed once a position is opened.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Liquidity(f64);

impl Liquidity {
    pub const ZERO: Liquidity = Liquidity(0.0);

    pub fn new(l: f64) -> Result<Self> {
        if !l.is_finite() || l < 0.0 {
            return Err(Error::Domain(format!("liquidity must be finite and >= 0, got {l}")));
        }
        Ok(Liquidity(l))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }
}

fn check_amount(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

fn check_price(p: f64) -> Result<()> {
    if !p.is_finite() || p <= 0.0 {
        return Err(Error::Domain(format!("price must be finite and > 0, got {p}")));
    }
    Ok(())
}

/// Liquidity of a position funded entirely in token A (price at or below the range).
pub fn liquidity_from_x(x: f64, range: &PriceRange) -> Result<Liquidity> {
    check_amount("token A amount", x)?;
    Liquidity::new(x * range.sqrt_a * range.sqrt_b / (range.sqrt_b - range.sqrt_a))
}

/// Liquidity of a position funded entirely in token B (price at or above the range).
pub fn liquidity_from_y(y: f64, range: &PriceRange) -> Result<Liquidity> {
    check_amount("token B amount", y)?;
    Liquidity::new(y / (range.sqrt_b - range.sqrt_a))
}

/// Split capital `w` (token B terms) into reserves at price `p` so that both
/// halves of the range contribute equal liquidity, and return that liquidity.
///
/// Prices on or outside the range edges route to the single-token formulas.
pub fn split_capital(w: f64, p: f64, range: &PriceRange) -> Result<(ReservePair, Liquidity)> {
    if !w.is_finite() || w <= 0.0 {
        return Err(Error::Domain(format!("capital must be finite and > 0, got {w}")));
    }
    check_price(p)?;

    if p <= range.p_a {
        let x = w / p;
        return Ok((ReservePair { x, y: 0.0 }, liquidity_from_x(x, range)?));
    }
    if p >= range.p_b {
        return Ok((ReservePair { x: 0.0, y: w }, liquidity_from_y(w, range)?));
    }

    let sqrt_p = p.sqrt();
    // Liquidity per unit of x on (p, p_b) and per unit of y on (p_a, p).
    let x_l = sqrt_p * range.sqrt_b / (range.sqrt_b - sqrt_p);
    let y_l = 1.0 / (sqrt_p - range.sqrt_a);
    let x = w * y_l / (x_l + p * y_l);
    let y = w - x * p;
    let l = Liquidity::new(x * x_l)?;
    Ok((ReservePair { x, y: y.max(0.0) }, l))
}

/// Reserves held by liquidity `l` in `range` when the pool price is `p`.
pub fn liquidity_state(l: Liquidity, p: f64, range: &PriceRange) -> Result<ReservePair> {
    check_price(p)?;
    Ok(range.state_at(l.0, p, p.sqrt()))
}

/// Token-B value of a position at pool price `p`, marked at `valuation_price`.
pub fn position_value(
    l: Liquidity,
    p: f64,
    range: &PriceRange,
    valuation_price: f64,
) -> Result<f64> {
    check_price(valuation_price)?;
    Ok(liquidity_state(l, p, range)?.value_at(valuation_price))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    }

    fn r(a: f64, b: f64) -> PriceRange {
        PriceRange::new(a, b).unwrap()
    }

    #[test]
    fn range_rejects_degenerate() {
        assert!(PriceRange::new(0.0, 1.0).is_err());
        assert!(PriceRange::new(2.0, 2.0).is_err());
        assert!(PriceRange::new(3.0, 2.0).is_err());
        assert!(PriceRange::new(1.0, f64::INFINITY).is_err());
        assert!(PriceRange::new(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn liquidity_from_x_examples() {
        let rg = r(1.0, 4.0);
        assert!(rel(liquidity_from_x(1.0, &rg).unwrap().get(), 2.0) < 1e-12);
        assert_eq!(liquidity_from_x(0.0, &rg).unwrap().get(), 0.0);
        assert!(rel(liquidity_from_x(2.0, &rg).unwrap().get(), 4.0) < 1e-12);
        assert!(liquidity_from_x(-1.0, &rg).is_err());
        assert!(liquidity_from_x(f64::NAN, &rg).is_err());
    }

    #[test]
    fn liquidity_from_x_satisfies_invariant_at_lower_edge() {
        // (x + L/sqrt(pb)) * (0 + L*sqrt(pa)) = L^2
        let rg = r(1.7, 9.3);
        let x = 3.25;
        let l = liquidity_from_x(x, &rg).unwrap().get();
        let lhs = (x + l / rg.upper().sqrt()) * (l * rg.lower().sqrt());
        assert!(rel(lhs, l * l) < 1e-12);
    }

    #[test]
    fn liquidity_from_y_examples() {
        assert!(rel(liquidity_from_y(3.0, &r(1.0, 4.0)).unwrap().get(), 3.0) < 1e-12);
        assert_eq!(liquidity_from_y(0.0, &r(1.0, 4.0)).unwrap().get(), 0.0);
        assert!(rel(liquidity_from_y(5.0, &r(4.0, 9.0)).unwrap().get(), 5.0) < 1e-12);
        assert!(liquidity_from_y(-0.5, &r(4.0, 9.0)).is_err());
    }

    #[test]
    fn split_capital_in_range_example() {
        let (res, l) = split_capital(1.0, 2.25, &r(1.0, 4.0)).unwrap();
        assert!(rel(res.x, 2.0 / 10.5) < 1e-12);
        assert!(rel(res.y, 6.0 / 10.5) < 1e-12);
        assert!(rel(l.get(), 12.0 / 10.5) < 1e-12);
        // both halves of the range carry the same liquidity
        assert!(rel(res.x * 6.0, res.y * 2.0) < 1e-12);
        assert!(rel(res.y + res.x * 2.25, 1.0) < 1e-12);
    }

    #[test]
    fn split_capital_boundaries() {
        let rg = r(1.0, 4.0);
        let (res, l) = split_capital(100.0, 1.0, &rg).unwrap();
        assert_eq!(res, ReservePair { x: 100.0, y: 0.0 });
        assert_eq!(l, liquidity_from_x(100.0, &rg).unwrap());

        let (res, l) = split_capital(100.0, 4.0, &rg).unwrap();
        assert_eq!(res, ReservePair { x: 0.0, y: 100.0 });
        assert_eq!(l, liquidity_from_y(100.0, &rg).unwrap());
    }

    #[test]
    fn split_capital_rejects_bad_inputs() {
        let rg = r(1.0, 4.0);
        assert!(split_capital(0.0, 2.0, &rg).is_err());
        assert!(split_capital(-1.0, 2.0, &rg).is_err());
        assert!(split_capital(1.0, 0.0, &rg).is_err());
        assert!(split_capital(1.0, -2.0, &rg).is_err());
    }

    #[test]
    fn liquidity_state_branches() {
        let rg = r(1.0, 4.0);
        let l = Liquidity::new(2.0).unwrap();
        let below = liquidity_state(l, 0.25, &rg).unwrap();
        assert!(rel(below.x, 1.0) < 1e-12 && below.y == 0.0);
        let inside = liquidity_state(l, 2.25, &rg).unwrap();
        // 2·(1/1.5 − 1/2) = 1/3
        assert!(rel(inside.x, 1.0 / 3.0) < 1e-12);
        assert!(rel(inside.y, 1.0) < 1e-12);
        let above = liquidity_state(l, 9.0, &rg).unwrap();
        assert!(above.x == 0.0 && rel(above.y, 2.0) < 1e-12);
        assert!(liquidity_state(l, f64::NAN, &rg).is_err());
        assert!(liquidity_state(l, 0.0, &rg).is_err());
    }

    #[test]
    fn position_value_examples() {
        let rg = r(1.0, 4.0);
        let l = Liquidity::new(2.0).unwrap();
        assert!(rel(position_value(l, 2.25, &rg, 2.25).unwrap(), 1.75) < 1e-12);
        assert_eq!(position_value(Liquidity::ZERO, 2.25, &rg, 2.25).unwrap(), 0.0);
        assert!(rel(position_value(l, 9.0, &rg, 9.0).unwrap(), 2.0) < 1e-12);
    }

    #[test]
    fn state_is_continuous_at_edges() {
        let rg = r(1.0, 4.0);
        let l = Liquidity::new(2.0).unwrap();
        for k in 3..=9 {
            let eps = 10f64.powi(-k);
            for edge in [1.0, 4.0] {
                let lo = liquidity_state(l, edge - eps, &rg).unwrap();
                let hi = liquidity_state(l, edge + eps, &rg).unwrap();
                assert!((lo.x - hi.x).abs() < 2.0 * eps);
                assert!((lo.y - hi.y).abs() < 2.0 * eps);
            }
        }
    }

    fn range_strategy() -> impl Strategy<Value = PriceRange> {
        (1e-3f64..1e4, 1.0001f64..50.0).prop_map(|(a, k)| PriceRange::new(a, a * k).unwrap())
    }

    proptest! {
        #[test]
        fn split_respects_invariant_and_round_trips(
            rg in range_strategy(),
            w in 1e-3f64..1e9,
            t in -0.5f64..1.5,
        ) {
            let p = rg.lower() + t * (rg.upper() - rg.lower());
            prop_assume!(p > 0.0);
            let (res, l) = split_capital(w, p, &rg).unwrap();
            let l = l.get();
            let lhs = (res.x + l / rg.upper().sqrt()) * (res.y + l * rg.lower().sqrt());
            prop_assert!(rel(lhs, l * l) < 1e-9);
            prop_assert!(rel(res.y + res.x * p, w) < 1e-12);
            let v = position_value(Liquidity::new(l).unwrap(), p, &rg, p).unwrap();
            prop_assert!(rel(v, w) < 1e-9);
        }

        #[test]
        fn homogeneity(rg in range_strategy(), x in 0.0f64..1e6, k in 1e-3f64..1e3, t in -0.5f64..1.5) {
            let lx = liquidity_from_x(x, &rg).unwrap().get();
            let lkx = liquidity_from_x(k * x, &rg).unwrap().get();
            prop_assert!((lkx - k * lx).abs() <= 1e-12 * lkx.abs().max(1e-300));
            let p = (rg.lower() + t * (rg.upper() - rg.lower())).max(1e-6);
            let s1 = liquidity_state(Liquidity::new(x).unwrap(), p, &rg).unwrap();
            let sk = liquidity_state(Liquidity::new(k * x).unwrap(), p, &rg).unwrap();
            prop_assert!((sk.x - k * s1.x).abs() <= 1e-12 * sk.x.abs() + 1e-300);
            prop_assert!((sk.y - k * s1.y).abs() <= 1e-12 * sk.y.abs() + 1e-300);
        }

        #[test]
        fn monotone_in_price(rg in range_strategy(), l in 0.0f64..1e6, t1 in -0.5f64..1.5, t2 in -0.5f64..1.5) {
            let span = rg.upper() - rg.lower();
            let p1 = (rg.lower() + t1.min(t2) * span).max(1e-6);
            let p2 = (rg.lower() + t1.max(t2) * span).max(1e-6);
            let l = Liquidity::new(l).unwrap();
            let s1 = liquidity_state(l, p1, &rg).unwrap();
            let s2 = liquidity_state(l, p2, &rg).unwrap();
            prop_assert!(s2.x <= s1.x);
            prop_assert!(s2.y >= s1.y);
        }
    }
}
