//! Closed-form Black-Scholes prices and Greeks.
//!
//! Greeks use the scaled operators `D1 = S d/dS` and `D2 = S^2 d^2/dS^2`,
//! which is the convention the Malliavin weights estimate.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionType {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsInputs {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub vol: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsGreeks {
    /// `S dP/dS`
    pub d1: f64,
    /// `S^2 d^2P/dS^2`
    pub d2: f64,
    /// `dP/dsigma`
    pub vega: f64,
    /// `S d^2P/dS dsigma`
    pub vanna_d1: f64,
}

/// Standard normal CDF, `erfc(-x/sqrt(2))/2`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn d1_d2(i: &BsInputs) -> (f64, f64) {
    let sd = i.vol * i.tau.sqrt();
    let d1 = ((i.spot / i.strike).ln() + (i.rate + 0.5 * i.vol * i.vol) * i.tau) / sd;
    (d1, d1 - sd)
}

pub fn bs_price(i: &BsInputs, kind: OptionType) -> f64 {
    let df = (-i.rate * i.tau).exp();
    if i.strike == 0.0 {
        return match kind {
            OptionType::Call => i.spot,
            OptionType::Put => 0.0,
        };
    }
    let (d1, d2) = d1_d2(i);
    match kind {
        OptionType::Call => i.spot * norm_cdf(d1) - i.strike * df * norm_cdf(d2),
        OptionType::Put => i.strike * df * norm_cdf(-d2) - i.spot * norm_cdf(-d1),
    }
}

pub fn bs_greeks(i: &BsInputs, kind: OptionType) -> BsGreeks {
    if i.strike == 0.0 {
        // call = S, put = 0: no curvature, no vol dependence
        let d1 = match kind {
            OptionType::Call => i.spot,
            OptionType::Put => 0.0,
        };
        return BsGreeks { d1, d2: 0.0, vega: 0.0, vanna_d1: 0.0 };
    }
    let sqrt_tau = i.tau.sqrt();
    let (d1, d2) = d1_d2(i);
    let pdf = norm_pdf(d1);
    let delta = match kind {
        OptionType::Call => norm_cdf(d1),
        OptionType::Put => -norm_cdf(-d1),
    };
    let vega = i.spot * pdf * sqrt_tau;
    BsGreeks {
        d1: i.spot * delta,
        d2: i.spot * pdf / (i.vol * sqrt_tau),
        vega,
        vanna_d1: -vega * d2 / (i.vol * sqrt_tau),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> BsInputs {
        BsInputs { spot: 100.0, strike: 100.0, rate: 0.02, vol: 0.2020, tau: 0.5 }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    // 40-digit mpmath evaluation of the closed form
    const CALL_TABLE1: f64 = 6.176511675314362163655386;
    const PUT_TABLE1: f64 = 5.181495050231167521045984;

    #[test]
    fn table1_price_matches_high_precision() {
        assert!(rel(bs_price(&table1(), OptionType::Call), CALL_TABLE1) < 1e-12);
        assert!(rel(bs_price(&table1(), OptionType::Put), PUT_TABLE1) < 1e-12);
    }

    #[test]
    fn table1_greeks_match_high_precision() {
        let g = bs_greeks(&table1(), OptionType::Call);
        assert!(rel(g.d1, 55.62342232345229774) < 1e-12);
        assert!(rel(g.d2, 276.52240115628867971) < 1e-12);
        assert!(rel(g.vega, 27.928762516785156651) < 1e-12);
        assert!(rel(g.vanna_d1, 0.2751534783782872506) < 1e-9);
    }

    #[test]
    fn zero_strike() {
        let i = BsInputs { strike: 0.0, ..table1() };
        assert_eq!(bs_price(&i, OptionType::Call), 100.0);
        assert_eq!(bs_price(&i, OptionType::Put), 0.0);
    }

    #[test]
    fn huge_vol_call_tends_to_spot() {
        // sigma sqrt(tau) = 50
        let i = BsInputs { vol: 50.0, tau: 1.0, ..table1() };
        assert!(rel(bs_price(&i, OptionType::Call), 100.0) < 1e-9);
    }

    #[test]
    fn deep_in_the_money_delta() {
        let i = BsInputs { spot: 200.0, ..table1() };
        assert!(rel(bs_greeks(&i, OptionType::Call).d1, 200.0) < 1e-6);
    }

    fn lattice() -> impl Iterator<Item = BsInputs> {
        let spots = [60.0, 90.0, 100.0, 115.0, 180.0];
        let strikes = [80.0, 100.0];
        let vols = [0.1, 0.3];
        let taus = [0.1, 0.5, 1.0, 2.0, 5.0];
        spots.into_iter().flat_map(move |spot| {
            strikes.into_iter().flat_map(move |strike| {
                vols.into_iter().flat_map(move |vol| {
                    taus.into_iter().map(move |tau| BsInputs { spot, strike, rate: 0.03, vol, tau })
                })
            })
        })
    }

    #[test]
    fn put_call_parity() {
        for i in lattice() {
            let lhs = bs_price(&i, OptionType::Call) - bs_price(&i, OptionType::Put);
            let rhs = i.spot - i.strike * (-i.rate * i.tau).exp();
            assert!((lhs - rhs).abs() <= 1e-12 * i.spot, "{i:?}");
        }
    }

    #[test]
    fn vega_gamma_identity() {
        assert_eq!(lattice().count(), 100);
        for i in lattice() {
            for kind in [OptionType::Call, OptionType::Put] {
                let g = bs_greeks(&i, kind);
                let rhs = i.vol * i.tau * g.d2;
                assert!((g.vega - rhs).abs() <= 1e-10 * g.vega.abs().max(1e-300), "{i:?}");
            }
        }
    }

    #[test]
    fn greeks_match_finite_differences() {
        // second-order Greeks are differenced from the closed-form delta,
        // which is itself checked against the price
        const H: f64 = 1e-5;
        for i in lattice() {
            for kind in [OptionType::Call, OptionType::Put] {
                let at = |s: f64, v: f64| BsInputs { spot: s, vol: v, ..i };
                let price = |s: f64, v: f64| bs_price(&at(s, v), kind);
                let delta = |s: f64, v: f64| bs_greeks(&at(s, v), kind).d1 / s;
                let (s, v) = (i.spot, i.vol);
                let g = bs_greeks(&i, kind);
                let d1 = s * (price(s * (1.0 + H), v) - price(s * (1.0 - H), v)) / (2.0 * H * s);
                let vega = (price(s, v * (1.0 + H)) - price(s, v * (1.0 - H))) / (2.0 * H * v);
                let d2 = s * s * (delta(s * (1.0 + H), v) - delta(s * (1.0 - H), v)) / (2.0 * H * s);
                let vanna = s * (delta(s, v * (1.0 + H)) - delta(s, v * (1.0 - H))) / (2.0 * H * v);
                for (name, got, fd) in [("d1", g.d1, d1), ("vega", g.vega, vega), ("d2", g.d2, d2), ("vanna", g.vanna_d1, vanna)] {
                    // near-zero Greeks are compared on the price scale
                    let scale = got.abs().max(1e-3 * s);
                    assert!((got - fd).abs() <= 1e-6 * scale, "{name} {i:?} {kind:?}: {got} vs {fd}");
                }
            }
        }
    }
}
