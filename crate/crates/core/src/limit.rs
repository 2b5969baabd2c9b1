//! Continuous-time limit of the q-CRR market: a Black-Scholes model whose
//! short rate grows linearly in time when `η ≠ 0`.
//!
//! The trend timescale `T_q` enters through the accumulated drift
//! `D = ση√θ·√T·T_q^{3/2} / (2(1+θ))`, which is `ση√θT²/(2(1+θ))` when
//! `T_q = T`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::ModelParams;

/// Standard normal CDF, `Φ(x) = erfc(-x/√2)/2`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

// ση√θ / (1+θ) scaled so that the rate integrates to `trend_drift` at t = T
fn trend_slope(params: &ModelParams) -> f64 {
    let scale = (params.trend_horizon / params.maturity).powf(1.5);
    params.sigma * params.eta * params.theta.sqrt() / (1.0 + params.theta) * scale
}

/// `D = ∫_0^T (r_t - ζσ²/2) dt`.
pub fn trend_drift(params: &ModelParams) -> f64 {
    params.sigma
        * params.eta
        * params.theta.sqrt()
        * params.maturity.sqrt()
        * params.trend_horizon.powf(1.5)
        / (2.0 * (1.0 + params.theta))
}

/// Instantaneous short rate `r_t = ζσ²/2 + ση√θ·t/(1+θ)` (per year).
pub fn short_rate(t: f64, params: &ModelParams) -> f64 {
    0.5 * params.effective_zeta() * params.sigma.powi(2) + trend_slope(params) * t
}

/// `∫_0^T r_t dt` in closed form.
pub fn integrated_rate(params: &ModelParams) -> f64 {
    0.5 * params.effective_zeta() * params.sigma.powi(2) * params.maturity + trend_drift(params)
}

/// Gaussian law of `log S_t` in the limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitLaw {
    pub mean_log: f64,
    pub var_log: f64,
    pub t: f64,
}

pub fn limit_log_law(t: f64, params: &ModelParams) -> Result<LimitLaw> {
    if !(t >= 0.0 && t <= params.maturity * (1.0 + 1e-12)) {
        return Err(Error::param(
            "t",
            format!("must lie in [0, {}], got {t}", params.maturity),
        ));
    }
    let sigma2 = params.sigma.powi(2);
    let mean_log = params.spot.ln() + 0.5 * trend_slope(params) * t * t
        - 0.5 * (1.0 - params.effective_zeta()) * sigma2 * t;
    Ok(LimitLaw {
        mean_log,
        var_log: sigma2 * t,
        t,
    })
}

/// The `d1`, `d2` pair of the limiting call price.
pub fn d1_d2(params: &ModelParams) -> (f64, f64) {
    let vol = params.sigma * params.maturity.sqrt();
    let d1 = ((params.spot / params.strike).ln()
        + 0.5 * (1.0 + params.effective_zeta()) * params.sigma.powi(2) * params.maturity
        + trend_drift(params))
        / vol;
    (d1, d1 - vol)
}

/// `S0·Φ(d1) - K·exp(-∫r)·Φ(d2)`.
pub fn bs_call_limit(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    if params.strike <= 0.0 {
        return Err(Error::param("k", "must be > 0 for the limit price"));
    }
    let (d1, d2) = d1_d2(params);
    Ok(
        params.spot * norm_cdf(d1)
            - params.strike * (-integrated_rate(params)).exp() * norm_cdf(d2),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1(eta: f64, theta: f64) -> ModelParams {
        ModelParams::new(100.0, 95.0, 0.2, 0.5, 100)
            .with_theta(theta)
            .with_eta(eta)
            .with_trend_horizon(1.0)
    }

    #[test]
    fn normal_kernels() {
        assert_eq!(norm_cdf(0.0), 0.5);
        // Φ(1.96), Φ(-5) reference values
        assert!((norm_cdf(1.96) - 0.975_002_104_851_780_1).abs() < 1e-15);
        assert!((norm_cdf(-5.0) - 2.866_515_718_791_939e-7).abs() < 1e-20);
        assert!((norm_cdf(-3.0) + norm_cdf(3.0) - 1.0).abs() < 1e-16);
        assert!((norm_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
    }

    #[test]
    fn short_rate_examples() {
        let p = ModelParams::new(100.0, 95.0, 0.2, 1.0, 10).with_eta(1.0);
        assert!((short_rate(0.0, &p) - 0.02).abs() < 1e-16);
        assert!((short_rate(1.0, &p) - 0.12).abs() < 1e-15);
        let flat = p.clone().with_eta(0.0);
        for t in [0.0, 0.3, 1.0] {
            assert!((short_rate(t, &flat) - 0.02).abs() < 1e-17);
        }
    }

    #[test]
    fn log_law_examples() {
        let p = ModelParams::new(100.0, 95.0, 0.2, 1.0, 10).with_eta(1.0);
        let law = limit_log_law(0.0, &p).unwrap();
        assert_eq!((law.mean_log, law.var_log), (100f64.ln(), 0.0));
        let law = limit_log_law(1.0, &p).unwrap();
        assert!((law.mean_log - (100f64.ln() + 0.05)).abs() < 1e-15);
        assert!((law.var_log - 0.04).abs() < 1e-16);
        let flat = limit_log_law(0.7, &p.clone().with_eta(0.0)).unwrap();
        assert_eq!(flat.mean_log, 100f64.ln());
        assert!(limit_log_law(1.5, &p).is_err());
    }

    #[test]
    fn table1_limit_prices() {
        assert!((bs_call_limit(&table1(0.0, 1.0)).unwrap() - 8.947041).abs() < 5e-7);
        assert!((bs_call_limit(&table1(0.0, 1.1)).unwrap() - 8.947041).abs() < 5e-7);
        assert!((bs_call_limit(&table1(1.0, 1.0)).unwrap() - 11.189701).abs() < 5e-6);
    }

    #[test]
    fn tiny_strike_gives_spot() {
        let p = table1(0.4, 1.3).with_strike(1e-12);
        assert!((bs_call_limit(&p).unwrap() - 100.0).abs() < 1e-9);
        assert!(bs_call_limit(&table1(0.0, 1.0).with_strike(0.0)).is_err());
    }

    #[test]
    fn discount_matches_integrated_short_rate() {
        let p = table1(-1.0, 1.1);
        // Simpson on the linear rate is exact
        let h = p.maturity / 2.0;
        let simpson =
            h / 3.0 * (short_rate(0.0, &p) + 4.0 * short_rate(h, &p) + short_rate(2.0 * h, &p));
        assert!((simpson - integrated_rate(&p)).abs() < 1e-16);
        let (d1, d2) = d1_d2(&p);
        assert_eq!(d2, d1 - 0.2 * 0.5f64.sqrt());
    }
}
