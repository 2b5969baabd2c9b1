//! Edgeworth-corrected normal approximation of Kemp tails and the predicted
//! convergence order of lattice call prices.
//!
//! For independent non-identical Bernoulli steps with `σ² = Σ p_k(1-p_k)`,
//!
//! ```text
//! P(Z_N >= m) ≈ Φ(-z) + (z² - 1)/(6σ) · φ(z) · (1 - (2/σ²) Σ p_k²(1-p_k))
//! z = (m - Σ p_k - 1/2) / σ
//! ```
//!
//! The bracket is the third cumulant over `σ²`, so the correction carries
//! the sign of `(z² - 1)·κ₃`, matching the upper tail of a right-skewed sum.

use serde::Serialize;

use crate::dist::{kemp_tail, KempParams};
use crate::error::{Error, Result};
use crate::lattice::{build_schedule, call_cutoff, ModelParams};
use crate::limit::{norm_cdf, norm_pdf};
use crate::qnum::{logistic_pair, KahanSum, QValue};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailApprox {
    pub z_m: f64,
    pub sigma2_n: f64,
    /// `1 - (2/σ²) Σ p_k²(1-p_k)`.
    pub skew_correction: f64,
    /// Approximate `P(Z_N >= m)`, clamped to `[0, 1]`.
    pub value: f64,
    /// Fractional position of the strike between nodes; set for market tails.
    pub eps_n: Option<f64>,
}

pub fn edgeworth_tail(n: u64, m: i64, theta: f64, q: QValue) -> Result<TailApprox> {
    if n == 0 {
        return Err(Error::param("n", "must be >= 1"));
    }
    if m < 1 || m as u64 > n {
        return Err(Error::param("m", format!("must lie in 1..={n}, got {m}")));
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::param(
            "theta",
            format!("must be finite and > 0, got {theta}"),
        ));
    }
    let log_theta = theta.ln();
    let mut mean = KahanSum::new();
    let mut var = KahanSum::new();
    let mut third = KahanSum::new();
    for k in 0..n {
        let (p, c) = logistic_pair(log_theta + k as f64 * q.ln());
        mean.add(p);
        var.add(p * c);
        third.add(p * p * c);
    }
    let sigma2 = var.value();
    if !(sigma2 > 0.0) {
        return Err(Error::param(
            "theta",
            "degenerate distribution (zero variance)",
        ));
    }
    let sigma = sigma2.sqrt();
    let z = (m as f64 - mean.value() - 0.5) / sigma;
    // (2·Σ)/σ² keeps the symmetric case exactly zero
    let skew = 1.0 - (2.0 * third.value()) / sigma2;
    let value = norm_cdf(-z) + (z * z - 1.0) / (6.0 * sigma) * norm_pdf(z) * skew;
    Ok(TailApprox {
        z_m: z,
        sigma2_n: sigma2,
        skew_correction: skew,
        value: value.clamp(0.0, 1.0),
        eps_n: None,
    })
}

/// Which measure a market tail is taken under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    /// Stretch `θ`.
    Base,
    /// Stretch `θ_N = θ·b/a`.
    Shifted,
}

/// Edgeworth and exact tails at the call cutoff of a market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketTail {
    pub cutoff: usize,
    pub measure: Measure,
    pub approx: TailApprox,
    pub exact: f64,
    /// `z_m` rebuilt from `ln(K/S0)`, the per-step log-drifts and `ε_N`.
    pub z_m_decomposed: f64,
}

pub fn edgeworth_market_tail(params: &ModelParams, measure: Measure) -> Result<MarketTail> {
    let sched = build_schedule(params)?;
    let n = sched.steps() as u64;
    let m = call_cutoff(&sched, params.spot, params.strike);
    let theta = match measure {
        Measure::Base => sched.theta,
        Measure::Shifted => sched.theta_n(),
    };
    let mut approx = edgeworth_tail(n, m as i64, theta, sched.q)?;
    let log_ratio = sched.log_b() - sched.log_a();
    let position = (params.strike / params.spot).ln() - n as f64 * sched.log_a();
    let eps = m as f64 - position / log_ratio;
    approx.eps_n = Some(eps);

    let log_theta = theta.ln();
    let drift: f64 = (0..n)
        .map(|k| sched.log_a() + logistic_pair(log_theta + k as f64 * sched.q.ln()).0 * log_ratio)
        .collect::<KahanSum>()
        .value();
    let sigma = approx.sigma2_n.sqrt();
    let z_m_decomposed =
        ((params.strike / params.spot).ln() - drift) / (log_ratio * sigma) + (eps - 0.5) / sigma;
    let exact = kemp_tail(&KempParams::new(n, theta, sched.q)?, m as i64);
    Ok(MarketTail {
        cutoff: m,
        measure,
        approx,
        exact,
        z_m_decomposed,
    })
}

/// Approximate call price `S0·edgeworth(θ_N) - K·bond·edgeworth(θ)`. Tails at
/// cutoffs outside `1..=N` are exact (0 or 1).
pub fn price_call_edgeworth(params: &ModelParams) -> Result<f64> {
    let sched = build_schedule(params)?;
    let n = sched.steps();
    let m = call_cutoff(&sched, params.spot, params.strike);
    let (shifted, base) = if m == 0 {
        (1.0, 1.0)
    } else if m > n {
        (0.0, 0.0)
    } else {
        (
            edgeworth_tail(n as u64, m as i64, sched.theta_n(), sched.q)?.value,
            edgeworth_tail(n as u64, m as i64, sched.theta, sched.q)?.value,
        )
    };
    Ok(params.spot * shifted - params.strike * sched.bond() * base)
}

/// Predicted order of the lattice call-price error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RateClass {
    #[serde(rename = "O(1/N)")]
    OrderOneOverN,
    #[serde(rename = "O(1/sqrt(N))")]
    OrderOneOverSqrtN,
}

impl RateClass {
    /// Accepted window for a fitted log-log slope.
    pub fn slope_window(&self) -> (f64, f64) {
        match self {
            RateClass::OrderOneOverN => (-1.25, -0.80),
            RateClass::OrderOneOverSqrtN => (-0.75, -0.35),
        }
    }

    pub fn accepts(&self, slope: f64) -> bool {
        let (lo, hi) = self.slope_window();
        (lo..=hi).contains(&slope)
    }
}

/// `O(1/N)` iff `θ = 1` and `ζ = 1`, otherwise `O(1/√N)`.
pub fn predict_rate(params: &ModelParams) -> RateClass {
    const TOL: f64 = 1e-12;
    if (params.theta - 1.0).abs() <= TOL && (params.effective_zeta() - 1.0).abs() <= TOL {
        RateClass::OrderOneOverN
    } else {
        RateClass::OrderOneOverSqrtN
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ScheduleMode;

    #[test]
    fn symmetric_case_has_no_skew() {
        for n in [1u64, 7, 100, 1001] {
            let t = edgeworth_tail(n, (n as i64 + 1) / 2, 1.0, QValue::ONE).unwrap();
            assert_eq!(t.skew_correction, 0.0);
            let plain = norm_cdf(-t.z_m);
            assert_eq!(t.value, plain.clamp(0.0, 1.0));
        }
    }

    #[test]
    fn close_to_exact_binomial_tail() {
        let t = edgeworth_tail(100, 60, 1.5, QValue::ONE).unwrap();
        let exact = kemp_tail(&KempParams::new(100, 1.5, QValue::ONE).unwrap(), 60);
        assert!((t.value - exact).abs() <= 5e-3, "{} vs {exact}", t.value);
    }

    #[test]
    fn error_shrinks_with_n() {
        // same standardized cutoff at n = 100 and n = 400
        let err = |n: u64| {
            let theta = 1.5;
            let p = theta / (1.0 + theta);
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            let m = (n as f64 * p + 0.8 * sd).round() as i64;
            let t = edgeworth_tail(n, m, theta, QValue::ONE).unwrap();
            (t.value - kemp_tail(&KempParams::new(n, theta, QValue::ONE).unwrap(), m)).abs()
        };
        assert!(err(400) < err(100));
    }

    #[test]
    fn rejects_bad_cutoffs() {
        assert!(edgeworth_tail(10, 0, 1.0, QValue::ONE).is_err());
        assert!(edgeworth_tail(10, 11, 1.0, QValue::ONE).is_err());
        assert!(edgeworth_tail(0, 1, 1.0, QValue::ONE).is_err());
    }

    #[test]
    fn market_tail_decomposition_agrees() {
        let p = ModelParams::new(100.0, 95.0, 0.2, 0.5, 400)
            .with_theta(1.1)
            .with_eta(1.0)
            .with_trend_horizon(1.0);
        for measure in [Measure::Base, Measure::Shifted] {
            let t = edgeworth_market_tail(&p, measure).unwrap();
            let eps = t.approx.eps_n.unwrap();
            assert!((0.0..=1.0).contains(&eps));
            assert!((t.approx.z_m - t.z_m_decomposed).abs() <= 1e-10);
        }
    }

    #[test]
    fn rate_classes() {
        let base = ModelParams::new(100.0, 95.0, 0.2, 0.5, 10).with_mode(ScheduleMode::Polynomial);
        assert_eq!(predict_rate(&base), RateClass::OrderOneOverN);
        assert_eq!(
            predict_rate(&base.clone().with_theta(1.1)),
            RateClass::OrderOneOverSqrtN
        );
        assert_eq!(
            predict_rate(&base.clone().with_zeta(0.5)),
            RateClass::OrderOneOverSqrtN
        );
        // exponential mode realises ζ = 1 whatever the field says
        let exp = base.with_zeta(0.5).with_mode(ScheduleMode::Exponential);
        assert_eq!(predict_rate(&exp), RateClass::OrderOneOverN);
        assert!(RateClass::OrderOneOverN.accepts(-1.0));
        assert!(!RateClass::OrderOneOverSqrtN.accepts(-1.0));
    }
}
