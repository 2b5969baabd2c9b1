//! The q-binomial CRR market.
//!
//! Up/down gross returns `b_N`, `a_N` are fixed per step count `N`; the
//! up-probability of step `k` follows the logistic schedule with trend base
//! `q_N = 1 + η (T_q / N)^{3/2}`, and the short rate of each step is chosen so
//! the discounted asset is a martingale. Three European pricers are provided
//! and cross-check each other:
//!
//! * [`price_european_closed`] sums the terminal law in closed form, `O(N)`.
//! * [`price_backward`] runs backward induction on the recombining tree, `O(N²)`.
//! * [`price_call_dual`] splits a call into two Kemp tails under `θ` and `θb/a`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{log_kemp_terms, log_weights, tail_from_log_pmf};
use crate::error::{Error, Result};
use crate::qnum::{compensated_sum, logistic_pair, softplus, KahanSum, QValue};

/// How `a_N`, `b_N` are derived from `σ`, `θ`, `ζ` and `Δt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    /// `a = 1 - σ√(θΔt) + ζσ²θΔt/2`, `b = 1 + σ√(Δt/θ) + ζσ²Δt/(2θ)`.
    Polynomial,
    /// `a = exp(-σ√(θΔt))`, `b = exp(σ√(Δt/θ))`; behaves as `ζ = 1`.
    #[default]
    Exponential,
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleMode::Polynomial => "polynomial",
            ScheduleMode::Exponential => "exponential",
        })
    }
}

impl FromStr for ScheduleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "polynomial" | "poly" => Ok(ScheduleMode::Polynomial),
            "exponential" | "exp" => Ok(ScheduleMode::Exponential),
            other => Err(Error::param(
                "mode",
                format!("expected `polynomial` or `exponential`, got `{other}`"),
            )),
        }
    }
}

/// One q-CRR market and option maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub spot: f64,
    pub strike: f64,
    pub sigma: f64,
    /// Option maturity `T` in years.
    pub maturity: f64,
    /// Stretch `θ`.
    pub theta: f64,
    /// Tilt `ζ`; ignored (taken as 1) in exponential mode.
    pub zeta: f64,
    /// Trend `η`.
    pub eta: f64,
    pub steps: usize,
    /// Timescale `T_q` inside `q_N = 1 + η (T_q/N)^{3/2}`.
    pub trend_horizon: f64,
    pub mode: ScheduleMode,
}

impl ModelParams {
    /// Standard CRR defaults: `θ = 1`, `ζ = 1`, `η = 0`, `T_q = T`, exponential.
    pub fn new(spot: f64, strike: f64, sigma: f64, maturity: f64, steps: usize) -> Self {
        ModelParams {
            spot,
            strike,
            sigma,
            maturity,
            theta: 1.0,
            zeta: 1.0,
            eta: 0.0,
            steps,
            trend_horizon: maturity,
            mode: ScheduleMode::Exponential,
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_zeta(mut self, zeta: f64) -> Self {
        self.zeta = zeta;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_trend_horizon(mut self, tq: f64) -> Self {
        self.trend_horizon = tq;
        self
    }

    pub fn with_mode(mut self, mode: ScheduleMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_strike(mut self, strike: f64) -> Self {
        self.strike = strike;
        self
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }

    /// Tilt actually realised by the schedule.
    pub fn effective_zeta(&self) -> f64 {
        match self.mode {
            ScheduleMode::Polynomial => self.zeta,
            ScheduleMode::Exponential => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ))
            }
        }
        positive("s0", self.spot)?;
        positive("sigma", self.sigma)?;
        positive("t", self.maturity)?;
        positive("theta", self.theta)?;
        positive("tq", self.trend_horizon)?;
        if !(self.strike.is_finite() && self.strike >= 0.0) {
            return Err(Error::param(
                "k",
                format!("must be finite and >= 0, got {}", self.strike),
            ));
        }
        if !self.zeta.is_finite() {
            return Err(Error::param("zeta", "must be finite"));
        }
        if !self.eta.is_finite() {
            return Err(Error::param("eta", "must be finite"));
        }
        if self.steps == 0 {
            return Err(Error::param("n", "must be >= 1"));
        }
        Ok(())
    }
}

/// Per-step quantities derived from [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule {
    pub a: f64,
    pub b: f64,
    pub q: QValue,
    pub dt: f64,
    pub theta: f64,
    /// `r_k` for `k = 1..=N`, stored at index `k-1`.
    pub rates: Vec<f64>,
    /// `p_k = θq^{k-1} / (1 + θq^{k-1})`, stored at index `k-1`.
    pub switch_probs: Vec<f64>,
    down_probs: Vec<f64>,
    log_a: f64,
    log_b: f64,
}

impl StepSchedule {
    pub fn steps(&self) -> usize {
        self.rates.len()
    }

    pub fn log_a(&self) -> f64 {
        self.log_a
    }

    pub fn log_b(&self) -> f64 {
        self.log_b
    }

    /// `θ_N = θ·b/a`.
    pub fn theta_n(&self) -> f64 {
        self.theta * self.b / self.a
    }

    pub fn down_probs(&self) -> &[f64] {
        &self.down_probs
    }

    /// `ln Π_{k=1..n} (1+r_k)^{-1}`.
    pub fn log_discount_to(&self, n: usize) -> f64 {
        -compensated_sum(self.rates[..n].iter().map(|r| r.ln_1p()))
    }

    /// Zero-coupon bond `Π_{k=1..N} (1+r_k)^{-1}`.
    pub fn bond(&self) -> f64 {
        self.log_discount_to(self.steps()).exp()
    }

    /// `ln(S0·b^k·a^{n-k})`.
    #[inline]
    pub fn log_node(&self, log_spot: f64, n: usize, k: usize) -> f64 {
        log_spot + k as f64 * self.log_b + (n - k) as f64 * self.log_a
    }

    /// Mean and variance of `S_k / S_{k-1}`.
    pub fn one_step_moments(&self, k: usize) -> Result<(f64, f64)> {
        if k == 0 || k > self.steps() {
            return Err(Error::Index {
                index: k,
                max: self.steps(),
            });
        }
        Ok(step_moments(self.a, self.b, self.theta, self.q, k as u64))
    }
}

/// Mean `(a + bθq^{k-1}) / (1 + θq^{k-1})` and variance
/// `(b-a)²θq^{k-1} / (1 + θq^{k-1})²` of the one-step gross return.
pub fn step_moments(a: f64, b: f64, theta: f64, q: QValue, k: u64) -> (f64, f64) {
    let (p, c) = logistic_pair(theta.ln() + (k.max(1) - 1) as f64 * q.ln());
    (a * c + b * p, (b - a).powi(2) * p * c)
}

pub fn build_schedule(params: &ModelParams) -> Result<StepSchedule> {
    params.validate()?;
    let n = params.steps;
    let dt = params.dt();
    let sigma = params.sigma;
    let theta = params.theta;
    let down_move = sigma * (theta * dt).sqrt();
    let up_move = sigma * (dt / theta).sqrt();

    let (a_minus_one, b_minus_one, log_a, log_b) = match params.mode {
        ScheduleMode::Exponential => ((-down_move).exp_m1(), up_move.exp_m1(), -down_move, up_move),
        ScheduleMode::Polynomial => {
            let zeta = params.zeta;
            let am1 = -down_move + 0.5 * zeta * sigma * sigma * theta * dt;
            let bm1 = up_move + 0.5 * zeta * sigma * sigma * dt / theta;
            (am1, bm1, am1.ln_1p(), bm1.ln_1p())
        }
    };
    let (a, b) = (1.0 + a_minus_one, 1.0 + b_minus_one);
    if !(a > 0.0) {
        return Err(Error::param(
            "n",
            format!("a_N = {a} must be > 0 (need sigma*sqrt(theta*dt) < 1); increase N"),
        ));
    }
    if !(a_minus_one < 0.0) {
        return Err(Error::param("zeta", format!("a_N = {a} must be < 1")));
    }
    if !(b_minus_one > 0.0) {
        return Err(Error::param("zeta", format!("b_N = {b} must be > 1")));
    }

    let offset = params.eta * (params.trend_horizon / n as f64).powf(1.5);
    let q = QValue::from_offset(offset).map_err(|_| {
        Error::param(
            "eta",
            format!("q_N = 1 + {offset} must be > 0; reduce |eta| or increase N"),
        )
    })?;

    let log_theta = theta.ln();
    let mut rates = Vec::with_capacity(n);
    let mut switch_probs = Vec::with_capacity(n);
    let mut down_probs = Vec::with_capacity(n);
    for k in 0..n {
        let (p, c) = logistic_pair(log_theta + k as f64 * q.ln());
        rates.push(a_minus_one * c + b_minus_one * p);
        switch_probs.push(p);
        down_probs.push(c);
    }
    Ok(StepSchedule {
        a,
        b,
        q,
        dt,
        theta,
        rates,
        switch_probs,
        down_probs,
        log_a,
        log_b,
    })
}

/// A European payoff `φ(S_N)`.
pub trait Payoff: Sync {
    fn value(&self, spot: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Sync> Payoff for F {
    fn value(&self, spot: f64) -> f64 {
        self(spot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Vanilla {
    Call(f64),
    Put(f64),
}

impl Payoff for Vanilla {
    fn value(&self, spot: f64) -> f64 {
        match *self {
            Vanilla::Call(k) => (spot - k).max(0.0),
            Vanilla::Put(k) => (k - spot).max(0.0),
        }
    }
}

/// Price at `n = 0` of the payoff, summing
/// `θ^k q^{k(k-1)/2} (N choose k)_q φ(S0 b^k a^{N-k}) / Π_{l=0..N-1}(a + θbq^l)`.
pub fn price_european_closed(params: &ModelParams, payoff: &impl Payoff) -> Result<f64> {
    let sched = build_schedule(params)?;
    Ok(closed_from(&sched, 0, params.spot, payoff))
}

/// Price at step `n` given `S_n = spot_n`.
pub fn price_at(params: &ModelParams, n: usize, spot_n: f64, payoff: &impl Payoff) -> Result<f64> {
    let sched = build_schedule(params)?;
    if n > sched.steps() {
        return Err(Error::Index {
            index: n,
            max: sched.steps(),
        });
    }
    if !(spot_n.is_finite() && spot_n > 0.0) {
        return Err(Error::param("spot_n", format!("must be > 0, got {spot_n}")));
    }
    Ok(closed_from(&sched, n, spot_n, payoff))
}

fn closed_from(sched: &StepSchedule, n: usize, spot_n: f64, payoff: &impl Payoff) -> f64 {
    let remaining = sched.steps() - n;
    if remaining == 0 {
        return payoff.value(spot_n);
    }
    let lq = sched.q.ln();
    // θq^n takes the role of θ for the remaining steps
    let log_theta_n = sched.theta.ln() + n as f64 * lq;
    // Π_{l=n..N-1} (a + θbq^l) = a^{N-n} Π (1 + (θb/a) q^l)
    let log_b_over_a = sched.log_b - sched.log_a;
    let log_denominator = remaining as f64 * sched.log_a
        + compensated_sum(
            (0..remaining).map(|l| softplus(log_theta_n + log_b_over_a + l as f64 * lq)),
        );
    let terms = log_kemp_terms(remaining as u64, log_theta_n, sched.q);
    let log_spot = spot_n.ln();
    let mut acc = KahanSum::new();
    for (k, lt) in terms.iter().enumerate() {
        let v = payoff.value(sched.log_node(log_spot, remaining, k).exp());
        if v != 0.0 {
            acc.add(v * (lt - log_denominator).exp());
        }
    }
    acc.value()
}

/// Backward induction on the recombining lattice, `O(N²)` time, `O(N)` memory.
pub fn price_backward(params: &ModelParams, payoff: &impl Payoff) -> Result<f64> {
    let sched = build_schedule(params)?;
    let n = sched.steps();
    let log_spot = params.spot.ln();
    let mut values: Vec<f64> = (0..=n)
        .map(|j| payoff.value(sched.log_node(log_spot, n, j).exp()))
        .collect();
    for k in (1..=n).rev() {
        let p = sched.switch_probs[k - 1];
        let c = sched.down_probs[k - 1];
        let growth = 1.0 + sched.rates[k - 1];
        for j in 0..k {
            values[j] = (p * values[j + 1] + c * values[j]) / growth;
        }
    }
    Ok(values[0])
}

/// Smallest `m` with `S0·b^m·a^{N-m} > K`, clamped to `0..=N+1`. Nodes within
/// `1e-12·K` of the strike count as not exceeding it.
pub fn call_cutoff(sched: &StepSchedule, spot: f64, strike: f64) -> usize {
    let n = sched.steps();
    if strike <= 0.0 {
        return 0;
    }
    let tol = 1e-12 * strike;
    let log_spot = spot.ln();
    let node = |m: usize| sched.log_node(log_spot, n, m).exp();
    let x = (strike.ln() - log_spot - n as f64 * sched.log_a) / (sched.log_b - sched.log_a);
    let mut m = if x < 0.0 {
        0
    } else {
        ((x.floor() + 1.0).min((n + 1) as f64)) as usize
    };
    while m <= n && node(m) <= strike + tol {
        m += 1;
    }
    while m > 0 && node(m - 1) > strike + tol {
        m -= 1;
    }
    m
}

/// Pieces of the two-tail call decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualCall {
    pub cutoff: usize,
    pub theta_n: f64,
    /// `P_{θ_N, q_N}(Z_N >= m)`.
    pub tail_shifted: f64,
    /// `P_{θ, q_N}(Z_N >= m)`.
    pub tail_base: f64,
    pub bond: f64,
    pub price: f64,
}

pub fn call_dual_parts(params: &ModelParams) -> Result<DualCall> {
    let sched = build_schedule(params)?;
    let n = sched.steps() as u64;
    let m = call_cutoff(&sched, params.spot, params.strike);
    let theta_n = sched.theta_n();
    let tail_shifted = tail_from_log_pmf(&log_weights(n, theta_n.ln(), sched.q), m);
    let tail_base = tail_from_log_pmf(&log_weights(n, sched.theta.ln(), sched.q), m);
    let bond = sched.bond();
    Ok(DualCall {
        cutoff: m,
        theta_n,
        tail_shifted,
        tail_base,
        bond,
        price: params.spot * tail_shifted - params.strike * bond * tail_base,
    })
}

/// `S0·P_{θ_N}(Z_N >= m) - K·Π(1+r_k)^{-1}·P_θ(Z_N >= m)`.
pub fn price_call_dual(params: &ModelParams) -> Result<f64> {
    Ok(call_dual_parts(params)?.price)
}

/// `max_n |E[S_n Π_{k<=n}(1+r_k)^{-1}] - S0| / S0`, with each expectation
/// taken over the closed-form law of `Z_n`.
pub fn martingale_residual(params: &ModelParams) -> Result<f64> {
    let sched = build_schedule(params)?;
    let log_theta = sched.theta.ln();
    let mut log_disc = KahanSum::new();
    let mut worst: f64 = 0.0;
    for n in 1..=sched.steps() {
        log_disc.add(-sched.rates[n - 1].ln_1p());
        let weights = log_weights(n as u64, log_theta, sched.q);
        let expectation = compensated_sum(
            weights
                .iter()
                .enumerate()
                .map(|(k, lw)| (lw + sched.log_node(0.0, n, k) + log_disc.value()).exp()),
        );
        worst = worst.max((expectation - 1.0).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1(eta: f64, theta: f64, n: usize) -> ModelParams {
        ModelParams::new(100.0, 95.0, 0.2, 0.5, n)
            .with_theta(theta)
            .with_eta(eta)
            .with_trend_horizon(1.0)
    }

    #[test]
    fn schedule_q_is_one_without_trend() {
        let s = build_schedule(&table1(0.0, 1.3, 50)).unwrap();
        assert_eq!(s.q.get(), 1.0);
        assert!(s.q.is_one());
    }

    #[test]
    fn exponential_symmetric_at_theta_one() {
        let s = build_schedule(&table1(0.5, 1.0, 77)).unwrap();
        assert!((s.b * s.a - 1.0).abs() < 1e-15);
    }

    #[test]
    fn polynomial_schedule_values() {
        let p = ModelParams::new(100.0, 100.0, 0.2, 0.5, 100).with_mode(ScheduleMode::Polynomial);
        let s = build_schedule(&p).unwrap();
        let x = 0.2 * 0.005f64.sqrt();
        assert!((s.dt - 0.005).abs() < 1e-18);
        assert!((s.a - (1.0 - x + 0.0001)).abs() < 1e-15);
        assert!((s.b - (1.0 + x + 0.0001)).abs() < 1e-15);
        assert!((x - 0.0141421356).abs() < 1e-9);
    }

    #[test]
    fn schedule_errors() {
        let bad_a = ModelParams::new(100.0, 100.0, 2.0, 1.0, 2)
            .with_mode(ScheduleMode::Polynomial)
            .with_zeta(0.0);
        match build_schedule(&bad_a) {
            Err(Error::Param { name, .. }) => assert_eq!(name, "n"),
            other => panic!("unexpected {other:?}"),
        }
        let bad_q = ModelParams::new(100.0, 100.0, 0.2, 1.0, 1).with_eta(-2.0);
        match build_schedule(&bad_q) {
            Err(Error::Param { name, .. }) => assert_eq!(name, "eta"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(build_schedule(&ModelParams::new(-1.0, 100.0, 0.2, 1.0, 3)).is_err());
        assert!(build_schedule(&ModelParams::new(1.0, 100.0, 0.2, 1.0, 0)).is_err());
    }

    #[test]
    fn rates_respect_no_arbitrage_band() {
        for &eta in &[-1.0, 0.0, 1.0] {
            let s = build_schedule(&table1(eta, 1.1, 300)).unwrap();
            for (k, r) in s.rates.iter().enumerate() {
                assert!(s.a - 1.0 < *r && *r < s.b - 1.0);
                let y = s.theta * s.q.pow(k as f64);
                let expected = (s.a + s.b * y) / (1.0 + y) - 1.0;
                assert!((r - expected).abs() < 1e-15);
                assert!((s.switch_probs[k] - y / (1.0 + y)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn step_moments_examples() {
        assert_eq!(step_moments(0.97, 0.97, 1.3, QValue::ONE, 4), (0.97, 0.0));
        let (m, _) = step_moments(0.99, 1.01, 1.5, QValue::ONE, 9);
        assert!((m - (0.99 + 1.01 * 1.5) / 2.5).abs() < 1e-15);
        let q = QValue::new(1.1).unwrap();
        let (m, v) = step_moments(0.99, 1.01, 2.0, q, 2);
        assert!((m - (0.99 + 1.01 * 2.2) / 3.2).abs() < 1e-15);
        assert!((v - 0.02f64.powi(2) * 2.2 / 3.2f64.powi(2)).abs() < 1e-18);
        let s = build_schedule(&table1(1.0, 1.1, 10)).unwrap();
        let (m, _) = s.one_step_moments(3).unwrap();
        assert!((m - 1.0 - s.rates[2]).abs() < 1e-15);
        assert!(s.one_step_moments(0).is_err());
        assert!(s.one_step_moments(11).is_err());
    }

    #[test]
    fn closed_form_bond_and_martingale() {
        let p = table1(1.0, 1.1, 200);
        let s = build_schedule(&p).unwrap();
        let bond = price_european_closed(&p, &|_s: f64| 1.0).unwrap();
        assert!((bond - s.bond()).abs() < 1e-13);
        let fwd = price_european_closed(&p, &|s: f64| s).unwrap();
        assert!((fwd - 100.0).abs() < 1e-11);
    }

    #[test]
    fn backward_single_step() {
        let p = table1(0.7, 1.4, 1);
        let s = build_schedule(&p).unwrap();
        let pay = Vanilla::Call(95.0);
        let expected = (s.down_probs()[0] * pay.value(100.0 * s.a)
            + s.switch_probs[0] * pay.value(100.0 * s.b))
            / (1.0 + s.rates[0]);
        assert!((price_backward(&p, &pay).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn price_at_edges() {
        let p = table1(1.0, 1.1, 40);
        let pay = Vanilla::Call(95.0);
        assert_eq!(price_at(&p, 40, 123.0, &pay).unwrap(), 28.0);
        let at0 = price_at(&p, 0, 100.0, &pay).unwrap();
        assert_eq!(at0, price_european_closed(&p, &pay).unwrap());
        assert!(matches!(
            price_at(&p, 41, 100.0, &pay),
            Err(Error::Index { .. })
        ));
        assert!(price_at(&p, 3, 0.0, &pay).is_err());
    }

    #[test]
    fn cutoff_extremes() {
        let p = table1(0.0, 1.0, 30);
        let s = build_schedule(&p).unwrap();
        assert_eq!(call_cutoff(&s, 100.0, 0.0), 0);
        assert_eq!(call_cutoff(&s, 100.0, 1e-9), 0);
        assert_eq!(call_cutoff(&s, 100.0, 1e9), 31);
        let m = call_cutoff(&s, 100.0, 95.0);
        let node = |k: usize| 100.0 * s.b.powi(k as i32) * s.a.powi(30 - k as i32);
        assert!(node(m) > 95.0 && node(m - 1) <= 95.0);
    }

    #[test]
    fn dual_extremes() {
        let p = table1(0.3, 1.2, 25).with_strike(1e-9);
        let s = build_schedule(&p).unwrap();
        let d = price_call_dual(&p).unwrap();
        assert!((d - (100.0 - 1e-9 * s.bond())).abs() < 1e-12);
        let deep = table1(0.3, 1.2, 25).with_strike(100.0 * s.b.powi(25) * 1.01);
        assert_eq!(price_call_dual(&deep).unwrap(), 0.0);
    }

    #[test]
    fn martingale_small_cases() {
        assert!(martingale_residual(&table1(0.8, 1.7, 1)).unwrap() < 1e-15);
        for n in [5, 50, 100] {
            let p = ModelParams::new(100.0, 95.0, 0.2, 0.5, n);
            assert!(martingale_residual(&p).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn mode_parses() {
        assert_eq!(
            "poly".parse::<ScheduleMode>().unwrap(),
            ScheduleMode::Polynomial
        );
        assert_eq!(
            "Exponential".parse::<ScheduleMode>().unwrap(),
            ScheduleMode::Exponential
        );
        assert!("cubic".parse::<ScheduleMode>().is_err());
    }
}
