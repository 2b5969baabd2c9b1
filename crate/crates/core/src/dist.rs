//! Kemp (q-binomial) distribution of `Z_n = X_1 + … + X_n` with independent
//! logistic Bernoulli steps `P(X_k = 1) = θq^{k-1} / (1 + θq^{k-1})`, and the
//! q-geometric default time built from the same steps.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::qnum::{
    compensated_sum, log_add_exp, log_q_binomial, log_q_binomial_row, log_rising_product_from_log,
    log_sum_exp, logistic_pair, softplus, KahanSum, QValue,
};

/// Default cap on `n` for [`kemp_pmf_table`].
pub const DEFAULT_TABLE_CAP: u64 = 20_000;

/// `(n, θ, q)` identifying one Kemp distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KempParams {
    n: u64,
    theta: f64,
    q: QValue,
}

impl KempParams {
    pub fn new(n: u64, theta: f64, q: QValue) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::param(
                "theta",
                format!("must be finite and > 0, got {theta}"),
            ));
        }
        Ok(KempParams { n, theta, q })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn q(&self) -> QValue {
        self.q
    }

    // log odds of step k (1-based)
    #[inline]
    fn step_log_odds(&self, k: u64) -> f64 {
        self.theta.ln() + (k - 1) as f64 * self.q.ln()
    }
}

/// `(P(X_k = 1), P(X_k = 0))`; the pair sums to exactly one.
#[inline]
pub fn switch_pair(k: u64, theta: f64, q: QValue) -> (f64, f64) {
    debug_assert!(k >= 1);
    logistic_pair(theta.ln() + (k.max(1) - 1) as f64 * q.ln())
}

/// `P(X_k = 1) = θq^{k-1} / (1 + θq^{k-1})`.
#[inline]
pub fn switch_prob(k: u64, theta: f64, q: QValue) -> f64 {
    switch_pair(k, theta, q).0
}

/// `P(X_k = 0) = 1 / (1 + θq^{k-1})`.
#[inline]
pub fn complement_prob(k: u64, theta: f64, q: QValue) -> f64 {
    switch_pair(k, theta, q).1
}

/// `ln P(Z_n = k)` from the closed form; `-inf` outside `0..=n`.
pub fn kemp_log_pmf(params: &KempParams, k: i64) -> f64 {
    if k < 0 || k as u64 > params.n {
        return f64::NEG_INFINITY;
    }
    let kf = k as f64;
    kf * params.theta.ln()
        + 0.5 * kf * (kf - 1.0) * params.q.ln()
        + log_q_binomial(params.n, k, params.q)
        - log_rising_product_from_log(params.n, params.theta.ln(), params.q)
}

/// Closed-form `ln P(Z_n = k)` for all `k`, in `O(n)` log-evaluations.
pub fn kemp_log_pmf_all(params: &KempParams) -> Vec<f64> {
    log_weights(params.n, params.theta.ln(), params.q)
}

/// `ln P(Z_n = k)` for all `k` given `ln θ`.
pub(crate) fn log_weights(n: u64, log_theta: f64, q: QValue) -> Vec<f64> {
    let norm = log_rising_product_from_log(n, log_theta, q);
    let mut terms = log_kemp_terms(n, log_theta, q);
    for t in terms.iter_mut() {
        *t -= norm;
    }
    terms
}

/// Unnormalised `k·ln θ + k(k-1)/2·ln q + ln (n choose k)_q` for all `k`.
pub(crate) fn log_kemp_terms(n: u64, log_theta: f64, q: QValue) -> Vec<f64> {
    let lq = q.ln();
    log_q_binomial_row(n, q)
        .into_iter()
        .enumerate()
        .map(|(k, lb)| {
            let kf = k as f64;
            kf * log_theta + 0.5 * kf * (kf - 1.0) * lq + lb
        })
        .collect()
}

/// Full probability table of `Z_n`, stored in log scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmfTable {
    #[serde(skip)]
    pub params: KempParams,
    pub log_probs: Vec<f64>,
}

impl PmfTable {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.log_probs.iter().map(|l| l.exp()))
    }

    /// `P(Z_n <= k)` for each `k`.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = KahanSum::new();
        self.log_probs
            .iter()
            .map(|l| {
                acc.add(l.exp());
                acc.value().min(1.0)
            })
            .collect()
    }

    pub fn moments(&self) -> Moments {
        let mean = compensated_sum(
            self.log_probs
                .iter()
                .enumerate()
                .map(|(k, l)| k as f64 * l.exp()),
        );
        let variance = compensated_sum(
            self.log_probs
                .iter()
                .enumerate()
                .map(|(k, l)| (k as f64 - mean).powi(2) * l.exp()),
        );
        Moments { mean, variance }
    }
}

/// Builds the table with the step-by-step recurrence
/// `P_{j+1}(k) = P_j(k)·P(X_{j+1}=0) + P_j(k-1)·P(X_{j+1}=1)`, carried in
/// log scale so that no class underflows. Cost is `O(n²)`.
pub fn kemp_pmf_table(params: &KempParams) -> Result<PmfTable> {
    kemp_pmf_table_with_cap(params, DEFAULT_TABLE_CAP)
}

pub fn kemp_pmf_table_with_cap(params: &KempParams, cap: u64) -> Result<PmfTable> {
    if params.n > cap {
        return Err(Error::Size {
            requested: params.n as usize,
            cap: cap as usize,
        });
    }
    let n = params.n as usize;
    let mut row = vec![f64::NEG_INFINITY; n + 1];
    row[0] = 0.0;
    for j in 0..n {
        let y = params.step_log_odds(j as u64 + 1);
        let log_up = -softplus(-y);
        let log_down = -softplus(y);
        // top-down so row[k-1] is still the previous level
        row[j + 1] = row[j] + log_up;
        for k in (1..=j).rev() {
            row[k] = log_add_exp(row[k] + log_down, row[k - 1] + log_up);
        }
        row[0] += log_down;
    }
    Ok(PmfTable {
        params: *params,
        log_probs: row,
    })
}

/// `P(Z_n >= m)`.
pub fn kemp_tail(params: &KempParams, m: i64) -> f64 {
    if m <= 0 {
        return 1.0;
    }
    if m as u64 > params.n {
        return 0.0;
    }
    let all = kemp_log_pmf_all(params);
    tail_from_log_pmf(&all, m as usize)
}

pub(crate) fn tail_from_log_pmf(log_pmf: &[f64], m: usize) -> f64 {
    if m == 0 {
        return 1.0;
    }
    if m >= log_pmf.len() {
        return 0.0;
    }
    log_sum_exp(&log_pmf[m..]).exp().min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

/// Exact mean `Σ p_k` and variance `Σ p_k(1-p_k)` of `Z_n`.
pub fn kemp_moments(params: &KempParams) -> Moments {
    let mut mean = KahanSum::new();
    let mut var = KahanSum::new();
    for k in 1..=params.n {
        let (p, c) = logistic_pair(params.step_log_odds(k));
        mean.add(p);
        var.add(p * c);
    }
    Moments {
        mean: mean.value(),
        variance: var.value(),
    }
}

/// Probability generating function `E[t^{Z_n}] = Π_{l=1..n} (1+θtq^{l-1}) / (1+θq^{l-1})`.
pub fn kemp_pgf(params: &KempParams, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param("t", format!("must lie in [0, 1], got {t}")));
    }
    let log_t = t.ln();
    let log = compensated_sum((1..=params.n).map(|l| {
        let y = params.step_log_odds(l);
        softplus(y + log_t) - softplus(y)
    }));
    Ok(log.exp())
}

/// Survival `P(τ >= k) = Π_{l=1..k-1} θq^{l-1} / (1 + θq^{l-1})` of the
/// q-geometric default time `τ`.
pub fn qgeom_survival(k: u64, theta: f64, q: QValue) -> f64 {
    let log_theta = theta.ln();
    compensated_sum((1..k).map(|l| -softplus(-(log_theta + (l - 1) as f64 * q.ln())))).exp()
}

/// Logistic failure rate `P(τ = k | τ >= k) = 1 / (1 + θq^{k-1})`.
pub fn failure_rate(k: u64, theta: f64, q: QValue) -> f64 {
    complement_prob(k, theta, q)
}
