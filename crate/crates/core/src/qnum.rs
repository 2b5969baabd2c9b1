//! q-arithmetic primitives: q-integers, Gaussian binomial coefficients and
//! the rising product `(1+θ)(1+θq)…(1+θq^{n-1})`.
//!
//! Everything is evaluated through `log q = ln_1p(q - 1)` so that values of
//! `q` within `1e-9` of one keep full relative accuracy. Combinatorial
//! quantities are carried in log scale; the linear-scale accessor
//! [`q_binomial`] is restricted to `n <= 60`.

use crate::error::{Error, Result};

/// Largest `n` for which [`q_binomial`] returns a linear-scale value.
pub const LINEAR_SCALE_MAX_N: u64 = 60;

/// A positive trend base `q` together with its logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QValue {
    q: f64,
    log_q: f64,
}

impl QValue {
    pub const ONE: QValue = QValue { q: 1.0, log_q: 0.0 };

    pub fn new(q: f64) -> Result<Self> {
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::param(
                "q",
                format!("must be finite and > 0, got {q}"),
            ));
        }
        Ok(QValue {
            q,
            log_q: (q - 1.0).ln_1p(),
        })
    }

    /// Builds `q = 1 + delta` with `log q` taken from `delta` directly, so
    /// tiny offsets are not lost to rounding in `1 + delta`.
    pub fn from_offset(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > -1.0) {
            return Err(Error::param(
                "q",
                format!("q = 1 + {delta} must be finite and > 0"),
            ));
        }
        Ok(QValue {
            q: 1.0 + delta,
            log_q: delta.ln_1p(),
        })
    }

    #[inline]
    pub fn get(&self) -> f64 {
        self.q
    }

    #[inline]
    pub fn ln(&self) -> f64 {
        self.log_q
    }

    #[inline]
    pub fn is_one(&self) -> bool {
        self.log_q == 0.0
    }

    /// `q^e` for a real exponent.
    #[inline]
    pub fn pow(&self, e: f64) -> f64 {
        (e * self.log_q).exp()
    }
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// `ln(1 + e^y)` without overflow.
#[inline]
pub fn softplus(y: f64) -> f64 {
    if y > 0.0 {
        y + (-y).exp().ln_1p()
    } else {
        y.exp().ln_1p()
    }
}

/// The pair `(e^y / (1+e^y), 1 / (1+e^y))`.
///
/// The smaller of the two is evaluated directly and the larger as its
/// complement, so the two sum to exactly `1.0`.
#[inline]
pub fn logistic_pair(y: f64) -> (f64, f64) {
    if y < 0.0 {
        let e = y.exp();
        let p = e / (1.0 + e);
        (p, 1.0 - p)
    } else {
        let e = (-y).exp();
        let c = e / (1.0 + e);
        (1.0 - c, c)
    }
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ e^{x_i}` over a slice; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + compensated_sum(xs.iter().map(|&x| (x - max).exp())).ln()
}

// ln(e^x - 1) for x > 0
#[inline]
fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// The q-integer `[m]_q = 1 + q + … + q^{m-1}`.
pub fn q_integer(m: u64, q: QValue) -> f64 {
    if m == 0 {
        return 0.0;
    }
    if q.is_one() {
        return m as f64;
    }
    let lq = q.ln();
    (m as f64 * lq).exp_m1() / lq.exp_m1()
}

/// `ln [m]_q`; `-inf` for `m = 0`.
pub fn log_q_integer(m: u64, q: QValue) -> f64 {
    if m == 0 {
        return f64::NEG_INFINITY;
    }
    let lq = q.ln();
    if lq == 0.0 {
        return (m as f64).ln();
    }
    let x = m as f64 * lq;
    if lq > 0.0 {
        ln_expm1(x) - ln_expm1(lq)
    } else {
        (-x.exp_m1()).ln() - (-lq.exp_m1()).ln()
    }
}

/// `ln` of the Gaussian binomial coefficient `(n choose k)_q`.
///
/// Returns `-inf` for `k < 0` or `k > n`. The product runs over
/// `min(k, n-k)` factors, so `(n, k)` and `(n, n-k)` evaluate identically.
pub fn log_q_binomial(n: u64, k: i64, q: QValue) -> f64 {
    if k < 0 || k as u64 > n {
        return f64::NEG_INFINITY;
    }
    let k = k as u64;
    let j = k.min(n - k);
    let mut acc = KahanSum::new();
    for i in 1..=j {
        acc.add(log_q_integer(n - j + i, q));
        acc.add(-log_q_integer(i, q));
    }
    acc.value()
}

/// Linear-scale Gaussian binomial coefficient, available for `n <= 60`.
pub fn q_binomial(n: u64, k: i64, q: QValue) -> Option<f64> {
    if n > LINEAR_SCALE_MAX_N {
        return None;
    }
    Some(log_q_binomial(n, k, q).exp())
}

/// `ln (n choose k)_q` for every `k = 0..=n`, built with the ratio identity
/// `(n, k+1) = (n, k) · [n-k]_q / [k+1]_q` in `n` log-evaluations.
pub fn log_q_binomial_row(n: u64, q: QValue) -> Vec<f64> {
    let log_int: Vec<f64> = (0..=n).map(|m| log_q_integer(m, q)).collect();
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut acc = KahanSum::new();
    row.push(0.0);
    for k in 0..n {
        acc.add(log_int[(n - k) as usize]);
        acc.add(-log_int[(k + 1) as usize]);
        row.push(acc.value());
    }
    row
}

/// `Σ_{l=1..n} ln(1 + θ q^{l-1})`, compensated.
pub fn log_rising_product(n: u64, theta: f64, q: QValue) -> f64 {
    log_rising_product_from_log(n, theta.ln(), q)
}

pub(crate) fn log_rising_product_from_log(n: u64, log_theta: f64, q: QValue) -> f64 {
    let lq = q.ln();
    compensated_sum((0..n).map(|l| softplus(log_theta + l as f64 * lq)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(v: f64) -> QValue {
        QValue::new(v).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn qvalue_rejects_nonpositive() {
        assert!(QValue::new(0.0).is_err());
        assert!(QValue::new(-1.0).is_err());
        assert!(QValue::new(f64::NAN).is_err());
        assert!(QValue::from_offset(-1.0).is_err());
        assert_eq!(QValue::new(1.0).unwrap().ln(), 0.0);
        assert!(QValue::from_offset(0.0).unwrap().is_one());
    }

    #[test]
    fn from_offset_keeps_tiny_deltas() {
        let v = QValue::from_offset(1e-18).unwrap();
        assert_eq!(v.get(), 1.0);
        assert!(v.ln() > 0.0);
    }

    #[test]
    fn q_integer_examples() {
        assert_eq!(q_integer(5, QValue::ONE), 5.0);
        assert!(rel(q_integer(3, q(2.0)), 7.0) < 1e-14);
        assert_eq!(q_integer(0, q(0.3)), 0.0);
        assert!(rel(log_q_integer(3, q(2.0)).exp(), 7.0) < 1e-14);
        assert!(rel(log_q_integer(4, q(0.5)).exp(), 1.875) < 1e-14);
    }

    #[test]
    fn log_q_integer_no_overflow_for_large_arguments() {
        let v = log_q_integer(100_000, q(1.01));
        assert!(v.is_finite());
        // [m]_q ~ q^m / (q-1) for large m
        let approx = 100_000.0 * 1.01f64.ln() - 0.01f64.ln();
        assert!((v - approx).abs() < 1e-9);
    }

    #[test]
    fn log_q_binomial_examples() {
        assert!((log_q_binomial(4, 2, QValue::ONE) - 6f64.ln()).abs() < 1e-14);
        // (1-2^4)(1-2^3) / ((1-2)(1-2^2)) = 105 / 3 = 35
        assert!((log_q_binomial(4, 2, q(2.0)) - 35f64.ln()).abs() < 1e-13);
        assert_eq!(log_q_binomial(7, 0, q(1.3)), 0.0);
        assert_eq!(log_q_binomial(3, -1, q(1.3)), f64::NEG_INFINITY);
        assert_eq!(log_q_binomial(3, 4, q(1.3)), f64::NEG_INFINITY);
    }

    #[test]
    fn log_q_binomial_symmetric_exactly() {
        for n in 0..40u64 {
            for k in 0..=n {
                let a = log_q_binomial(n, k as i64, q(0.77));
                let b = log_q_binomial(n, (n - k) as i64, q(0.77));
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn binomial_row_matches_direct() {
        for &qq in &[0.6, 1.0, 1.0 + 1e-7, 1.4] {
            let row = log_q_binomial_row(50, q(qq));
            for (k, v) in row.iter().enumerate() {
                let direct = log_q_binomial(50, k as i64, q(qq));
                assert!((v - direct).abs() < 1e-11, "q={qq} k={k}");
            }
        }
    }

    #[test]
    fn linear_accessor_capped() {
        assert!(q_binomial(60, 30, q(1.1)).is_some());
        assert!(q_binomial(61, 30, q(1.1)).is_none());
        assert!(rel(q_binomial(5, 2, QValue::ONE).unwrap(), 10.0) < 1e-14);
    }

    #[test]
    fn rising_product_examples() {
        assert!((log_rising_product(1, 0.7, q(1.9)) - 1.7f64.ln()).abs() < 1e-15);
        assert!((log_rising_product(2, 1.0, QValue::ONE) - 4f64.ln()).abs() < 1e-15);
        let expected = (1.5f64 * 1.55 * 1.605).ln();
        assert!((log_rising_product(3, 0.5, q(1.1)) - expected).abs() < 1e-14);
        assert_eq!(log_rising_product(0, 0.5, q(1.1)), 0.0);
    }

    #[test]
    fn logistic_pair_sums_to_one() {
        for i in -400..400 {
            let y = i as f64 * 0.137;
            let (p, c) = logistic_pair(y);
            assert_eq!(p + c, 1.0, "y = {y}");
            assert!(p > 0.0 && c > 0.0 || y.abs() > 36.0);
        }
    }

    #[test]
    fn softplus_and_log_add_exp() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-16);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!((log_add_exp(1f64.ln(), 3f64.ln()) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 2.0), 2.0);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0, 0.0]) - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kahan_beats_naive_sum() {
        let xs: Vec<f64> = std::iter::once(1.0)
            .chain(std::iter::repeat_n(1e-16, 10_000))
            .collect();
        assert!((compensated_sum(xs.iter().copied()) - (1.0 + 1e-12)).abs() < 1e-16);
    }
}
