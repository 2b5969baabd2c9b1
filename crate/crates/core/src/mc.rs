//! Seeded Monte Carlo sampling of the lattice walk, used to validate the
//! distributional results (central limit and finite-dimensional laws).
//!
//! Every path draws from its own ChaCha8 stream: the seed fixes the key and
//! the path index selects the stream, so a batch is bitwise reproducible for
//! any worker count.

use std::collections::BTreeMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dist::{kemp_moments, kemp_pmf_table, KempParams};
use crate::error::{Error, Result};
use crate::lattice::{build_schedule, ModelParams, StepSchedule};
use crate::limit::limit_log_law;

/// Sampled paths of one market.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBatch {
    pub seed: u64,
    pub n_paths: usize,
    /// Requested times, sorted within `[0, T]`.
    pub grid: Vec<f64>,
    /// `Z_N` per path.
    pub terminal_z: Vec<u32>,
    /// `ln S_{⌊Nt/T⌋}` per path, keyed by step index.
    pub log_prices_at: BTreeMap<usize, Vec<f64>>,
}

/// Step index `⌊Nt/T⌋`, robust to `t` being a rounded multiple of `T/N`.
pub fn grid_step(t: f64, params: &ModelParams) -> usize {
    let x = params.steps as f64 * t / params.maturity;
    ((x + 1e-9).floor() as usize).min(params.steps)
}

// p·2^64, so that `next_u64() < threshold` has probability p
fn threshold(p: f64) -> u64 {
    const TWO_64: f64 = 18_446_744_073_709_551_616.0;
    (p * TWO_64) as u64
}

pub fn sample(
    params: &ModelParams,
    grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<SampleBatch> {
    let sched = build_schedule(params)?;
    if n_paths == 0 {
        return Err(Error::param("n_paths", "must be >= 1"));
    }
    if grid.windows(2).any(|w| w[1] < w[0])
        || grid
            .iter()
            .any(|&t| !(t >= 0.0 && t <= params.maturity * (1.0 + 1e-12)))
    {
        return Err(Error::param(
            "grid",
            format!("must be sorted within [0, {}]", params.maturity),
        ));
    }
    let mut record_steps: Vec<usize> = grid.iter().map(|&t| grid_step(t, params)).collect();
    record_steps.dedup();
    let thresholds: Vec<u64> = sched.switch_probs.iter().map(|&p| threshold(p)).collect();
    let log_spot = params.spot.ln();

    let paths: Vec<(u32, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            simulate(
                &sched,
                &thresholds,
                &record_steps,
                log_spot,
                seed,
                path as u64,
            )
        })
        .collect();

    let mut log_prices_at: BTreeMap<usize, Vec<f64>> = record_steps
        .iter()
        .map(|&s| (s, Vec::with_capacity(n_paths)))
        .collect();
    let mut terminal_z = Vec::with_capacity(n_paths);
    for (z, records) in paths {
        terminal_z.push(z);
        for (s, v) in record_steps.iter().zip(records) {
            log_prices_at
                .get_mut(s)
                .expect("record step present")
                .push(v);
        }
    }
    Ok(SampleBatch {
        seed,
        n_paths,
        grid: grid.to_vec(),
        terminal_z,
        log_prices_at,
    })
}

fn simulate(
    sched: &StepSchedule,
    thresholds: &[u64],
    record_steps: &[usize],
    log_spot: f64,
    seed: u64,
    stream: u64,
) -> (u32, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut records = Vec::with_capacity(record_steps.len());
    let mut pending = record_steps.iter().peekable();
    let mut ups: u32 = 0;
    for step in 0..=thresholds.len() {
        while pending.next_if(|&&s| s == step).is_some() {
            records.push(sched.log_node(log_spot, step, ups as usize));
        }
        if step < thresholds.len() && rng.next_u64() < thresholds[step] {
            ups += 1;
        }
    }
    (ups, records)
}

fn mean_and_central_moments(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    // shifted by the first sample so that constant data has an exact mean
    let shift = xs.first().copied().unwrap_or(0.0);
    let mean = shift + xs.iter().map(|x| x - shift).sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in xs {
        let d = (x - mean).powi(2);
        m2 += d;
        m4 += d * d;
    }
    (mean, m2 / n, m4 / n)
}

/// Standard errors of the sample mean and sample variance.
fn standard_errors(var: f64, m4: f64, n: usize) -> (f64, f64) {
    let n = n as f64;
    ((var / n).sqrt(), ((m4 - var * var).max(0.0) / n).sqrt())
}

fn z_score(deviation: f64, se: f64) -> f64 {
    if se > 0.0 {
        deviation / se
    } else if deviation == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(deviation)
    }
}

/// Acceptance band in standard errors.
pub const SE_BAND: f64 = 4.0;

/// Central-limit check on `(Z_N - E[Z_N]) / √N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CltReport {
    pub steps: usize,
    pub theta: f64,
    /// Exact `E[Z_N]`.
    pub exact_mean_z: f64,
    pub empirical_mean: f64,
    pub empirical_var: f64,
    /// `θ/(1+θ)²`.
    pub target_var: f64,
    /// Exact `Var(Z_N)/N` at this `N`.
    pub exact_var: f64,
    pub mean_z_score: f64,
    pub var_z_score: f64,
    /// `|empirical_var - target_var| / target_var`.
    pub rel_dev: f64,
}

impl CltReport {
    pub fn within(&self, rel_tol: f64) -> bool {
        self.rel_dev <= rel_tol
    }
}

pub fn clt_check(batch: &SampleBatch, params: &ModelParams) -> Result<CltReport> {
    let sched = build_schedule(params)?;
    let n = params.steps;
    let exact = kemp_moments(&KempParams::new(n as u64, params.theta, sched.q)?);
    let scale = (n as f64).sqrt();
    let xs: Vec<f64> = batch
        .terminal_z
        .iter()
        .map(|&z| (z as f64 - exact.mean) / scale)
        .collect();
    let (mean, var, m4) = mean_and_central_moments(&xs);
    let (se_mean, se_var) = standard_errors(var, m4, xs.len());
    let target = params.theta / (1.0 + params.theta).powi(2);
    Ok(CltReport {
        steps: n,
        theta: params.theta,
        exact_mean_z: exact.mean,
        empirical_mean: mean,
        empirical_var: var,
        target_var: target,
        exact_var: exact.variance / n as f64,
        mean_z_score: z_score(mean, se_mean),
        var_z_score: z_score(var - exact.variance / n as f64, se_var),
        rel_dev: (var - target).abs() / target,
    })
}

/// Empirical law of `ln S_t` against the Gaussian limit at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FddPoint {
    pub t: f64,
    pub step: usize,
    pub empirical_mean: f64,
    pub limit_mean: f64,
    pub mean_se: f64,
    pub mean_z_score: f64,
    pub empirical_var: f64,
    pub limit_var: f64,
    pub var_se: f64,
    pub var_z_score: f64,
}

impl FddPoint {
    pub fn within(&self, band: f64) -> bool {
        self.mean_z_score.abs() <= band && self.var_z_score.abs() <= band
    }
}

/// One [`FddPoint`] per time of the batch grid.
pub fn fdd_check(batch: &SampleBatch, params: &ModelParams) -> Result<Vec<FddPoint>> {
    batch
        .grid
        .iter()
        .map(|&t| {
            let step = grid_step(t, params);
            let xs = batch.log_prices_at.get(&step).ok_or(Error::Index {
                index: step,
                max: params.steps,
            })?;
            let law = limit_log_law(t, params)?;
            let (mean, var, m4) = mean_and_central_moments(xs);
            let (mean_se, var_se) = standard_errors(var, m4, xs.len());
            Ok(FddPoint {
                t,
                step,
                empirical_mean: mean,
                limit_mean: law.mean_log,
                mean_se,
                mean_z_score: z_score(mean - law.mean_log, mean_se),
                empirical_var: var,
                limit_var: law.var_log,
                var_se,
                var_z_score: z_score(var - law.var_log, var_se),
            })
        })
        .collect()
}

/// Pearson chi-square test of the empirical `Z_N` histogram against the
/// exact Kemp law. Classes with expected count below 5 are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

pub fn pmf_chi_square(batch: &SampleBatch, params: &ModelParams) -> Result<ChiSquareReport> {
    let sched = build_schedule(params)?;
    let n = params.steps;
    let probs = kemp_pmf_table(&KempParams::new(n as u64, params.theta, sched.q)?)?.probs();
    let mut observed = vec![0usize; n + 1];
    for &z in &batch.terminal_z {
        observed[z as usize] += 1;
    }
    let total = batch.n_paths as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut exp_acc, mut obs_acc) = (0.0, 0.0);
    for (p, o) in probs.iter().zip(&observed) {
        exp_acc += p * total;
        obs_acc += *o as f64;
        if exp_acc >= 5.0 {
            bins.push((exp_acc, obs_acc));
            exp_acc = 0.0;
            obs_acc = 0.0;
        }
    }
    if let Some(last) = bins.last_mut() {
        last.0 += exp_acc;
        last.1 += obs_acc;
    }
    if bins.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: bins.len(),
        });
    }
    let statistic: f64 = bins.iter().map(|(e, o)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::param("dof", e.to_string()))?;
    Ok(ChiSquareReport {
        statistic,
        dof,
        p_value: chi.sf(statistic),
    })
}

/// Discounted terminal price against the spot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub empirical_mean: f64,
    pub spot: f64,
    pub se: f64,
    pub z_score: f64,
}

pub fn martingale_check(batch: &SampleBatch, params: &ModelParams) -> Result<MartingaleReport> {
    let sched = build_schedule(params)?;
    let bond = sched.bond();
    let log_spot = params.spot.ln();
    let xs: Vec<f64> = batch
        .terminal_z
        .iter()
        .map(|&z| bond * sched.log_node(log_spot, params.steps, z as usize).exp())
        .collect();
    let (mean, var, m4) = mean_and_central_moments(&xs);
    let (se, _) = standard_errors(var, m4, xs.len());
    Ok(MartingaleReport {
        empirical_mean: mean,
        spot: params.spot,
        se,
        z_score: z_score(mean - params.spot, se),
    })
}
