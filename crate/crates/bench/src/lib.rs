//! Fixtures shared by the benchmarks.

use qlattice::{ModelParams, ScheduleMode};

/// At-the-money-ish market with an upward trend and asymmetric stretch.
pub fn trending_market(steps: usize) -> ModelParams {
    ModelParams::new(100.0, 95.0, 0.2, 0.5, steps)
        .with_theta(1.1)
        .with_eta(1.0)
        .with_trend_horizon(1.0)
        .with_mode(ScheduleMode::Polynomial)
}
