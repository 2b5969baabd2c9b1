//! q-deformed Cox-Ross-Rubinstein lattice: Kemp-distributed up-move counts,
//! exact and approximate European pricers, the continuous-time limit and
//! convergence diagnostics.

// negated comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod converge;
pub mod dist;
pub mod error;
pub mod lattice;
pub mod limit;
pub mod mc;
pub mod qnum;

pub use approx::{
    edgeworth_market_tail, edgeworth_tail, predict_rate, price_call_edgeworth, MarketTail, Measure,
    RateClass, TailApprox,
};
pub use converge::{
    even_odd_grid, fit_order, sweep, sweep_fn, table1_report, ConvergenceRow, OrderFit,
    PricingMethod, Table1Cell, Table1Report, Table1Row,
};
pub use dist::{
    failure_rate, kemp_log_pmf, kemp_log_pmf_all, kemp_moments, kemp_pgf, kemp_pmf_table,
    kemp_pmf_table_with_cap, kemp_tail, qgeom_survival, switch_prob, KempParams, Moments, PmfTable,
    DEFAULT_TABLE_CAP,
};
pub use error::{Error, Result};
pub use lattice::{
    build_schedule, call_cutoff, call_dual_parts, martingale_residual, price_at, price_backward,
    price_call_dual, price_european_closed, DualCall, ModelParams, Payoff, ScheduleMode,
    StepSchedule, Vanilla,
};
pub use limit::{bs_call_limit, limit_log_law, short_rate, LimitLaw};
pub use mc::{sample, SampleBatch};
pub use qnum::{q_binomial, q_integer, QValue};
