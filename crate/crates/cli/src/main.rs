mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qlattice::{PricingMethod, ScheduleMode};

use crate::error::{exit, CliError};
use crate::output::Format;

/// q-binomial lattice pricing, distributions and convergence diagnostics.
#[derive(Debug, Parser)]
#[command(name = "qlattice", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Price a European call with one method, plus diagnostics.
    Price(PriceArgs),
    /// Kemp pmf and cdf table.
    Dist(DistArgs),
    /// Survival and logistic failure-rate schedule of the default time.
    Curve(CurveArgs),
    /// Short rate, log-price law and price of the continuous-time limit.
    Limit(LimitArgs),
    /// Sweep the step count and fit the empirical convergence order.
    Converge(ConvergeArgs),
    /// Recompute the reference convergence table.
    Table1(Table1Args),
    /// Monte Carlo validation reports.
    Mc(McArgs),
}

#[derive(Debug, Clone, Args)]
struct OutputArgs {
    /// Output format: csv, json or plot.
    #[arg(long)]
    format: Option<Format>,
    /// Output file (csv, json) or directory (plot); stdout by default.
    #[arg(long)]
    output: Option<PathBuf>,
    /// key=value file supplying defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct MarketArgs {
    /// Spot price.
    #[arg(long, allow_negative_numbers = true)]
    s0: Option<f64>,
    /// Strike.
    #[arg(long, allow_negative_numbers = true)]
    k: Option<f64>,
    /// Volatility.
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    /// Maturity in years.
    #[arg(long, allow_negative_numbers = true)]
    t: Option<f64>,
    /// Stretch.
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// Tilt.
    #[arg(long, allow_negative_numbers = true)]
    zeta: Option<f64>,
    /// Trend.
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    /// Number of time steps.
    #[arg(long)]
    n: Option<usize>,
    /// Trend horizon; defaults to the maturity.
    #[arg(long, allow_negative_numbers = true)]
    tq: Option<f64>,
    /// Step schedule: polynomial or exponential.
    #[arg(long)]
    mode: Option<ScheduleMode>,
}

#[derive(Debug, Args)]
struct PriceArgs {
    #[command(flatten)]
    market: MarketArgs,
    /// closed, backward, dual or edgeworth.
    #[arg(long)]
    method: Option<PricingMethod>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct DistArgs {
    /// Number of steps.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// Trend base.
    #[arg(long, allow_negative_numbers = true)]
    q: Option<f64>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    q: Option<f64>,
    /// Largest period reported.
    #[arg(long)]
    kmax: Option<u64>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct LimitArgs {
    #[command(flatten)]
    market: MarketArgs,
    /// Number of evenly spaced times in [0, T].
    #[arg(long)]
    points: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    #[command(flatten)]
    market: MarketArgs,
    /// closed, backward, dual or edgeworth.
    #[arg(long)]
    method: Option<PricingMethod>,
    /// Comma-separated increasing step counts; overrides the generated grid.
    #[arg(long)]
    n_list: Option<String>,
    /// Smallest step count of the generated grid.
    #[arg(long)]
    base: Option<usize>,
    /// Number of doublings of the generated grid.
    #[arg(long)]
    levels: Option<u32>,
    /// Generated grid: even-odd (N and N+1 at each level) or doubling.
    #[arg(long)]
    grid: Option<commands::GridKind>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct Table1Args {
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct McArgs {
    #[command(flatten)]
    market: MarketArgs,
    /// Number of simulated paths.
    #[arg(long)]
    paths: Option<usize>,
    /// RNG seed (required, here or in the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated observation times in [0, T]; default T/4, T/2, T.
    #[arg(long)]
    times: Option<String>,
    /// Relative tolerance on the limiting variance of the centred count.
    #[arg(long)]
    clt_tol: Option<f64>,
    #[command(flatten)]
    out: OutputArgs,
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(raw) = std::env::var("QLATTICE_THREADS") {
        let threads: usize = raw.trim().parse().ok().filter(|&t| t >= 1).ok_or_else(|| {
            CliError::Usage(format!(
                "QLATTICE_THREADS must be a positive integer, got `{raw}`"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Price(a) => commands::price(a),
        Command::Dist(a) => commands::dist(a),
        Command::Curve(a) => commands::curve(a),
        Command::Limit(a) => commands::limit(a),
        Command::Converge(a) => commands::converge(a),
        Command::Table1(a) => commands::table1(a),
        Command::Mc(a) => commands::mc(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::USAGE)
        }
    }
}
