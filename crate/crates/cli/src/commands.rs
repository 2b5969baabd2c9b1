use std::path::PathBuf;
use std::str::FromStr;

use qlattice::converge::{doubling_grid, table1_params, TABLE1_STEPS};
use qlattice::dist::{failure_rate, qgeom_survival};
use qlattice::limit::{d1_d2, integrated_rate, short_rate, trend_drift};
use qlattice::mc::{clt_check, fdd_check, martingale_check, pmf_chi_square, SE_BAND};
use qlattice::{
    bs_call_limit, build_schedule, call_cutoff, even_odd_grid, fit_order, kemp_pmf_table,
    limit_log_law, predict_rate, sample, sweep, table1_report, KempParams, ModelParams,
    PricingMethod, QValue, ScheduleMode,
};
use serde_json::json;

use crate::config::ConfigFile;
use crate::error::{exit, CliError};
use crate::output::{emit, emit_json, emit_plot, fixed6, json_doc, opt_sci, sci, tag, Csv, Format};
use crate::{
    ConvergeArgs, CurveArgs, DistArgs, LimitArgs, MarketArgs, McArgs, OutputArgs, PriceArgs,
    Table1Args,
};

const MARKET_KEYS: [&str; 10] = [
    "s0", "k", "sigma", "t", "theta", "zeta", "eta", "n", "tq", "mode",
];
const OUTPUT_KEYS: [&str; 2] = ["format", "output"];

/// Step-count grid generated by `converge`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    EvenOdd,
    Doubling,
}

impl FromStr for GridKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "even-odd" | "evenodd" => Ok(GridKind::EvenOdd),
            "doubling" => Ok(GridKind::Doubling),
            other => Err(format!("expected even-odd or doubling, got `{other}`")),
        }
    }
}

struct Resolved {
    cfg: ConfigFile,
    format: Format,
    output: Option<PathBuf>,
}

fn resolve_output(
    out: &OutputArgs,
    extra_keys: &[&[&str]],
    default: Format,
) -> Result<Resolved, CliError> {
    let cfg = match &out.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let known: Vec<&str> = extra_keys
        .iter()
        .flat_map(|k| k.iter().copied())
        .chain(OUTPUT_KEYS)
        .collect();
    cfg.check_keys(&known)?;
    let format = cfg.resolve("format", out.format, default)?;
    let output = cfg.resolve_opt("output", out.output.clone())?;
    Ok(Resolved {
        cfg,
        format,
        output,
    })
}

fn resolve_market(m: &MarketArgs, cfg: &ConfigFile) -> Result<ModelParams, CliError> {
    let maturity = cfg.resolve("t", m.t, 0.5)?;
    let params = ModelParams::new(
        cfg.resolve("s0", m.s0, 100.0)?,
        cfg.resolve("k", m.k, 95.0)?,
        cfg.resolve("sigma", m.sigma, 0.2)?,
        maturity,
        cfg.resolve("n", m.n, 100)?,
    )
    .with_theta(cfg.resolve("theta", m.theta, 1.0)?)
    .with_zeta(cfg.resolve("zeta", m.zeta, 1.0)?)
    .with_eta(cfg.resolve("eta", m.eta, 0.0)?)
    .with_trend_horizon(cfg.resolve("tq", m.tq, maturity)?)
    .with_mode(cfg.resolve("mode", m.mode, ScheduleMode::Exponential)?);
    // step sizes and probabilities must be admissible before any pricing
    build_schedule(&params)?;
    Ok(params)
}

fn no_plot(format: Format, command: &str) -> Result<(), CliError> {
    if format == Format::Plot {
        return Err(CliError::Usage(format!(
            "`{command}` does not support --format plot (use converge or table1)"
        )));
    }
    Ok(())
}

fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad {what} entry `{}`", s.trim())))
        })
        .collect()
}

pub fn price(a: PriceArgs) -> Result<u8, CliError> {
    let r = resolve_output(&a.out, &[&MARKET_KEYS, &["method"]], Format::Csv)?;
    no_plot(r.format, "price")?;
    let params = resolve_market(&a.market, &r.cfg)?;
    let method = r.cfg.resolve("method", a.method, PricingMethod::Closed)?;
    let sched = build_schedule(&params)?;
    let value = method.price_call(&params)?;
    let limit = bs_call_limit(&params)?;
    match r.format {
        Format::Csv => {
            let mut csv = Csv::new(&["method", "n", "price", "limit", "abs_err"]);
            csv.row(&[
                method.to_string(),
                params.steps.to_string(),
                fixed6(value),
                fixed6(limit),
                sci((value - limit).abs()),
            ]);
            emit(r.output.as_deref(), &csv.into_string())?;
        }
        _ => {
            let doc = json_doc(
                "price",
                json!({
                    "params": params,
                    "method": method,
                    "price": value,
                    "limit": limit,
                    "abs_err": (value - limit).abs(),
                    "diagnostics": {
                        "a": sched.a,
                        "b": sched.b,
                        "q": sched.q.get(),
                        "theta_n": sched.theta_n(),
                        "bond": sched.bond(),
                        "cutoff": call_cutoff(&sched, params.spot, params.strike),
                        "predicted_rate": predict_rate(&params),
                    },
                }),
            );
            emit_json(r.output.as_deref(), &doc)?;
        }
    }
    Ok(exit::OK)
}

pub fn dist(a: DistArgs) -> Result<u8, CliError> {
    let r = resolve_output(&a.out, &[&["n", "theta", "q"]], Format::Csv)?;
    no_plot(r.format, "dist")?;
    let n = r.cfg.resolve("n", a.n, 10)?;
    let theta = r.cfg.resolve("theta", a.theta, 1.0)?;
    let q = QValue::new(r.cfg.resolve("q", a.q, 1.0)?)?;
    let table = kemp_pmf_table(&KempParams::new(n, theta, q)?)?;
    let (pmf, cdf) = (table.probs(), table.cdf());
    match r.format {
        Format::Csv => {
            let mut csv = Csv::new(&["k", "pmf", "cdf"]);
            for (k, (p, c)) in pmf.iter().zip(&cdf).enumerate() {
                csv.row(&[k.to_string(), sci(*p), sci(*c)]);
            }
            emit(r.output.as_deref(), &csv.into_string())?;
        }
        _ => {
            let m = table.moments();
            let doc = json_doc(
                "dist",
                json!({"n": n, "theta": theta, "q": q.get(), "pmf": pmf, "cdf": cdf,
                       "mean": m.mean, "variance": m.variance}),
            );
            emit_json(r.output.as_deref(), &doc)?;
        }
    }
    Ok(exit::OK)
}

pub fn curve(a: CurveArgs) -> Result<u8, CliError> {
    let r = resolve_output(&a.out, &[&["theta", "q", "kmax"]], Format::Csv)?;
    no_plot(r.format, "curve")?;
    let theta = r.cfg.resolve("theta", a.theta, 1.0)?;
    let q = QValue::new(r.cfg.resolve("q", a.q, 1.0)?)?;
    let kmax = r.cfg.resolve("kmax", a.kmax, 10)?;
    // validates θ
    KempParams::new(0, theta, q)?;
    let rows: Vec<(u64, f64, f64)> = (1..=kmax)
        .map(|k| (k, qgeom_survival(k, theta, q), failure_rate(k, theta, q)))
        .collect();
    match r.format {
        Format::Csv => {
            let mut csv = Csv::new(&["k", "survival", "failure_rate"]);
            for (k, s, h) in &rows {
                csv.row(&[k.to_string(), sci(*s), sci(*h)]);
            }
            emit(r.output.as_deref(), &csv.into_string())?;
        }
        _ => {
            let points: Vec<_> = rows
                .iter()
                .map(|(k, s, h)| json!({"k": k, "survival": s, "failure_rate": h}))
                .collect();
            let doc = json_doc(
                "curve",
                json!({"theta": theta, "q": q.get(), "points": points}),
            );
            emit_json(r.output.as_deref(), &doc)?;
        }
    }
    Ok(exit::OK)
}

pub fn limit(a: LimitArgs) -> Result<u8, CliError> {
    let r = resolve_output(&a.out, &[&MARKET_KEYS, &["points"]], Format::Csv)?;
    no_plot(r.format, "limit")?;
    let params = resolve_market(&a.market, &r.cfg)?;
    let points: usize = r.cfg.resolve("points", a.points, 5)?;
    if points < 2 {
        return Err(CliError::Usage("--points must be >= 2".into()));
    }
    let value = bs_call_limit(&params)?;
    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        let t = params.maturity * i as f64 / (points - 1) as f64;
        let law = limit_log_law(t, &params)?;
        rows.push((t, short_rate(t, &params), law.mean_log, law.var_log));
    }
    match r.format {
        Format::Csv => {
            let mut csv = Csv::new(&["t", "short_rate", "mean_log", "var_log"]);
            for (t, rate, mean, var) in &rows {
                csv.row(&[
                    format!("{t:.6}"),
                    sci(*rate),
                    format!("{mean:.9}"),
                    sci(*var),
                ]);
            }
            emit(r.output.as_deref(), &csv.into_string())?;
            eprintln!("limit price {}", fixed6(value));
        }
        _ => {
            let (d1, d2) = d1_d2(&params);
            let table: Vec<_> = rows
                .iter()
                .map(|(t, rate, mean, var)| json!({"t": t, "short_rate": rate, "mean_log": mean, "var_log": var}))
                .collect();
            let doc = json_doc(
                "limit",
                json!({"params": params, "limit_price": value, "d1": d1, "d2": d2,
                       "integrated_rate": integrated_rate(&params),
                       "trend_drift": trend_drift(&params), "points": table}),
            );
            emit_json(r.output.as_deref(), &doc)?;
        }
    }
    Ok(exit::OK)
}

pub fn converge(a: ConvergeArgs) -> Result<u8, CliError> {
    let keys = ["method", "n-list", "base", "levels", "grid"];
    let r = resolve_output(&a.out, &[&MARKET_KEYS, &keys], Format::Csv)?;
    let params = resolve_market(&a.market, &r.cfg)?;
    let method = r.cfg.resolve("method", a.method, PricingMethod::Closed)?;
    let grid = match r.cfg.resolve_opt::<String>("n-list", a.n_list.clone())? {
        Some(raw) => parse_list::<usize>(&raw, "n-list")?,
        None => {
            let base = r.cfg.resolve("base", a.base, 50)?;
            let levels = r.cfg.resolve("levels", a.levels, 7)?;
            if base == 0 || levels == 0 || levels > 20 {
                return Err(CliError::Usage(
                    "--base must be >= 1 and --levels in 1..=20".into(),
                ));
            }
            match r.cfg.resolve("grid", a.grid, GridKind::EvenOdd)? {
                GridKind::EvenOdd => even_odd_grid(base, levels),
                GridKind::Doubling => doubling_grid(base, levels),
            }
        }
    };
    let rows = sweep(&params, &grid, method)?;
    let fit = fit_order(&rows).ok();
    let class = predict_rate(&params);
    let pass = fit.map(|f| class.accepts(f.slope));
    match r.format {
        Format::Csv => {
            let mut csv = Csv::new(&["N", "price", "limit", "abs_err", "local_order"]);
            for row in &rows {
                csv.row(&[
                    row.n.to_string(),
                    fixed6(row.price),
                    fixed6(row.limit),
                    sci(row.abs_err),
                    opt_sci(row.local_order),
                ]);
            }
            emit(r.output.as_deref(), &csv.into_string())?;
        }
        Format::Json => {
            let doc = json_doc(
                "converge",
                json!({"params": params, "method": method, "rows": rows, "fit": fit,
                       "predicted_rate": class, "slope_window": class.slope_window(), "pass": pass}),
            );
            emit_json(r.output.as_deref(), &doc)?;
        }
        Format::Plot => {
            let points: Vec<_> = rows.iter().map(|row| (row.n, row.abs_err)).collect();
            let name = format!("converge_eta{}_theta{}", tag(params.eta), tag(params.theta));
            let title = format!(
                "eta={} theta={} zeta={} method={method}",
                params.eta, params.theta, params.zeta
            );
            emit_plot(r.output.as_deref(), &name, &title, &points)?;
        }
    }
    match fit {
        Some(f) => eprintln!(
            "fitted slope {:.4} (r2 {:.4}), predicted {:?} window {:?}: {}",
            f.slope,
            f.r2,
            class,
            class.slope_window(),
            if pass == Some(true) { "pass" } else { "fail" }
        ),
        None => eprintln!("too few usable rows to fit an order"),
    }
    Ok(if pass == Some(false) {
        exit::VALIDATION_FAILED
    } else {
        exit::OK
    })
}

pub fn table1(a: Table1Args) -> Result<u8, CliError> {
    let r = resolve_output(&a.out, &[], Format::Csv)?;
    let report = table1_report()?;
    match r.format {
        Format::Csv => {
            let mut csv = Csv::new(&[
                "eta",
                "theta",
                "zeta",
                "mode",
                "N",
                "price",
                "reference",
                "abs_dev",
                "tolerance",
                "within",
                "black_scholes",
                "reference_black_scholes",
                "reproducible",
            ]);
            for row in &report.rows {
                for cell in &row.cells {
                    csv.row(&[
                        row.eta.to_string(),
                        row.theta.to_string(),
                        row.zeta.to_string(),
                        row.mode.to_string(),
                        cell.n.to_string(),
                        fixed6(cell.price),
                        fixed6(cell.reference),
                        sci(cell.deviation),
                        sci(cell.tolerance),
                        cell.within.to_string(),
                        fixed6(row.limit.price),
                        fixed6(row.limit.reference),
                        row.reproducible.to_string(),
                    ]);
                }
            }
            emit(r.output.as_deref(), &csv.into_string())?;
        }
        Format::Json => {
            let doc = json_doc(
                "table1",
                json!({"steps": TABLE1_STEPS, "rows": report.rows,
                       "reproducible_within": report.reproducible_within()}),
            );
            emit_json(r.output.as_deref(), &doc)?;
        }
        Format::Plot => {
            let grid: Vec<usize> = (0..=30)
                .map(|i| (10.0 * 1000f64.powf(i as f64 / 30.0)).round() as usize)
                .collect();
            for row in &report.rows {
                let params = table1_params(row.eta, row.theta, row.zeta, 10);
                let rows = sweep(&params, &grid, PricingMethod::Closed)?;
                let points: Vec<_> = rows.iter().map(|x| (x.n, x.abs_err)).collect();
                let name = format!("table1_eta{}_theta{}", tag(row.eta), tag(row.theta));
                let title = format!("eta={} theta={} zeta={}", row.eta, row.theta, row.zeta);
                emit_plot(r.output.as_deref(), &name, &title, &points)?;
            }
        }
    }
    for row in &report.rows {
        if let Some(note) = &row.note {
            eprintln!(
                "eta={} theta={}: not reproducible: {note}",
                row.eta, row.theta
            );
        } else if !row.within() {
            eprintln!(
                "eta={} theta={}: deviation over tolerance",
                row.eta, row.theta
            );
        }
    }
    Ok(if report.reproducible_within() {
        exit::OK
    } else {
        exit::VALIDATION_FAILED
    })
}

pub fn mc(a: McArgs) -> Result<u8, CliError> {
    let keys = ["paths", "seed", "times", "clt-tol"];
    let r = resolve_output(&a.out, &[&MARKET_KEYS, &keys], Format::Json)?;
    no_plot(r.format, "mc")?;
    let params = resolve_market(&a.market, &r.cfg)?;
    let seed: u64 = r
        .cfg
        .resolve_opt("seed", a.seed)?
        .ok_or_else(|| CliError::Usage("`mc` requires --seed".into()))?;
    let paths = r.cfg.resolve("paths", a.paths, 100_000)?;
    let tol = r.cfg.resolve("clt-tol", a.clt_tol, 0.03)?;
    let times = match r.cfg.resolve_opt::<String>("times", a.times.clone())? {
        Some(raw) => parse_list::<f64>(&raw, "times")?,
        None => vec![
            0.25 * params.maturity,
            0.5 * params.maturity,
            params.maturity,
        ],
    };
    let batch = sample(&params, &times, paths, seed)?;
    let clt = clt_check(&batch, &params)?;
    let fdd = fdd_check(&batch, &params)?;
    let mart = martingale_check(&batch, &params)?;
    let chi = pmf_chi_square(&batch, &params).ok();
    let pass = clt.within(tol)
        && fdd.iter().all(|p| p.within(SE_BAND))
        && mart.z_score.abs() <= SE_BAND
        && chi.is_none_or(|c| c.p_value > 1e-4);
    match r.format {
        Format::Csv => {
            let mut csv = Csv::new(&[
                "t",
                "step",
                "empirical_mean",
                "limit_mean",
                "mean_se",
                "mean_z",
                "empirical_var",
                "limit_var",
                "var_se",
                "var_z",
            ]);
            for p in &fdd {
                csv.row(&[
                    format!("{:.6}", p.t),
                    p.step.to_string(),
                    format!("{:.9}", p.empirical_mean),
                    format!("{:.9}", p.limit_mean),
                    sci(p.mean_se),
                    format!("{:.3}", p.mean_z_score),
                    sci(p.empirical_var),
                    sci(p.limit_var),
                    sci(p.var_se),
                    format!("{:.3}", p.var_z_score),
                ]);
            }
            emit(r.output.as_deref(), &csv.into_string())?;
        }
        _ => {
            let doc = json_doc(
                "mc",
                json!({"params": params, "seed": seed, "n_paths": paths, "clt": clt,
                       "clt_tolerance": tol, "fdd": fdd, "martingale": mart,
                       "chi_square": chi, "se_band": SE_BAND, "pass": pass}),
            );
            emit_json(r.output.as_deref(), &doc)?;
        }
    }
    eprintln!("monte carlo checks: {}", if pass { "pass" } else { "fail" });
    Ok(if pass {
        exit::OK
    } else {
        exit::VALIDATION_FAILED
    })
}
