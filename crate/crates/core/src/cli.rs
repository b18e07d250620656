//! `crixetf` command line: argument parsing, command dispatch, exit codes.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::LoadedConfig;
use crate::error::{Error, Result};
use crate::index::{IndexHistory, IndexState, SelectionResult};
use crate::report::{self, RunTables};
use crate::simulator::{performance_summary, run_backtest, PerformanceSummary, SimulationResult};
use crate::spread::{fit_ols, fit_quantile, pinball_loss, LineFit, QuantileFitOptions, SpreadCurve, SpreadObservation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "crixetf", version, about = "Crypto index ETF backtester")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build index states and the daily index series.
    BuildIndex(CommonArgs),
    /// Fit spread curves on taker-order fills.
    EstimateSpreads(CommonArgs),
    /// Simulate the ETF once per scaling exponent.
    RunBacktest(CommonArgs),
    /// Write plot-ready CSVs from backtest outputs.
    Report(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override a config value, e.g. `--set flows.seed=7`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::BuildIndex(a)
            | Command::EstimateSpreads(a)
            | Command::RunBacktest(a)
            | Command::Report(a) => a,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to `err`.
pub fn run<I, T>(args: I, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            if e.use_stderr() {
                let _ = write!(err, "{e}");
            } else {
                let _ = e.print();
            }
            return code;
        }
    };
    let a = cli.command.args();
    let cfg = match LoadedConfig::load(&a.config, &a.overrides) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    match execute(&cli.command, &cfg, &a.out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

pub fn execute(command: &Command, cfg: &LoadedConfig, out: &Path) -> Result<()> {
    match command {
        Command::BuildIndex(_) => build_index(cfg, out),
        Command::EstimateSpreads(_) => estimate_spreads(cfg, out),
        Command::RunBacktest(_) => run_backtests(cfg, out).map(|_| ()),
        Command::Report(_) => write_report(cfg, out),
    }
}

#[derive(Serialize)]
struct StateFile<'a> {
    #[serde(flatten)]
    state: &'a IndexState,
    reconstitution: Option<&'a SelectionResult>,
}

pub fn build_index(cfg: &LoadedConfig, out: &Path) -> Result<()> {
    let c = &cfg.config;
    let dataset = cfg.load_dataset()?;
    let dates = dataset.rebalance_dates(c.backtest.start, c.backtest.end);
    if dates.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no rebalance date with full price coverage in {}..{}",
            c.backtest.start, c.backtest.end
        )));
    }
    let history = IndexHistory::build(&dataset, &dates, &c.index)?;
    for state in &history.states {
        let selection = history
            .selections
            .iter()
            .find(|s| s.0 == state.as_of)
            .map(|s| &s.1);
        report::write_json(
            &out.join("index_states").join(format!("{}.json", state.as_of)),
            &cfg.hash,
            &StateFile {
                state,
                reconstitution: selection,
            },
        )?;
    }
    let levels = history.daily_levels(&dataset, c.backtest.end)?;
    report::write_csv(&out.join("index_series.csv"), &cfg.hash, &["date", "level"], levels)
}

#[derive(Serialize)]
struct CurveFile<'a> {
    #[serde(flatten)]
    curve: &'a SpreadCurve,
    observations: usize,
    loss: f64,
    iterations: usize,
    share_above: f64,
}

#[derive(Serialize)]
struct DiagnosticRow {
    model: &'static str,
    quantile: String,
    intercept: f64,
    slope: f64,
    observations: usize,
    loss: f64,
    pinball_loss: f64,
    iterations: usize,
    share_above: f64,
    reference_volume_24h: f64,
}

fn share_above(obs: &[SpreadObservation], fit: &LineFit) -> f64 {
    let above = obs
        .iter()
        .filter(|o| o.spread_fraction > fit.intercept + fit.slope * o.notional)
        .count();
    above as f64 / obs.len() as f64
}

pub fn estimate_spreads(cfg: &LoadedConfig, out: &Path) -> Result<()> {
    let c = &cfg.config;
    if c.data.trades.is_none() {
        return Err(Error::InsufficientData("data.trades is not configured".into()));
    }
    let dataset = cfg.load_dataset()?;
    let obs = cfg.spread_observations(&dataset);
    let tau = c.spread.quantile;
    let ols = fit_ols(&obs)?;
    let qr = fit_quantile(&obs, tau, &QuantileFitOptions::default())?;
    let date = c.reference_date();
    let mut diagnostics = Vec::new();
    for (name, fit) in [("ols", ols), ("quantile", qr)] {
        let curve = SpreadCurve::with_reference(fit, &dataset, c.spread.asset.clone(), date)?;
        let above = share_above(&obs, &fit);
        report::write_json(
            &out.join(format!("spread_curve_{name}.json")),
            &cfg.hash,
            &CurveFile {
                curve: &curve,
                observations: fit.observations,
                loss: fit.loss,
                iterations: fit.iterations,
                share_above: above,
            },
        )?;
        diagnostics.push(DiagnosticRow {
            model: name,
            quantile: fit.quantile.to_string(),
            intercept: fit.intercept,
            slope: fit.slope,
            observations: fit.observations,
            loss: fit.loss,
            pinball_loss: pinball_loss(&obs, fit.intercept, fit.slope, tau),
            iterations: fit.iterations,
            share_above: above,
            reference_volume_24h: curve.reference_volume_24h,
        });
    }
    report::write_csv(
        &out.join("spread_diagnostics.csv"),
        &cfg.hash,
        &[
            "model",
            "quantile",
            "intercept",
            "slope",
            "observations",
            "loss",
            "pinball_loss",
            "iterations",
            "share_above",
            "reference_volume_24h",
        ],
        diagnostics,
    )?;
    report::write_csv(
        &out.join("spread_observations.csv"),
        &cfg.hash,
        &["notional", "spread_fraction"],
        obs.iter().map(|o| (o.notional, o.spread_fraction)),
    )
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    benchmark: &'a str,
    initial_capital: f64,
    cumulative_net_flow: f64,
    spread_curve: Option<&'a SpreadCurve>,
    runs: &'a [PerformanceSummary],
}

/// Output subdirectory for one scaling exponent, e.g. `a5`.
pub fn run_label(result: &SimulationResult) -> String {
    match result.exponent {
        Some(a) => format!("a{a}"),
        None => "frictionless".to_string(),
    }
}

pub fn run_backtests(cfg: &LoadedConfig, out: &Path) -> Result<Vec<SimulationResult>> {
    let c = &cfg.config;
    let dataset = cfg.load_dataset()?;
    let curve = cfg.spread_curve(&dataset)?;
    let settings = c.backtest_settings(curve.clone())?;
    let results: Vec<Result<SimulationResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = c
            .spread
            .exponents
            .iter()
            .map(|a| {
                let (dataset, settings) = (&dataset, &settings);
                s.spawn(move || run_backtest(dataset, settings, Some(*a)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("backtest thread panicked"))
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut summaries = Vec::with_capacity(results.len());
    for r in &results {
        report::write_backtest_tables(&out.join(run_label(r)), &cfg.hash, r)?;
        summaries.push(performance_summary(r)?);
    }
    let flows = &results[0].flows;
    flows.write_csv(&out.join("flows.csv"), Some(&format!("config_hash: {}", cfg.hash)))?;
    report::write_json(
        &out.join("summary.json"),
        &cfg.hash,
        &SummaryFile {
            benchmark: c.backtest.benchmark.as_str(),
            initial_capital: c.backtest.initial_capital,
            cumulative_net_flow: results[0]
                .reports
                .iter()
                .filter(|r| !r.initial)
                .map(|r| r.deposit)
                .sum(),
            spread_curve: curve.as_ref(),
            runs: &summaries,
        },
    )?;
    Ok(results)
}

pub fn write_report(cfg: &LoadedConfig, out: &Path) -> Result<()> {
    let runs = cfg
        .config
        .spread
        .exponents
        .iter()
        .map(|a| {
            let label = format!("a{a}");
            RunTables::read(&out.join(&label), &label)
        })
        .collect::<Result<Vec<_>>>()?;
    report::write_plot_data(&out.join("plots"), &cfg.hash, &runs, &cfg.config.report.highlight)
}
