//! Output files: backtest tables and plot-ready tidy CSVs.
//!
//! Every CSV starts with a `# config_hash: <hex>` line and every JSON
//! document carries a `config_hash` field.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::AssetId;
use crate::simulator::{quantile_sorted, SimulationResult};

pub const HASH_PREFIX: &str = "# config_hash: ";

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn csv_string<S: Serialize>(hash: &str, rows: impl IntoIterator<Item = S>, headers: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let header_err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record(headers).map_err(header_err)?;
    for row in rows {
        w.serialize(row).map_err(header_err)?;
    }
    let body = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    let mut out = format!("{HASH_PREFIX}{hash}\n");
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    Ok(out)
}

pub fn write_csv<S: Serialize>(path: &Path, hash: &str, headers: &[&str], rows: impl IntoIterator<Item = S>) -> Result<()> {
    write_file(path, &csv_string(hash, rows, headers)?)
}

#[derive(Serialize)]
struct Hashed<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

pub fn json_string<T: Serialize>(hash: &str, body: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Hashed { config_hash: hash, body })
        .expect("serialisable output");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, hash: &str, body: &T) -> Result<()> {
    write_file(path, &json_string(hash, body))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
        })?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Malformed {
                file: path.to_path_buf(),
                line: e.position().map_or(0, |p| p.line()),
                column: String::new(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Reads the hash from the first line of a CSV written by this module.
pub fn csv_config_hash(text: &str) -> Option<&str> {
    text.lines().next()?.strip_prefix(HASH_PREFIX)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub date: NaiveDate,
    pub pre_value: f64,
    pub post_value: f64,
    pub deposit: f64,
    pub requested_flow: f64,
    pub withdrawal_clamped: bool,
    pub fees: f64,
    pub spread_costs: f64,
    pub turnover_one_sided: f64,
    pub turnover_two_sided: f64,
    pub n_constituents: usize,
}

pub const REPORT_HEADERS: &[&str] = &[
    "date",
    "pre_value",
    "post_value",
    "deposit",
    "requested_flow",
    "withdrawal_clamped",
    "fees",
    "spread_costs",
    "turnover_one_sided",
    "turnover_two_sided",
    "n_constituents",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub date: NaiveDate,
    pub asset: AssetId,
    pub delta: f64,
    pub trade_notional: f64,
}

pub const DELTA_HEADERS: &[&str] = &["date", "asset", "delta", "trade_notional"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeCostRow {
    pub date: NaiveDate,
    pub asset: AssetId,
    pub charged_notional: f64,
    pub fee: f64,
    pub spread_fraction: f64,
    pub spread_cost: f64,
}

pub const TRADE_COST_HEADERS: &[&str] = &[
    "date",
    "asset",
    "charged_notional",
    "fee",
    "spread_fraction",
    "spread_cost",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub date: NaiveDate,
    pub etf_value: f64,
    /// Cost-free replication of the index with the same flows.
    pub index_value: f64,
    pub benchmark_value: f64,
    pub index_level: f64,
}

pub const SERIES_HEADERS: &[&str] = &["date", "etf_value", "index_value", "benchmark_value", "index_level"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub date: NaiveDate,
    pub asset: AssetId,
    pub weight: f64,
}

pub const WEIGHT_HEADERS: &[&str] = &["date", "asset", "weight"];

/// Writes `reports.csv`, `deltas.csv`, `trade_costs.csv`, `series.csv` and
/// `weights.csv` for one backtest run into `dir`.
pub fn write_backtest_tables(dir: &Path, hash: &str, result: &SimulationResult) -> Result<()> {
    write_csv(
        &dir.join("reports.csv"),
        hash,
        REPORT_HEADERS,
        result.reports.iter().map(|r| ReportRow {
            date: r.date,
            pre_value: r.pre_value,
            post_value: r.post_value,
            deposit: r.deposit,
            requested_flow: r.requested_flow,
            withdrawal_clamped: r.withdrawal_clamped,
            fees: r.fees,
            spread_costs: r.spread_costs,
            turnover_one_sided: r.turnover_one_sided,
            turnover_two_sided: r.turnover_two_sided,
            n_constituents: r.n_constituents,
        }),
    )?;
    let trades = || result.reports.iter().flat_map(|r| r.trades.iter().map(move |t| (r.date, t)));
    write_csv(
        &dir.join("deltas.csv"),
        hash,
        DELTA_HEADERS,
        trades().map(|(date, t)| DeltaRow {
            date,
            asset: t.asset.clone(),
            delta: t.delta,
            trade_notional: t.trade_notional,
        }),
    )?;
    write_csv(
        &dir.join("trade_costs.csv"),
        hash,
        TRADE_COST_HEADERS,
        trades().map(|(date, t)| TradeCostRow {
            date,
            asset: t.asset.clone(),
            charged_notional: t.charged_notional,
            fee: t.fee,
            spread_fraction: t.spread_fraction,
            spread_cost: t.spread_cost,
        }),
    )?;
    write_csv(
        &dir.join("series.csv"),
        hash,
        SERIES_HEADERS,
        result.series.iter().map(|p| SeriesRow {
            date: p.date,
            etf_value: p.etf_value,
            index_value: p.replication_value,
            benchmark_value: p.benchmark_value,
            index_level: p.index_level,
        }),
    )?;
    write_csv(
        &dir.join("weights.csv"),
        hash,
        WEIGHT_HEADERS,
        result.states.iter().flat_map(|s| {
            s.constituents.iter().map(move |c| WeightRow {
                date: s.as_of,
                asset: c.asset.clone(),
                weight: c.weight,
            })
        }),
    )
}

/// One backtest run as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTables {
    pub label: String,
    pub reports: Vec<ReportRow>,
    pub deltas: Vec<DeltaRow>,
    pub costs: Vec<TradeCostRow>,
    pub series: Vec<SeriesRow>,
    pub weights: Vec<WeightRow>,
}

impl RunTables {
    pub fn read(dir: &Path, label: &str) -> Result<Self> {
        let need = |name: &str| {
            let p = dir.join(name);
            if p.is_file() {
                Ok(p)
            } else {
                Err(Error::InsufficientData(format!(
                    "missing backtest output {}; run `run-backtest` first",
                    p.display()
                )))
            }
        };
        Ok(RunTables {
            label: label.to_string(),
            reports: read_csv(&need("reports.csv")?)?,
            deltas: read_csv(&need("deltas.csv")?)?,
            costs: read_csv(&need("trade_costs.csv")?)?,
            series: read_csv(&need("series.csv")?)?,
            weights: read_csv(&need("weights.csv")?)?,
        })
    }

    /// Trade-size-weighted spread fraction per rebalance date with trades.
    pub fn weighted_spreads(&self) -> Vec<(NaiveDate, f64)> {
        let mut acc: BTreeMap<NaiveDate, (f64, f64)> = BTreeMap::new();
        for c in &self.costs {
            let e = acc.entry(c.date).or_default();
            e.0 += c.charged_notional * c.spread_fraction;
            e.1 += c.charged_notional;
        }
        acc.into_iter()
            .filter(|(_, (_, den))| *den > 0.0)
            .map(|(d, (num, den))| (d, num / den))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstituentCountRow {
    pub month: String,
    pub date: NaiveDate,
    pub n_constituents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPlotRow {
    pub a: String,
    pub date: NaiveDate,
    pub fees: f64,
    pub spread_costs: f64,
    pub total: f64,
    pub fee_rate: f64,
    pub spread_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotRow {
    pub a: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub a: String,
    pub date: NaiveDate,
    pub etf_value: f64,
    pub other_value: f64,
}

/// Quartiles of `values` (type-7 interpolation), `None` when empty.
pub fn boxplot(label: &str, values: &[f64]) -> Option<BoxplotRow> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(BoxplotRow {
        a: label.to_string(),
        n: v.len(),
        min: *v.first()?,
        q1: quantile_sorted(&v, 0.25)?,
        median: quantile_sorted(&v, 0.5)?,
        q3: quantile_sorted(&v, 0.75)?,
        max: *v.last()?,
    })
}

/// Writes the plot-data CSVs into `dir` from runs read back from disk.
/// `runs` must be non-empty; constituent and weight data come from the first.
pub fn write_plot_data(dir: &Path, hash: &str, runs: &[RunTables], highlight: &[AssetId]) -> Result<()> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InsufficientData("no backtest runs to report".into()))?;

    write_csv(
        &dir.join("constituent_counts.csv"),
        hash,
        &["month", "date", "n_constituents"],
        first.reports.iter().map(|r| ConstituentCountRow {
            month: format!("{:04}-{:02}", r.date.year(), r.date.month()),
            date: r.date,
            n_constituents: r.n_constituents,
        }),
    )?;

    let mut weights: BTreeMap<NaiveDate, BTreeMap<&AssetId, f64>> = BTreeMap::new();
    for w in &first.weights {
        weights.entry(w.date).or_default().insert(&w.asset, w.weight);
    }
    let other = AssetId::new("OTHER").expect("valid symbol");
    let mut rows = Vec::new();
    for (date, ws) in &weights {
        let mut shown = 0.0;
        for a in highlight {
            let w = ws.get(a).copied().unwrap_or(0.0);
            shown += w;
            rows.push(WeightRow { date: *date, asset: a.clone(), weight: w });
        }
        rows.push(WeightRow {
            date: *date,
            asset: other.clone(),
            weight: (1.0 - shown).max(0.0),
        });
    }
    write_csv(&dir.join("highlight_weights.csv"), hash, WEIGHT_HEADERS, rows)?;

    write_csv(
        &dir.join("deltas.csv"),
        hash,
        &["date", "asset", "delta"],
        first.deltas.iter().map(|d| (d.date, &d.asset, d.delta)),
    )?;

    let mut cost_rows = Vec::new();
    let mut box_rows = Vec::new();
    let mut vs_index = Vec::new();
    let mut vs_bench = Vec::new();
    for run in runs {
        let mut notional: BTreeMap<NaiveDate, f64> = BTreeMap::new();
        for c in &run.costs {
            *notional.entry(c.date).or_default() += c.charged_notional;
        }
        for r in &run.reports {
            let n = notional.get(&r.date).copied().unwrap_or(0.0);
            let rate = |x: f64| if n > 0.0 { x / n } else { 0.0 };
            cost_rows.push(CostPlotRow {
                a: run.label.clone(),
                date: r.date,
                fees: r.fees,
                spread_costs: r.spread_costs,
                total: r.fees + r.spread_costs,
                fee_rate: rate(r.fees),
                spread_rate: rate(r.spread_costs),
            });
        }
        let spreads: Vec<f64> = run.weighted_spreads().into_iter().map(|x| x.1).collect();
        if let Some(b) = boxplot(&run.label, &spreads) {
            box_rows.push(b);
        }
        for s in &run.series {
            vs_index.push(ComparisonRow {
                a: run.label.clone(),
                date: s.date,
                etf_value: s.etf_value,
                other_value: s.index_value,
            });
            vs_bench.push(ComparisonRow {
                a: run.label.clone(),
                date: s.date,
                etf_value: s.etf_value,
                other_value: s.benchmark_value,
            });
        }
    }
    write_csv(
        &dir.join("costs.csv"),
        hash,
        &["a", "date", "fees", "spread_costs", "total", "fee_rate", "spread_rate"],
        cost_rows,
    )?;
    write_csv(
        &dir.join("spread_boxplot.csv"),
        hash,
        &["a", "n", "min", "q1", "median", "q3", "max"],
        box_rows,
    )?;
    write_csv(
        &dir.join("etf_vs_index.csv"),
        hash,
        &["a", "date", "etf_value", "index_value"],
        vs_index,
    )?;
    write_csv(
        &dir.join("etf_vs_benchmark.csv"),
        hash,
        &["a", "date", "etf_value", "benchmark_value"],
        vs_bench,
    )
}
