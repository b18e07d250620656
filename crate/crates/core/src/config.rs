//! Run configuration: one TOML document, optional `key=value` overrides.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost::{FeeSchedule, FeeTier, DEFAULT_SPREAD_SHARE};
use crate::error::{Error, Result};
use crate::flows::FlowModelParams;
use crate::index::IndexParams;
use crate::market_data::{load_dataset, AssetId, DatasetPaths, MarketDataset, DEFAULT_STALENESS_DAYS};
use crate::simulator::{BacktestSettings, CostSettings};
use crate::spread::{
    extract_spread_observations, fit_quantile, PriceMean, QuantileFitOptions, QuantileLevel,
    ScalingExponent, SpreadCurve, SpreadObservation,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data: DataConfig,
    pub backtest: BacktestConfig,
    #[serde(default)]
    pub index: IndexParams,
    #[serde(default)]
    pub costs: CostsConfig,
    #[serde(default)]
    pub spread: SpreadConfig,
    #[serde(default)]
    pub flows: FlowsConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

/// Input files; relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub prices: PathBuf,
    pub volumes: PathBuf,
    pub attention: PathBuf,
    #[serde(default)]
    pub trades: Option<PathBuf>,
    #[serde(default = "default_staleness")]
    pub staleness_days: i64,
}

fn default_staleness() -> i64 {
    DEFAULT_STALENESS_DAYS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
    #[serde(default = "default_capital")]
    pub initial_capital: f64,
    #[serde(default = "default_benchmark")]
    pub benchmark: AssetId,
}

fn default_capital() -> f64 {
    1_000_000.0
}

fn default_benchmark() -> AssetId {
    AssetId::new("BTC").expect("valid symbol")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostsConfig {
    pub enabled: bool,
    pub spread_share: f64,
    /// Replaces the bundled fee schedule when present.
    pub fee_tiers: Option<Vec<FeeTier>>,
}

impl Default for CostsConfig {
    fn default() -> Self {
        CostsConfig {
            enabled: true,
            spread_share: DEFAULT_SPREAD_SHARE,
            fee_tiers: None,
        }
    }
}

impl CostsConfig {
    pub fn fee_schedule(&self) -> Result<FeeSchedule> {
        match &self.fee_tiers {
            Some(tiers) => FeeSchedule::new(tiers.clone()),
            None => Ok(FeeSchedule::default_schedule()),
        }
    }
}

/// Fixed reference curve, bypassing estimation from trades.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub intercept: f64,
    pub slope: f64,
    /// Measured from the dataset around the reference date when absent.
    #[serde(default)]
    pub reference_volume_24h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpreadConfig {
    pub enabled: bool,
    pub asset: AssetId,
    pub quantile: f64,
    /// Defaults to the backtest end date.
    pub reference_date: Option<NaiveDate>,
    pub exponents: Vec<ScalingExponent>,
    pub price_mean: PriceMean,
    pub curve: Option<CurveSpec>,
    /// JSON curve as written by `estimate-spreads`.
    pub curve_file: Option<PathBuf>,
}

impl Default for SpreadConfig {
    fn default() -> Self {
        SpreadConfig {
            enabled: true,
            asset: default_benchmark(),
            quantile: 0.95,
            reference_date: None,
            exponents: ScalingExponent::DEFAULT_GRID
                .iter()
                .map(|a| ScalingExponent::new(*a).expect("positive"))
                .collect(),
            price_mean: PriceMean::Equal,
            curve: None,
            curve_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowsConfig {
    pub enabled: bool,
    pub beta_up: f64,
    pub beta_down: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for FlowsConfig {
    fn default() -> Self {
        let p = FlowModelParams::default();
        FlowsConfig {
            enabled: true,
            beta_up: p.beta_up,
            beta_down: p.beta_down,
            noise_scale: p.noise_scale,
            seed: p.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Assets whose weights get their own plot-data file.
    pub highlight: Vec<AssetId>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            highlight: ["BTC", "ETH"]
                .iter()
                .map(|s| AssetId::new(*s).expect("valid symbol"))
                .collect(),
        }
    }
}

/// A parsed config with its location and provenance hash.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: Config,
    pub base_dir: PathBuf,
    /// Hex SHA-256 of the effective config in canonical JSON form.
    pub hash: String,
}

impl Config {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        dates_to_strings(&mut table);
        let config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.backtest.end < self.backtest.start {
            return Err(Error::Config("backtest.end precedes backtest.start".into()));
        }
        if !(self.backtest.initial_capital.is_finite() && self.backtest.initial_capital > 0.0) {
            return Err(Error::Config("backtest.initial_capital must be positive".into()));
        }
        if self.data.staleness_days < 0 {
            return Err(Error::Config("data.staleness_days must be non-negative".into()));
        }
        if !(self.costs.spread_share >= 0.0 && self.costs.spread_share <= 1.0) {
            return Err(Error::Config("costs.spread_share must lie in [0, 1]".into()));
        }
        self.costs.fee_schedule()?;
        QuantileLevel::level(self.spread.quantile)
            .map_err(|_| Error::Config("spread.quantile must lie in (0, 1)".into()))?;
        if self.spread.exponents.is_empty() {
            return Err(Error::Config("spread.exponents must not be empty".into()));
        }
        self.index.validate()?;
        self.flow_params().validate()
    }

    /// Canonical serialisation used for the provenance hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn flow_params(&self) -> FlowModelParams {
        FlowModelParams {
            initial_capital: self.backtest.initial_capital,
            beta_up: self.flows.beta_up,
            beta_down: self.flows.beta_down,
            noise_scale: self.flows.noise_scale,
            seed: self.flows.seed,
        }
    }

    pub fn reference_date(&self) -> NaiveDate {
        self.spread.reference_date.unwrap_or(self.backtest.end)
    }

    pub fn backtest_settings(&self, spread_curve: Option<SpreadCurve>) -> Result<BacktestSettings> {
        Ok(BacktestSettings {
            start: self.backtest.start,
            end: self.backtest.end,
            initial_capital: self.backtest.initial_capital,
            benchmark: self.backtest.benchmark.clone(),
            index: self.index.clone(),
            costs: CostSettings {
                enabled: self.costs.enabled,
                fee_schedule: self.costs.fee_schedule()?,
                spread_share: self.costs.spread_share,
                spread_curve,
            },
            flows: self.flows.enabled.then(|| self.flow_params()),
        })
    }
}

impl LoadedConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config = Config::from_toml_str(&text, overrides)?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let hash = config.hash();
        Ok(LoadedConfig { config, base_dir, hash })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dataset_paths(&self) -> DatasetPaths {
        let d = &self.config.data;
        DatasetPaths {
            prices: self.resolve(&d.prices),
            volumes: self.resolve(&d.volumes),
            attention: self.resolve(&d.attention),
            trades: d.trades.as_ref().map(|t| self.resolve(t)),
        }
    }

    pub fn load_dataset(&self) -> Result<MarketDataset> {
        Ok(load_dataset(&self.dataset_paths())?.with_staleness_days(self.config.data.staleness_days))
    }

    /// Spread observations for the configured reference asset.
    pub fn spread_observations(&self, dataset: &MarketDataset) -> Vec<SpreadObservation> {
        let fills: Vec<_> = dataset
            .trades()
            .iter()
            .filter(|f| f.asset == self.config.spread.asset)
            .cloned()
            .collect();
        extract_spread_observations(&fills, self.config.spread.price_mean)
    }

    /// Reference curve for the backtest: from `curve_file`, the inline
    /// `curve`, or a quantile fit on the trades, in that order. `None` when
    /// spread costs are off.
    pub fn spread_curve(&self, dataset: &MarketDataset) -> Result<Option<SpreadCurve>> {
        let c = &self.config;
        if !(c.costs.enabled && c.spread.enabled) {
            return Ok(None);
        }
        let asset = c.spread.asset.clone();
        let date = c.reference_date();
        if let Some(file) = &c.spread.curve_file {
            let path = self.resolve(file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let curve: SpreadCurve = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            return Ok(Some(curve));
        }
        if let Some(spec) = &c.spread.curve {
            let vol = match spec.reference_volume_24h {
                Some(v) => v,
                None => dataset.mean_volume_around(&asset, date, crate::spread::REFERENCE_WINDOW_DAYS)?,
            };
            return Ok(Some(SpreadCurve {
                asset,
                quantile: QuantileLevel::level(c.spread.quantile)?,
                intercept: spec.intercept,
                slope: spec.slope,
                reference_date: date,
                reference_volume_24h: vol,
            }));
        }
        let obs = self.spread_observations(dataset);
        let fit = fit_quantile(&obs, c.spread.quantile, &QuantileFitOptions::default())?;
        Ok(Some(SpreadCurve::with_reference(fit, dataset, asset, date)?))
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, falling back to a
/// bare string.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("non-empty");
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Bare TOML dates become strings so they deserialize like quoted ones.
fn dates_to_strings(table: &mut toml::Table) {
    for (_, v) in table.iter_mut() {
        match v {
            toml::Value::Datetime(d) => *v = toml::Value::String(d.to_string()),
            toml::Value::Table(t) => dates_to_strings(t),
            _ => {}
        }
    }
}
