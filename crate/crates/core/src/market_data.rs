//! Market data ingestion.
//!
//! Daily prices, market caps and 24h volumes per asset, a weekly attention
//! series, and optionally a tape of trade fills. Everything is validated at
//! load time and kept in a [`MarketDataset`] that is immutable afterwards.
//!
//! All monetary values are in the dataset's quote currency, which is USDT.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const QUOTE_CURRENCY: &str = "USDT";
pub const DEFAULT_STALENESS_DAYS: i64 = 3;
pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Ticker symbol of a cryptocurrency, e.g. `BTC`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AssetId(String);

impl AssetId {
    pub fn new(symbol: impl Into<String>) -> Result<Self> {
        let symbol = symbol.into();
        if symbol.is_empty() {
            return Err(Error::InvalidInput("empty asset symbol".into()));
        }
        let ok = symbol
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || matches!(c, '-' | '_' | '.'));
        if !ok {
            return Err(Error::InvalidInput(format!(
                "asset symbol `{symbol}` must be an uppercase ticker"
            )));
        }
        Ok(AssetId(symbol))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for AssetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AssetId::new(s)
    }
}

impl TryFrom<String> for AssetId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        AssetId::new(s)
    }
}

impl From<AssetId> for String {
    fn from(id: AssetId) -> String {
        id.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyObservation {
    pub date: NaiveDate,
    pub price: f64,
    pub market_cap: f64,
    /// `None` when the volume file has no row for this date.
    pub volume_24h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeFill {
    pub timestamp_ms: i64,
    pub asset: AssetId,
    pub taker_order_id: String,
    pub price: f64,
    pub quantity: f64,
}

/// All fills belonging to one taker order.
#[derive(Debug, Clone, PartialEq)]
pub struct FillGroup<'a> {
    pub asset: &'a AssetId,
    pub taker_order_id: &'a str,
    pub fills: Vec<&'a TradeFill>,
}

/// Partitions fills into taker orders keyed by `(asset, taker_order_id)`.
///
/// Groups are returned in order of their first fill.
pub fn group_fills(fills: &[TradeFill]) -> Vec<FillGroup<'_>> {
    let mut index: BTreeMap<(&AssetId, &str), usize> = BTreeMap::new();
    let mut groups: Vec<FillGroup<'_>> = Vec::new();
    for fill in fills {
        let key = (&fill.asset, fill.taker_order_id.as_str());
        match index.get(&key) {
            Some(&i) => groups[i].fills.push(fill),
            None => {
                index.insert(key, groups.len());
                groups.push(FillGroup {
                    asset: &fill.asset,
                    taker_order_id: &fill.taker_order_id,
                    fills: vec![fill],
                });
            }
        }
    }
    groups
}

/// Relative search interest over time, scores in `[0, 100]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionSeries {
    points: Vec<(NaiveDate, f64)>,
}

impl AttentionSeries {
    pub fn new(points: Vec<(NaiveDate, f64)>) -> Result<Self> {
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidInput(format!(
                    "attention dates not strictly increasing at {}",
                    w[1].0
                )));
            }
        }
        if let Some((d, s)) = points
            .iter()
            .find(|(_, s)| !s.is_finite() || *s < 0.0 || *s > 100.0)
        {
            return Err(Error::InvalidInput(format!(
                "attention score {s} on {d} outside [0, 100]"
            )));
        }
        Ok(AttentionSeries { points })
    }

    pub fn points(&self) -> &[(NaiveDate, f64)] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.points.first().map(|p| p.0)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.points.last().map(|p| p.0)
    }

    /// Mean score over the half-open window `(after, until]`, `None` if empty.
    pub fn mean_between(&self, after: NaiveDate, until: NaiveDate) -> Option<f64> {
        let (sum, n) = self
            .points
            .iter()
            .filter(|(d, _)| *d > after && *d <= until)
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

/// Validated, date-aligned market data.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketDataset {
    observations: BTreeMap<AssetId, BTreeMap<NaiveDate, DailyObservation>>,
    attention: AttentionSeries,
    trades: Vec<TradeFill>,
    calendar: Vec<NaiveDate>,
    gaps: BTreeMap<AssetId, Vec<NaiveDate>>,
    staleness_days: i64,
}

impl MarketDataset {
    /// Builds a dataset from already-parsed parts.
    pub fn from_parts(
        observations: Vec<(AssetId, DailyObservation)>,
        attention: AttentionSeries,
        trades: Vec<TradeFill>,
    ) -> Result<Self> {
        let mut by_asset: BTreeMap<AssetId, BTreeMap<NaiveDate, DailyObservation>> =
            BTreeMap::new();
        for (asset, obs) in observations {
            validate_observation(&asset, &obs)?;
            let series = by_asset.entry(asset.clone()).or_default();
            if series.insert(obs.date, obs).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate observation for {asset} on {}",
                    obs.date
                )));
            }
        }
        for w in trades.windows(2) {
            if w[1].timestamp_ms < w[0].timestamp_ms {
                return Err(Error::InvalidInput(format!(
                    "trade timestamps not sorted at {}",
                    w[1].timestamp_ms
                )));
            }
        }
        for t in &trades {
            validate_fill(t).map_err(Error::InvalidInput)?;
        }
        Ok(Self::assemble(by_asset, attention, trades))
    }

    fn assemble(
        observations: BTreeMap<AssetId, BTreeMap<NaiveDate, DailyObservation>>,
        attention: AttentionSeries,
        trades: Vec<TradeFill>,
    ) -> Self {
        let calendar: Vec<NaiveDate> = observations
            .values()
            .flat_map(|s| s.keys().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut gaps = BTreeMap::new();
        for (asset, series) in &observations {
            let (Some(first), Some(last)) = (series.keys().next(), series.keys().next_back())
            else {
                continue;
            };
            let missing: Vec<NaiveDate> = calendar
                .iter()
                .filter(|d| *d >= first && *d <= last && !series.contains_key(d))
                .copied()
                .collect();
            if !missing.is_empty() {
                gaps.insert(asset.clone(), missing);
            }
        }
        MarketDataset {
            observations,
            attention,
            trades,
            calendar,
            gaps,
            staleness_days: DEFAULT_STALENESS_DAYS,
        }
    }

    pub fn with_staleness_days(mut self, days: i64) -> Self {
        self.staleness_days = days.max(0);
        self
    }

    pub fn staleness_days(&self) -> i64 {
        self.staleness_days
    }

    pub fn assets(&self) -> impl Iterator<Item = &AssetId> {
        self.observations.keys()
    }

    pub fn contains(&self, asset: &AssetId) -> bool {
        self.observations.contains_key(asset)
    }

    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn attention(&self) -> &AttentionSeries {
        &self.attention
    }

    pub fn trades(&self) -> &[TradeFill] {
        &self.trades
    }

    pub fn fill_groups(&self) -> Vec<FillGroup<'_>> {
        group_fills(&self.trades)
    }

    /// Calendar dates inside an asset's lifetime for which it has no row.
    pub fn gap_dates(&self, asset: &AssetId) -> &[NaiveDate] {
        self.gaps.get(asset).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn series(&self, asset: &AssetId) -> Result<&BTreeMap<NaiveDate, DailyObservation>> {
        self.observations
            .get(asset)
            .ok_or_else(|| Error::UnknownAsset(asset.clone()))
    }

    /// Observation on exactly `date`, if present.
    pub fn exact(&self, asset: &AssetId, date: NaiveDate) -> Option<&DailyObservation> {
        self.observations.get(asset)?.get(&date)
    }

    /// Observation on `date`, or the most recent earlier one inside the
    /// staleness window. Never looks forward in time.
    pub fn observation_at(&self, asset: &AssetId, date: NaiveDate) -> Result<&DailyObservation> {
        let series = self.series(asset)?;
        match series.range(..=date).next_back() {
            Some((d, obs)) if (date - *d).num_days() <= self.staleness_days => Ok(obs),
            _ => Err(Error::StaleObservation {
                asset: asset.clone(),
                date,
                window_days: self.staleness_days,
            }),
        }
    }

    pub fn price_at(&self, asset: &AssetId, date: NaiveDate) -> Result<f64> {
        Ok(self.observation_at(asset, date)?.price)
    }

    pub fn volume_at(&self, asset: &AssetId, date: NaiveDate) -> Result<f64> {
        self.observation_at(asset, date)?
            .volume_24h
            .ok_or_else(|| Error::MissingValue {
                what: "24h volume",
                asset: asset.clone(),
                date,
            })
    }

    /// Mean 24h volume over all observations within `half_window_days` of `date`.
    pub fn mean_volume_around(
        &self,
        asset: &AssetId,
        date: NaiveDate,
        half_window_days: i64,
    ) -> Result<f64> {
        let series = self.series(asset)?;
        let lo = date - chrono::Duration::days(half_window_days);
        let hi = date + chrono::Duration::days(half_window_days);
        let vols: Vec<f64> = series
            .range(lo..=hi)
            .filter_map(|(_, o)| o.volume_24h)
            .collect();
        if vols.is_empty() {
            return Err(Error::MissingValue {
                what: "24h volume around reference date",
                asset: asset.clone(),
                date,
            });
        }
        Ok(vols.iter().sum::<f64>() / vols.len() as f64)
    }

    /// First date of each calendar month in `[start, end]` on which every
    /// asset listed during that month has an observation.
    pub fn rebalance_dates(&self, start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
        let mut out = Vec::new();
        let mut month: Option<(i32, u32)> = None;
        let in_range: Vec<NaiveDate> = self
            .calendar
            .iter()
            .copied()
            .filter(|d| *d >= start && *d <= end)
            .collect();
        for &date in &in_range {
            let key = (date.year(), date.month());
            if month == Some(key) {
                continue;
            }
            let listed = self.observations.values().filter(|s| {
                s.keys()
                    .any(|d| d.year() == key.0 && d.month() == key.1)
            });
            let complete = listed.clone().all(|s| s.contains_key(&date));
            if complete {
                out.push(date);
                month = Some(key);
            }
        }
        out
    }

    /// Writes `prices.csv`, `volumes.csv`, `attention.csv` and `trades.csv`
    /// into `dir` in the same schema [`load_dataset`] reads.
    pub fn write_csv_dir(&self, dir: &Path) -> Result<DatasetPaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = DatasetPaths {
            prices: dir.join("prices.csv"),
            volumes: dir.join("volumes.csv"),
            attention: dir.join("attention.csv"),
            trades: Some(dir.join("trades.csv")),
        };
        let mut prices = String::from("date,asset,price,market_cap\n");
        let mut volumes = String::from("date,asset,volume_24h\n");
        for date in &self.calendar {
            for (asset, series) in &self.observations {
                if let Some(o) = series.get(date) {
                    prices.push_str(&format!(
                        "{},{},{},{}\n",
                        date.format(DATE_FORMAT),
                        asset,
                        o.price,
                        o.market_cap
                    ));
                    if let Some(v) = o.volume_24h {
                        volumes.push_str(&format!("{},{},{}\n", date.format(DATE_FORMAT), asset, v));
                    }
                }
            }
        }
        let mut attention = String::from("date,score\n");
        for (d, s) in self.attention.points() {
            attention.push_str(&format!("{},{}\n", d.format(DATE_FORMAT), s));
        }
        let mut trades = String::from("timestamp_ms,asset,taker_order_id,price,quantity\n");
        for t in &self.trades {
            trades.push_str(&format!(
                "{},{},{},{},{}\n",
                t.timestamp_ms, t.asset, t.taker_order_id, t.price, t.quantity
            ));
        }
        write_file(&paths.prices, &prices)?;
        write_file(&paths.volumes, &volumes)?;
        write_file(&paths.attention, &attention)?;
        write_file(paths.trades.as_ref().expect("set above"), &trades)?;
        Ok(paths)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}

fn validate_observation(asset: &AssetId, o: &DailyObservation) -> Result<()> {
    if !(o.price.is_finite() && o.price > 0.0) {
        return Err(Error::InvalidInput(format!(
            "non-positive price {} for {asset} on {}",
            o.price, o.date
        )));
    }
    if !(o.market_cap.is_finite() && o.market_cap >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "negative market cap for {asset} on {}",
            o.date
        )));
    }
    if let Some(v) = o.volume_24h {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "negative volume for {asset} on {}",
                o.date
            )));
        }
    }
    Ok(())
}

fn validate_fill(t: &TradeFill) -> std::result::Result<(), String> {
    if !(t.price.is_finite() && t.price > 0.0) {
        return Err(format!("fill price must be positive, got {}", t.price));
    }
    if !(t.quantity.is_finite() && t.quantity > 0.0) {
        return Err(format!("fill quantity must be positive, got {}", t.quantity));
    }
    if t.taker_order_id.is_empty() {
        return Err("empty taker_order_id".into());
    }
    Ok(())
}

/// Input file locations for [`load_dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub prices: PathBuf,
    pub volumes: PathBuf,
    pub attention: PathBuf,
    #[serde(default)]
    pub trades: Option<PathBuf>,
}

pub fn load_dataset(paths: &DatasetPaths) -> Result<MarketDataset> {
    let mut observations = read_prices(&paths.prices)?;
    read_volumes(&paths.volumes, &mut observations)?;
    let attention = read_attention(&paths.attention)?;
    let trades = match &paths.trades {
        Some(p) => read_trades(p)?,
        None => Vec::new(),
    };
    Ok(MarketDataset::assemble(observations, attention, trades))
}

struct CsvTable {
    file: PathBuf,
    reader: csv::Reader<File>,
    columns: Vec<usize>,
    quote_column: Option<usize>,
}

impl CsvTable {
    fn open(path: &Path, required: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| malformed(path, 1, "header", e.to_string()))?
            .clone();
        let mut columns = Vec::with_capacity(required.len());
        for name in required {
            let idx = headers.iter().position(|h| h == *name).ok_or_else(|| {
                malformed(path, 1, name, format!("missing required column `{name}`"))
            })?;
            columns.push(idx);
        }
        let quote_column = headers.iter().position(|h| h == "quote");
        Ok(CsvTable {
            file: path.to_path_buf(),
            reader,
            columns,
            quote_column,
        })
    }

    fn for_each_row(
        &mut self,
        names: &[&str],
        mut f: impl FnMut(u64, &[&str]) -> std::result::Result<(), (usize, String)>,
    ) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            let more = self.reader.read_record(&mut record).map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                malformed(&self.file, line, "row", e.to_string())
            })?;
            if !more {
                return Ok(());
            }
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if let Some(q) = self.quote_column {
                let quote = record.get(q).unwrap_or("");
                if quote != QUOTE_CURRENCY {
                    return Err(malformed(
                        &self.file,
                        line,
                        "quote",
                        format!("quote currency `{quote}` differs from {QUOTE_CURRENCY}"),
                    ));
                }
            }
            let mut fields = Vec::with_capacity(self.columns.len());
            for (i, &c) in self.columns.iter().enumerate() {
                match record.get(c) {
                    Some(v) => fields.push(v),
                    None => {
                        return Err(malformed(&self.file, line, names[i], "missing field".into()))
                    }
                }
            }
            f(line, &fields).map_err(|(col, msg)| malformed(&self.file, line, names[col], msg))?;
        }
    }
}

fn malformed(file: &Path, line: u64, column: &str, message: String) -> Error {
    Error::Malformed {
        file: file.to_path_buf(),
        line,
        column: column.to_string(),
        message,
    }
}

fn parse_date(s: &str, col: usize) -> std::result::Result<NaiveDate, (usize, String)> {
    NaiveDate::parse_from_str(s, DATE_FORMAT).map_err(|e| (col, format!("bad date `{s}`: {e}")))
}

fn parse_num(s: &str, col: usize) -> std::result::Result<f64, (usize, String)> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err((col, format!("bad number `{s}`"))),
    }
}

fn parse_asset(s: &str, col: usize) -> std::result::Result<AssetId, (usize, String)> {
    AssetId::new(s).map_err(|e| (col, e.to_string()))
}

type SeriesMap = BTreeMap<AssetId, BTreeMap<NaiveDate, DailyObservation>>;

fn read_prices(path: &Path) -> Result<SeriesMap> {
    const COLS: [&str; 4] = ["date", "asset", "price", "market_cap"];
    let mut table = CsvTable::open(path, &COLS)?;
    let mut out: SeriesMap = BTreeMap::new();
    let mut duplicate: Option<(u64, AssetId, NaiveDate)> = None;
    table.for_each_row(&COLS, |line, f| {
        let date = parse_date(f[0], 0)?;
        let asset = parse_asset(f[1], 1)?;
        let price = parse_num(f[2], 2)?;
        if price <= 0.0 {
            return Err((2, format!("price must be positive, got {price}")));
        }
        let market_cap = parse_num(f[3], 3)?;
        if market_cap < 0.0 {
            return Err((3, format!("market cap must be non-negative, got {market_cap}")));
        }
        let series = out.entry(asset.clone()).or_default();
        if series.contains_key(&date) {
            duplicate.get_or_insert((line, asset, date));
            return Err((1, String::new()));
        }
        series.insert(
            date,
            DailyObservation {
                date,
                price,
                market_cap,
                volume_24h: None,
            },
        );
        Ok(())
    })
    .map_err(|e| dup_or(e, path, duplicate.take()))?;
    Ok(out)
}

fn dup_or(e: Error, path: &Path, dup: Option<(u64, AssetId, NaiveDate)>) -> Error {
    match dup {
        Some((line, asset, date)) => Error::DuplicateKey {
            file: path.to_path_buf(),
            line,
            asset,
            date,
        },
        None => e,
    }
}

fn read_volumes(path: &Path, observations: &mut SeriesMap) -> Result<()> {
    const COLS: [&str; 3] = ["date", "asset", "volume_24h"];
    let mut table = CsvTable::open(path, &COLS)?;
    let mut duplicate: Option<(u64, AssetId, NaiveDate)> = None;
    table
        .for_each_row(&COLS, |line, f| {
            let date = parse_date(f[0], 0)?;
            let asset = parse_asset(f[1], 1)?;
            let volume = parse_num(f[2], 2)?;
            if volume < 0.0 {
                return Err((2, format!("volume must be non-negative, got {volume}")));
            }
            let obs = observations
                .get_mut(&asset)
                .and_then(|s| s.get_mut(&date))
                .ok_or_else(|| (1, format!("no price row for {asset} on {date}")))?;
            if obs.volume_24h.is_some() {
                duplicate.get_or_insert((line, asset, date));
                return Err((1, String::new()));
            }
            obs.volume_24h = Some(volume);
            Ok(())
        })
        .map_err(|e| dup_or(e, path, duplicate.take()))
}

fn read_attention(path: &Path) -> Result<AttentionSeries> {
    const COLS: [&str; 2] = ["date", "score"];
    let mut table = CsvTable::open(path, &COLS)?;
    let mut points: Vec<(NaiveDate, f64)> = Vec::new();
    table.for_each_row(&COLS, |_, f| {
        let date = parse_date(f[0], 0)?;
        let score = parse_num(f[1], 1)?;
        if !(0.0..=100.0).contains(&score) {
            return Err((1, format!("score {score} outside [0, 100]")));
        }
        if let Some((prev, _)) = points.last() {
            if date <= *prev {
                return Err((0, format!("date {date} not after {prev}")));
            }
        }
        points.push((date, score));
        Ok(())
    })?;
    AttentionSeries::new(points)
}

fn read_trades(path: &Path) -> Result<Vec<TradeFill>> {
    const COLS: [&str; 5] = ["timestamp_ms", "asset", "taker_order_id", "price", "quantity"];
    let mut table = CsvTable::open(path, &COLS)?;
    let mut out: Vec<TradeFill> = Vec::new();
    let mut unsorted: Option<(u64, i64)> = None;
    table
        .for_each_row(&COLS, |line, f| {
            let timestamp_ms: i64 = f[0]
                .parse()
                .map_err(|_| (0, format!("bad timestamp `{}`", f[0])))?;
            if let Some(prev) = out.last() {
                if timestamp_ms < prev.timestamp_ms {
                    unsorted = Some((line, timestamp_ms));
                    return Err((0, String::new()));
                }
            }
            let fill = TradeFill {
                timestamp_ms,
                asset: parse_asset(f[1], 1)?,
                taker_order_id: f[2].to_string(),
                price: parse_num(f[3], 3)?,
                quantity: parse_num(f[4], 4)?,
            };
            validate_fill(&fill).map_err(|m| {
                let col = if m.contains("price") {
                    3
                } else if m.contains("quantity") {
                    4
                } else {
                    2
                };
                (col, m)
            })?;
            out.push(fill);
            Ok(())
        })
        .map_err(|e| match unsorted {
            Some((line, timestamp_ms)) => Error::UnsortedTrades {
                file: path.to_path_buf(),
                line,
                timestamp_ms,
            },
            None => e,
        })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FORMAT).unwrap()
    }

    fn asset(s: &str) -> AssetId {
        AssetId::new(s).unwrap()
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn fixture(dir: &Path, prices: &str, trades: Option<&str>) -> DatasetPaths {
        DatasetPaths {
            prices: write(dir, "prices.csv", prices),
            volumes: write(
                dir,
                "volumes.csv",
                "date,asset,volume_24h\n2021-01-01,BTC,100\n2021-01-02,BTC,110\n",
            ),
            attention: write(dir, "attention.csv", "date,score\n2021-01-01,50\n"),
            trades: trades.map(|t| write(dir, "trades.csv", t)),
        }
    }

    const PRICES: &str = "date,asset,price,market_cap\n\
        2021-01-01,BTC,100,1000\n2021-01-01,ETH,10,500\n\
        2021-01-02,BTC,101,1010\n2021-01-02,ETH,11,550\n\
        2021-01-03,BTC,102,1020\n2021-01-03,ETH,12,600\n";

    #[test]
    fn loads_minimal_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let ds = load_dataset(&fixture(dir.path(), PRICES, None)).unwrap();
        assert_eq!(ds.calendar().len(), 3);
        assert_eq!(ds.assets().count(), 2);
        assert_eq!(ds.exact(&asset("BTC"), d("2021-01-02")).unwrap().volume_24h, Some(110.0));
        assert_eq!(ds.exact(&asset("BTC"), d("2021-01-03")).unwrap().volume_24h, None);
    }

    #[test]
    fn zero_price_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let prices = "date,asset,price,market_cap\n2021-01-01,BTC,100,1000\n2021-01-02,BTC,0,1000\n";
        let err = load_dataset(&fixture(dir.path(), prices, None)).unwrap_err();
        match err {
            Error::Malformed { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "price");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn non_numeric_field_reports_column() {
        let dir = tempfile::tempdir().unwrap();
        let prices = "date,asset,price,market_cap\n2021-01-01,BTC,100,abc\n";
        let err = load_dataset(&fixture(dir.path(), prices, None)).unwrap_err();
        assert!(matches!(err, Error::Malformed { ref column, line: 2, .. } if column == "market_cap"));
    }

    #[test]
    fn duplicate_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let prices = "date,asset,price,market_cap\n2021-01-01,BTC,100,1000\n2021-01-01,BTC,101,1000\n";
        let err = load_dataset(&fixture(dir.path(), prices, None)).unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { line: 3, .. }), "{err}");
    }

    #[test]
    fn mixed_quote_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let prices = "date,asset,price,market_cap,quote\n2021-01-01,BTC,100,1000,USDT\n2021-01-02,BTC,100,1000,USD\n";
        let err = load_dataset(&fixture(dir.path(), prices, None)).unwrap_err();
        assert!(matches!(err, Error::Malformed { ref column, line: 3, .. } if column == "quote"));
    }

    #[test]
    fn trades_group_by_taker_order() {
        let dir = tempfile::tempdir().unwrap();
        let trades = "timestamp_ms,asset,taker_order_id,price,quantity\n\
            1,BTC,a,100,1\n2,BTC,b,100,1\n2,BTC,a,101,1\n3,BTC,c,100,2\n4,BTC,d,99,1\n";
        let ds = load_dataset(&fixture(dir.path(), PRICES, Some(trades))).unwrap();
        let groups = ds.fill_groups();
        assert_eq!(groups.len(), 4);
        assert_eq!(groups.iter().map(|g| g.fills.len()).sum::<usize>(), 5);
        assert_eq!(groups[0].fills.len(), 2);
    }

    #[test]
    fn unsorted_trades_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let trades = "timestamp_ms,asset,taker_order_id,price,quantity\n5,BTC,a,100,1\n4,BTC,b,100,1\n";
        let err = load_dataset(&fixture(dir.path(), PRICES, Some(trades))).unwrap_err();
        assert!(matches!(err, Error::UnsortedTrades { line: 3, timestamp_ms: 4, .. }));
    }

    #[test]
    fn staleness_fallback() {
        let obs = |date: &str, price: f64| {
            (
                asset("BTC"),
                DailyObservation {
                    date: d(date),
                    price,
                    market_cap: 1.0,
                    volume_24h: None,
                },
            )
        };
        let ds = MarketDataset::from_parts(
            vec![obs("2021-01-01", 1.0), obs("2021-01-02", 2.0), obs("2021-01-08", 3.0)],
            AttentionSeries::default(),
            vec![],
        )
        .unwrap();
        let btc = asset("BTC");
        assert_eq!(ds.observation_at(&btc, d("2021-01-02")).unwrap().price, 2.0);
        assert_eq!(ds.observation_at(&btc, d("2021-01-03")).unwrap().price, 2.0);
        assert_eq!(ds.observation_at(&btc, d("2021-01-05")).unwrap().price, 2.0);
        assert!(matches!(
            ds.observation_at(&btc, d("2021-01-07")),
            Err(Error::StaleObservation { .. })
        ));
        assert!(ds.observation_at(&btc, d("2020-12-31")).is_err());
        assert_eq!(ds.gap_dates(&btc), &[] as &[NaiveDate]);
    }

    #[test]
    fn gaps_are_flagged() {
        let mk = |a: &str, date: &str| {
            (
                asset(a),
                DailyObservation {
                    date: d(date),
                    price: 1.0,
                    market_cap: 1.0,
                    volume_24h: Some(1.0),
                },
            )
        };
        let ds = MarketDataset::from_parts(
            vec![
                mk("BTC", "2021-01-01"),
                mk("BTC", "2021-01-02"),
                mk("BTC", "2021-01-03"),
                mk("XRP", "2021-01-01"),
                mk("XRP", "2021-01-03"),
            ],
            AttentionSeries::default(),
            vec![],
        )
        .unwrap();
        assert_eq!(ds.gap_dates(&asset("XRP")), &[d("2021-01-02")]);
        assert!(ds.gap_dates(&asset("BTC")).is_empty());
        assert_eq!(
            ds.rebalance_dates(d("2021-01-01"), d("2021-01-31")),
            vec![d("2021-01-01")]
        );
        assert_eq!(
            ds.rebalance_dates(d("2021-01-02"), d("2021-01-31")),
            vec![d("2021-01-03")]
        );
    }

    #[test]
    fn attention_validation() {
        assert!(AttentionSeries::new(vec![(d("2021-01-02"), 1.0), (d("2021-01-01"), 1.0)]).is_err());
        assert!(AttentionSeries::new(vec![(d("2021-01-01"), 101.0)]).is_err());
        let a = AttentionSeries::new(vec![
            (d("2021-01-01"), 10.0),
            (d("2021-01-08"), 20.0),
            (d("2021-01-15"), 30.0),
        ])
        .unwrap();
        assert_eq!(a.mean_between(d("2021-01-01"), d("2021-01-15")), Some(25.0));
        assert_eq!(a.mean_between(d("2021-01-15"), d("2021-02-15")), None);
    }

    #[test]
    fn asset_symbols_validated() {
        assert!(AssetId::new("").is_err());
        assert!(AssetId::new("btc").is_err());
        assert!(AssetId::new("BTC").is_ok());
    }
}
