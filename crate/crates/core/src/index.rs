//! Market-cap-weighted Laspeyres index with AIC-driven constituent count.
//!
//! The index level is `sum_i P_it * Q_i / divisor`. Base quantities `Q_i` are
//! the implied supplies (`market_cap / price`) fixed on the last reweight or
//! reconstitution date, and the divisor is re-chained on each of those dates
//! so the published level is continuous.

use std::collections::BTreeMap;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{AssetId, MarketDataset};

pub type PriceMap = BTreeMap<AssetId, f64>;

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DateRange { start, end }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        d >= self.start && d <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constituent {
    pub asset: AssetId,
    pub weight: f64,
    pub base_quantity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexState {
    pub as_of: NaiveDate,
    /// Sorted by market cap, largest first.
    pub constituents: Vec<Constituent>,
    pub divisor: f64,
}

impl IndexState {
    /// Cap-weighted state whose level on `as_of` equals `level`.
    ///
    /// `members` holds `(asset, price, market_cap)` and is re-sorted by cap.
    pub fn from_market_caps(
        as_of: NaiveDate,
        mut members: Vec<(AssetId, f64, f64)>,
        level: f64,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidInput("index needs at least one constituent".into()));
        }
        if !(level.is_finite() && level > 0.0) {
            return Err(Error::InvalidInput(format!("index level must be positive, got {level}")));
        }
        sort_by_cap(&mut members, |m| (&m.0, m.2));
        let total_cap: f64 = members.iter().map(|m| m.2).sum();
        if !(total_cap > 0.0) {
            return Err(Error::InvalidInput(format!(
                "constituents on {as_of} have zero total market cap"
            )));
        }
        let constituents: Vec<Constituent> = members
            .iter()
            .map(|(asset, price, cap)| Constituent {
                asset: asset.clone(),
                weight: cap / total_cap,
                base_quantity: cap / price,
            })
            .collect();
        let prices: PriceMap = members.iter().map(|(a, p, _)| (a.clone(), *p)).collect();
        let mut state = IndexState {
            as_of,
            constituents,
            divisor: 1.0,
        };
        state.divisor = state.basket_value(&prices)? / level;
        Ok(state)
    }

    pub fn weight(&self, asset: &AssetId) -> f64 {
        self.constituents
            .iter()
            .find(|c| &c.asset == asset)
            .map_or(0.0, |c| c.weight)
    }

    pub fn weights(&self) -> BTreeMap<AssetId, f64> {
        self.constituents
            .iter()
            .map(|c| (c.asset.clone(), c.weight))
            .collect()
    }

    pub fn assets(&self) -> impl Iterator<Item = &AssetId> {
        self.constituents.iter().map(|c| &c.asset)
    }

    pub fn len(&self) -> usize {
        self.constituents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constituents.is_empty()
    }

    fn basket_value(&self, prices: &PriceMap) -> Result<f64> {
        let mut total = 0.0;
        for c in &self.constituents {
            let p = *prices.get(&c.asset).ok_or_else(|| Error::MissingValue {
                what: "price",
                asset: c.asset.clone(),
                date: self.as_of,
            })?;
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "non-positive price {p} for {}",
                    c.asset
                )));
            }
            total += p * c.base_quantity;
        }
        Ok(total)
    }
}

fn sort_by_cap<T>(items: &mut [T], key: impl Fn(&T) -> (&AssetId, f64)) {
    items.sort_by(|a, b| {
        let (ia, ca) = key(a);
        let (ib, cb) = key(b);
        cb.total_cmp(&ca).then_with(|| ia.cmp(ib))
    });
}

/// Laspeyres level `sum_i P_it * Q_i / divisor`.
pub fn index_value(state: &IndexState, prices: &PriceMap) -> Result<f64> {
    Ok(state.basket_value(prices)? / state.divisor)
}

/// Prices for `assets` on `date`, using the dataset's staleness fallback.
pub fn prices_at<'a>(
    dataset: &MarketDataset,
    assets: impl IntoIterator<Item = &'a AssetId>,
    date: NaiveDate,
) -> Result<PriceMap> {
    assets
        .into_iter()
        .map(|a| Ok((a.clone(), dataset.price_at(a, date)?)))
        .collect()
}

pub fn index_value_at(state: &IndexState, dataset: &MarketDataset, date: NaiveDate) -> Result<f64> {
    index_value(state, &prices_at(dataset, state.assets(), date)?)
}

/// Aligned daily prices and caps for assets with complete data over a range,
/// ranked by market cap on the first date.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    pub ranked: Vec<AssetId>,
    pub dates: Vec<NaiveDate>,
    prices: Vec<Vec<f64>>,
    caps: Vec<Vec<f64>>,
}

impl ReturnPanel {
    pub fn build(dataset: &MarketDataset, range: DateRange) -> Result<Self> {
        if range.end < range.start {
            return Err(Error::InvalidInput(format!(
                "empty date range {}..{}",
                range.start, range.end
            )));
        }
        let dates: Vec<NaiveDate> = dataset
            .calendar()
            .iter()
            .copied()
            .filter(|d| range.contains(*d))
            .collect();
        if dates.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 dates in {}..{}, found {}",
                range.start,
                range.end,
                dates.len()
            )));
        }
        let mut rows: Vec<(AssetId, Vec<f64>, Vec<f64>)> = Vec::new();
        for asset in dataset.assets() {
            let series = dataset.series(asset)?;
            let obs: Option<Vec<_>> = dates.iter().map(|d| series.get(d)).collect();
            if let Some(obs) = obs {
                rows.push((
                    asset.clone(),
                    obs.iter().map(|o| o.price).collect(),
                    obs.iter().map(|o| o.market_cap).collect(),
                ));
            }
        }
        if rows.is_empty() {
            return Err(Error::InsufficientData(format!(
                "no asset has complete data over {}..{}",
                range.start, range.end
            )));
        }
        sort_by_cap(&mut rows, |r| (&r.0, r.2[0]));
        let mut ranked = Vec::with_capacity(rows.len());
        let mut prices = Vec::with_capacity(rows.len());
        let mut caps = Vec::with_capacity(rows.len());
        for (a, p, c) in rows {
            ranked.push(a);
            prices.push(p);
            caps.push(c);
        }
        Ok(ReturnPanel {
            ranked,
            dates,
            prices,
            caps,
        })
    }

    /// Number of assets with complete data (`K`).
    pub fn asset_count(&self) -> usize {
        self.ranked.len()
    }

    /// Daily log-returns of the cap-weighted portfolio of the top `k` assets.
    ///
    /// Each day's gross return is the previous day's cap-weighted mean of the
    /// price relatives.
    pub fn portfolio_returns(&self, k: usize) -> Result<Vec<f64>> {
        if k == 0 || k > self.ranked.len() {
            return Err(Error::InsufficientData(format!(
                "portfolio size {k} not in 1..={}",
                self.ranked.len()
            )));
        }
        let mut out = Vec::with_capacity(self.dates.len() - 1);
        for t in 1..self.dates.len() {
            let mut weighted = 0.0;
            let mut total = 0.0;
            for i in 0..k {
                let cap = self.caps[i][t - 1];
                weighted += cap * (self.prices[i][t] / self.prices[i][t - 1]);
                total += cap;
            }
            if !(total > 0.0) {
                return Err(Error::InsufficientData(format!(
                    "top-{k} portfolio has zero market cap on {}",
                    self.dates[t - 1]
                )));
            }
            out.push((weighted / total).ln());
        }
        Ok(out)
    }
}

pub fn portfolio_log_returns(dataset: &MarketDataset, k: usize, range: DateRange) -> Result<Vec<f64>> {
    ReturnPanel::build(dataset, range)?.portfolio_returns(k)
}

/// Default relative tracking resolution used to floor the residual variance.
pub const DEFAULT_TRACKING_RESOLUTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub k_star: usize,
    pub candidate_ks: Vec<usize>,
    pub aic_values: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub ranked_assets: Vec<AssetId>,
}

/// `-log L + 2k` for i.i.d. Gaussian residuals with MLE variance, the
/// variance floored at `variance_floor`.
pub fn gaussian_aic(residuals: &[f64], k: usize, variance_floor: f64) -> f64 {
    let t = residuals.len() as f64;
    let mean_sq = residuals.iter().map(|r| r * r).sum::<f64>() / t;
    let var = mean_sq.max(variance_floor);
    0.5 * t * ((2.0 * std::f64::consts::PI * var).ln() + 1.0) + 2.0 * k as f64
}

/// Residual variance floor: `resolution^2` times the market's mean-square return.
pub fn variance_floor(market_returns: &[f64], resolution: f64) -> f64 {
    let ms = market_returns.iter().map(|r| r * r).sum::<f64>() / market_returns.len() as f64;
    (resolution * resolution * ms).max(1e-300)
}

/// Chooses the constituent count minimising the AIC distance between the
/// top-k portfolio and the total market. Ties go to the smaller k.
pub fn select_constituent_count(
    dataset: &MarketDataset,
    candidate_ks: &[usize],
    range: DateRange,
    tracking_resolution: f64,
) -> Result<SelectionResult> {
    let panel = ReturnPanel::build(dataset, range)?;
    select_on_panel(&panel, candidate_ks, tracking_resolution)
}

pub fn select_on_panel(
    panel: &ReturnPanel,
    candidate_ks: &[usize],
    tracking_resolution: f64,
) -> Result<SelectionResult> {
    if candidate_ks.is_empty() {
        return Err(Error::InvalidInput("no candidate constituent counts".into()));
    }
    let mut ks = candidate_ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let market = panel.portfolio_returns(panel.asset_count())?;
    let floor = variance_floor(&market, tracking_resolution);
    let mut aic_values = Vec::with_capacity(ks.len());
    let mut residual_norms = Vec::with_capacity(ks.len());
    for &k in &ks {
        let portfolio = panel.portfolio_returns(k)?;
        let residuals: Vec<f64> = market.iter().zip(&portfolio).map(|(m, p)| m - p).collect();
        residual_norms.push(residuals.iter().map(|r| r * r).sum());
        aic_values.push(gaussian_aic(&residuals, k, floor));
    }
    let mut best = 0;
    for i in 1..ks.len() {
        if aic_values[i] < aic_values[best] {
            best = i;
        }
    }
    Ok(SelectionResult {
        k_star: ks[best],
        candidate_ks: ks,
        aic_values,
        residual_norms,
        ranked_assets: panel.ranked.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexParams {
    /// Level of the index on its first reconstitution.
    pub base_level: f64,
    /// Upper bound on the default candidate grid `1..=K`.
    pub max_constituents: usize,
    /// Explicit candidate grid; overrides `max_constituents` when set.
    pub candidate_ks: Option<Vec<usize>>,
    pub selection_window_months: u32,
    pub tracking_resolution: f64,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            base_level: 1000.0,
            max_constituents: 30,
            candidate_ks: None,
            selection_window_months: 3,
            tracking_resolution: DEFAULT_TRACKING_RESOLUTION,
        }
    }
}

impl IndexParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_level.is_finite() && self.base_level > 0.0) {
            return Err(Error::Config("index.base_level must be positive".into()));
        }
        if self.max_constituents == 0 {
            return Err(Error::Config("index.max_constituents must be at least 1".into()));
        }
        if let Some(ks) = &self.candidate_ks {
            if ks.is_empty() || ks.contains(&0) {
                return Err(Error::Config("index.candidate_ks must be non-empty and positive".into()));
            }
        }
        if self.selection_window_months == 0 {
            return Err(Error::Config("index.selection_window_months must be at least 1".into()));
        }
        if !(self.tracking_resolution >= 0.0) {
            return Err(Error::Config("index.tracking_resolution must be non-negative".into()));
        }
        Ok(())
    }

    fn candidates_for(&self, asset_count: usize) -> Vec<usize> {
        match &self.candidate_ks {
            Some(ks) => ks.clone(),
            None => (1..=self.max_constituents.min(asset_count)).collect(),
        }
    }
}

/// Quarterly reconstitution months: January, April, July, October.
pub fn is_reconstitution_month(date: NaiveDate) -> bool {
    matches!(date.month(), 1 | 4 | 7 | 10)
}

/// Trailing selection window ending the day before `date`.
pub fn selection_window(date: NaiveDate, months: u32) -> DateRange {
    let start = date
        .checked_sub_months(Months::new(months))
        .unwrap_or(NaiveDate::MIN);
    DateRange::new(start, date.pred_opt().unwrap_or(date))
}

/// Re-selects the constituent set on `date` and re-chains the divisor so
/// the level matches `previous` (or the base level when there is none).
pub fn reconstitute(
    dataset: &MarketDataset,
    date: NaiveDate,
    params: &IndexParams,
    previous: Option<&IndexState>,
) -> Result<(IndexState, SelectionResult)> {
    let window = selection_window(date, params.selection_window_months);
    let panel = ReturnPanel::build(dataset, window)?;
    let candidates = params.candidates_for(panel.asset_count());
    let selection = select_on_panel(&panel, &candidates, params.tracking_resolution)?;

    let mut members = Vec::with_capacity(panel.asset_count());
    for asset in &panel.ranked {
        if let Ok(obs) = dataset.observation_at(asset, date) {
            members.push((asset.clone(), obs.price, obs.market_cap));
        }
    }
    sort_by_cap(&mut members, |m| (&m.0, m.2));
    if members.len() < selection.k_star {
        return Err(Error::InsufficientData(format!(
            "only {} assets priced on {date}, need {}",
            members.len(),
            selection.k_star
        )));
    }
    members.truncate(selection.k_star);
    let level = match previous {
        Some(prev) => index_value_at(prev, dataset, date)?,
        None => params.base_level,
    };
    let state = IndexState::from_market_caps(date, members, level)?;
    Ok((state, selection))
}

/// Monthly reweight: same constituents, weights from current market caps.
pub fn reweight(state: &IndexState, dataset: &MarketDataset, date: NaiveDate) -> Result<IndexState> {
    let mut members = Vec::with_capacity(state.len());
    for asset in state.assets() {
        let obs = dataset.observation_at(asset, date)?;
        members.push((asset.clone(), obs.price, obs.market_cap));
    }
    let level = index_value_at(state, dataset, date)?;
    IndexState::from_market_caps(date, members, level)
}

/// Index states in effect from each rebalance date onwards.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IndexHistory {
    pub states: Vec<IndexState>,
    pub selections: Vec<(NaiveDate, SelectionResult)>,
}

impl IndexHistory {
    /// Reconstitutes on the first date and in every quarter month, reweights
    /// on all other rebalance dates.
    pub fn build(
        dataset: &MarketDataset,
        rebalance_dates: &[NaiveDate],
        params: &IndexParams,
    ) -> Result<Self> {
        params.validate()?;
        let mut history = IndexHistory::default();
        for &date in rebalance_dates {
            let previous = history.states.last();
            let next = match previous {
                Some(prev) if !is_reconstitution_month(date) => {
                    reweight(prev, dataset, date).map_err(|e| e.at(date))?
                }
                _ => {
                    let (state, sel) =
                        reconstitute(dataset, date, params, previous).map_err(|e| e.at(date))?;
                    history.selections.push((date, sel));
                    state
                }
            };
            history.states.push(next);
        }
        Ok(history)
    }

    /// The state in effect on `date` (latest `as_of <= date`).
    pub fn state_on(&self, date: NaiveDate) -> Option<&IndexState> {
        let i = self.states.partition_point(|s| s.as_of <= date);
        i.checked_sub(1).map(|i| &self.states[i])
    }

    /// Daily index levels over the dataset calendar from the first state to `end`.
    pub fn daily_levels(&self, dataset: &MarketDataset, end: NaiveDate) -> Result<Vec<(NaiveDate, f64)>> {
        let Some(first) = self.states.first() else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for &d in dataset.calendar() {
            if d < first.as_of || d > end {
                continue;
            }
            let state = self.state_on(d).expect("date after first state");
            out.push((d, index_value_at(state, dataset, d).map_err(|e| e.at(d))?));
        }
        Ok(out)
    }
}
