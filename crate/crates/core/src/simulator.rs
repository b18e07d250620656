//! Physically replicating ETF on the index.
//!
//! On every rebalance date the portfolio is marked to market, the net capital
//! flow is added, targets are set from the new index weights, and each trade
//! pays a tiered fee plus a share of its estimated spread. Costs are financed
//! from the portfolio in a single pass: targets are recomputed once against
//! the value net of the first-pass costs.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::Serialize;

use crate::cost::{trade_cost, FeeSchedule, TradeCost, DEFAULT_SPREAD_SHARE};
use crate::error::{Error, Result};
use crate::flows::{generate_flows, FlowModelParams, FlowSchedule};
use crate::index::{index_value_at, IndexHistory, IndexParams, IndexState, PriceMap};
use crate::market_data::{AssetId, MarketDataset};
use crate::spread::{scale_spread, ScalingExponent, SpreadCurve};

/// Spread fraction paid by a trade of a given size.
pub trait SpreadModel {
    fn spread_fraction(&self, asset: &AssetId, date: NaiveDate, notional: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoSpread;

impl SpreadModel for NoSpread {
    fn spread_fraction(&self, _: &AssetId, _: NaiveDate, _: f64) -> Result<f64> {
        Ok(0.0)
    }
}

/// Reference curve scaled to each asset by relative 24h volume.
#[derive(Debug, Clone)]
pub struct ScaledSpreadModel<'a> {
    pub curve: SpreadCurve,
    pub dataset: &'a MarketDataset,
    pub exponent: ScalingExponent,
}

impl SpreadModel for ScaledSpreadModel<'_> {
    fn spread_fraction(&self, asset: &AssetId, date: NaiveDate, notional: f64) -> Result<f64> {
        scale_spread(&self.curve, asset, self.dataset, date, self.exponent, notional)
    }
}

/// Fee schedule (absent means no fees) plus spread model.
pub struct CostModel<'a> {
    pub fees: Option<FeeSchedule>,
    pub spread_share: f64,
    pub spread: &'a dyn SpreadModel,
}

impl CostModel<'static> {
    pub fn frictionless() -> Self {
        CostModel {
            fees: None,
            spread_share: DEFAULT_SPREAD_SHARE,
            spread: &NoSpread,
        }
    }
}

impl CostModel<'_> {
    fn charge(&self, asset: &AssetId, date: NaiveDate, notional: f64) -> Result<(TradeCost, f64)> {
        let notional = notional.abs();
        if notional == 0.0 {
            return Ok((TradeCost::default(), 0.0));
        }
        let spread = self.spread.spread_fraction(asset, date, notional)?;
        let cost = match &self.fees {
            Some(schedule) => trade_cost(schedule, spread, notional, self.spread_share),
            None => {
                let spread_cost = self.spread_share * spread * notional;
                TradeCost {
                    notional,
                    fee: 0.0,
                    spread_cost,
                    total: spread_cost,
                }
            }
        };
        Ok((cost, spread))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Portfolio {
    /// Units held per asset, never negative.
    pub holdings: BTreeMap<AssetId, f64>,
    pub cash: f64,
    pub cumulative_fees: f64,
    pub cumulative_spread_costs: f64,
}

impl Portfolio {
    pub fn value(&self, prices: &PriceMap) -> Result<f64> {
        let mut v = self.cash;
        for (asset, units) in &self.holdings {
            if *units == 0.0 {
                continue;
            }
            let p = prices
                .get(asset)
                .ok_or_else(|| Error::InvalidInput(format!("no price for held asset {asset}")))?;
            v += units * p;
        }
        Ok(v)
    }

    pub fn value_at(&self, dataset: &MarketDataset, date: NaiveDate) -> Result<f64> {
        let mut v = self.cash;
        for (asset, units) in &self.holdings {
            if *units != 0.0 {
                v += units * dataset.price_at(asset, date)?;
            }
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeRecord {
    pub asset: AssetId,
    /// Index weight change since the previous rebalance.
    pub delta: f64,
    /// Signed executed notional, positive for purchases.
    pub trade_notional: f64,
    /// Notional the costs were charged on (first pass).
    pub charged_notional: f64,
    pub fee: f64,
    pub spread_fraction: f64,
    pub spread_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RebalanceReport {
    pub date: NaiveDate,
    pub pre_value: f64,
    pub post_value: f64,
    pub requested_flow: f64,
    /// Applied net flow; equals `requested_flow` unless a withdrawal was clamped.
    pub deposit: f64,
    pub withdrawal_clamped: bool,
    pub trades: Vec<TradeRecord>,
    pub fees: f64,
    pub spread_costs: f64,
    pub turnover_one_sided: f64,
    pub turnover_two_sided: f64,
    pub n_constituents: usize,
    pub initial: bool,
}

impl RebalanceReport {
    pub fn delta_sum(&self) -> f64 {
        self.trades.iter().map(|t| t.delta).sum()
    }

    pub fn delta(&self, asset: &AssetId) -> f64 {
        self.trades
            .iter()
            .find(|t| &t.asset == asset)
            .map_or(0.0, |t| t.delta)
    }

    /// Trade-size-weighted mean spread fraction, `None` without trades.
    pub fn weighted_spread(&self) -> Option<f64> {
        let (num, den) = self.trades.iter().fold((0.0, 0.0), |(n, d), t| {
            (n + t.charged_notional * t.spread_fraction, d + t.charged_notional)
        });
        (den > 0.0).then(|| num / den)
    }

    /// Trade-size-weighted mean fee rate, `None` without trades.
    pub fn weighted_fee_rate(&self) -> Option<f64> {
        let den: f64 = self.trades.iter().map(|t| t.charged_notional).sum();
        (den > 0.0).then(|| self.fees / den)
    }
}

/// Allocates `initial_capital` across the index constituents.
pub fn initialize(
    dataset: &MarketDataset,
    state: &IndexState,
    initial_capital: f64,
    date: NaiveDate,
    costs: &CostModel<'_>,
) -> Result<(Portfolio, RebalanceReport)> {
    if !(initial_capital.is_finite() && initial_capital > 0.0) {
        return Err(Error::InvalidInput(format!(
            "initial capital must be positive, got {initial_capital}"
        )));
    }
    rebalance_step(&Portfolio::default(), dataset, None, state, date, initial_capital, costs)
}

/// One rebalance from `old_state` weights to `new_state` weights.
pub fn rebalance_step(
    portfolio: &Portfolio,
    dataset: &MarketDataset,
    old_state: Option<&IndexState>,
    new_state: &IndexState,
    date: NaiveDate,
    flow: f64,
    costs: &CostModel<'_>,
) -> Result<(Portfolio, RebalanceReport)> {
    let new_weights = new_state.weights();
    let old_weights = old_state.map(IndexState::weights).unwrap_or_default();

    let traded: BTreeSet<&AssetId> = portfolio
        .holdings
        .iter()
        .filter(|(_, u)| **u != 0.0)
        .map(|(a, _)| a)
        .chain(new_weights.keys())
        .collect();
    let mut prices = PriceMap::new();
    for asset in &traded {
        prices.insert((*asset).clone(), dataset.price_at(asset, date)?);
    }

    let pre_value = portfolio.value(&prices)?;
    let current: BTreeMap<&AssetId, f64> = traded
        .iter()
        .map(|a| (*a, portfolio.holdings.get(*a).copied().unwrap_or(0.0) * prices[*a]))
        .collect();

    let price_costs = |investable: f64| -> Result<Vec<(&AssetId, TradeCost, f64)>> {
        traded
            .iter()
            .map(|a| {
                let target = new_weights.get(*a).copied().unwrap_or(0.0) * investable;
                let (c, s) = costs.charge(a, date, target - current[a])?;
                Ok((*a, c, s))
            })
            .collect()
    };

    let mut deposit = flow;
    let mut investable = pre_value + flow;
    let mut charged = if investable > 0.0 {
        price_costs(investable)?
    } else {
        Vec::new()
    };
    let mut total_cost: f64 = charged.iter().map(|c| c.1.total).sum();
    let mut clamped = false;
    if investable <= 0.0 || investable - total_cost < 0.0 {
        // Withdrawal larger than the fund: liquidate and pay out what is left.
        clamped = true;
        charged = price_costs(0.0)?;
        total_cost = charged.iter().map(|c| c.1.total).sum();
        deposit = -(pre_value - total_cost).max(0.0);
        investable = pre_value + deposit;
    }
    let post_value = if clamped { 0.0 } else { investable - total_cost };

    let mut next = Portfolio {
        holdings: BTreeMap::new(),
        cash: 0.0,
        cumulative_fees: portfolio.cumulative_fees,
        cumulative_spread_costs: portfolio.cumulative_spread_costs,
    };
    let mut fees = 0.0;
    let mut spread_costs = 0.0;
    let mut trades = Vec::with_capacity(traded.len());
    let all_assets: BTreeSet<&AssetId> = traded.iter().copied().chain(old_weights.keys()).collect();
    for asset in all_assets {
        let w_new = new_weights.get(asset).copied().unwrap_or(0.0);
        let w_old = old_weights.get(asset).copied().unwrap_or(0.0);
        let (cost, spread) = charged
            .iter()
            .find(|c| c.0 == asset)
            .map(|c| (c.1, c.2))
            .unwrap_or_default();
        let final_notional = w_new * post_value;
        let before = current.get(asset).copied().unwrap_or(0.0);
        if w_new > 0.0 {
            next.holdings.insert(asset.clone(), final_notional / prices[asset]);
        }
        fees += cost.fee;
        spread_costs += cost.spread_cost;
        trades.push(TradeRecord {
            asset: asset.clone(),
            delta: w_new - w_old,
            trade_notional: final_notional - before,
            charged_notional: cost.notional,
            fee: cost.fee,
            spread_fraction: spread,
            spread_cost: cost.spread_cost,
        });
    }
    next.cumulative_fees += fees;
    next.cumulative_spread_costs += spread_costs;

    let two_sided: f64 = trades.iter().map(|t| t.delta.abs()).sum();
    let initial = old_state.is_none();
    let one_sided = if initial {
        trades.iter().map(|t| t.delta.max(0.0)).sum()
    } else {
        0.5 * two_sided
    };
    Ok((
        next,
        RebalanceReport {
            date,
            pre_value,
            post_value,
            requested_flow: flow,
            deposit,
            withdrawal_clamped: clamped,
            trades,
            fees,
            spread_costs,
            turnover_one_sided: one_sided,
            turnover_two_sided: two_sided,
            n_constituents: new_state.len(),
            initial,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSettings {
    pub enabled: bool,
    pub fee_schedule: FeeSchedule,
    pub spread_share: f64,
    /// Reference spread curve; `None` disables spread costs.
    pub spread_curve: Option<SpreadCurve>,
}

impl Default for CostSettings {
    fn default() -> Self {
        CostSettings {
            enabled: true,
            fee_schedule: FeeSchedule::default_schedule(),
            spread_share: DEFAULT_SPREAD_SHARE,
            spread_curve: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestSettings {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub initial_capital: f64,
    pub benchmark: AssetId,
    pub index: IndexParams,
    pub costs: CostSettings,
    /// `None` runs without deposits or withdrawals.
    pub flows: Option<FlowModelParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub date: NaiveDate,
    pub etf_value: f64,
    pub index_level: f64,
    /// Cost-free replication: index units bought with the same flows.
    pub replication_value: f64,
    /// Benchmark asset units bought with the same flows.
    pub benchmark_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub exponent: Option<ScalingExponent>,
    pub reports: Vec<RebalanceReport>,
    pub series: Vec<SeriesPoint>,
    pub flows: FlowSchedule,
    pub states: Vec<IndexState>,
    pub benchmark: AssetId,
}

impl SimulationResult {
    /// Replication shortfall in index units, on each rebalance date.
    pub fn cost_gap_in_index_units(&self) -> Vec<(NaiveDate, f64)> {
        let rebal: BTreeSet<NaiveDate> = self.reports.iter().map(|r| r.date).collect();
        self.series
            .iter()
            .filter(|p| rebal.contains(&p.date))
            .map(|p| (p.date, (p.replication_value - p.etf_value) / p.index_level))
            .collect()
    }
}

pub fn run_backtest(
    dataset: &MarketDataset,
    settings: &BacktestSettings,
    exponent: Option<ScalingExponent>,
) -> Result<SimulationResult> {
    settings.index.validate()?;
    if settings.end < settings.start {
        return Err(Error::Config("backtest end precedes start".into()));
    }
    let rebalance_dates = dataset.rebalance_dates(settings.start, settings.end);
    if rebalance_dates.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no rebalance date with full price coverage in {}..{}",
            settings.start, settings.end
        )));
    }
    let history = IndexHistory::build(dataset, &rebalance_dates, &settings.index)?;
    let flows = match &settings.flows {
        Some(p) => {
            let params = FlowModelParams {
                initial_capital: settings.initial_capital,
                ..p.clone()
            };
            generate_flows(dataset.attention(), &rebalance_dates, &params)?
        }
        None => FlowSchedule::flat(settings.initial_capital, &rebalance_dates),
    };

    let scaled;
    let spread: &dyn SpreadModel = match (&settings.costs.spread_curve, exponent) {
        (Some(curve), Some(a)) if settings.costs.enabled => {
            scaled = ScaledSpreadModel {
                curve: curve.clone(),
                dataset,
                exponent: a,
            };
            &scaled
        }
        _ => &NoSpread,
    };
    let costs = CostModel {
        fees: settings
            .costs
            .enabled
            .then(|| settings.costs.fee_schedule.clone()),
        spread_share: settings.costs.spread_share,
        spread,
    };

    let t0 = rebalance_dates[0];
    let mut portfolio = Portfolio::default();
    let mut reports = Vec::with_capacity(rebalance_dates.len());
    let mut series = Vec::new();
    let mut replication_units = 0.0;
    let mut benchmark_units = 0.0;
    let mut next_rebalance = 0;

    for &date in dataset.calendar() {
        if date < t0 || date > settings.end {
            continue;
        }
        let state = history.state_on(date).expect("date on or after first state");
        let level = index_value_at(state, dataset, date).map_err(|e| e.at(date))?;
        let bench_price = dataset
            .price_at(&settings.benchmark, date)
            .map_err(|e| e.at(date))?;
        if next_rebalance < rebalance_dates.len() && rebalance_dates[next_rebalance] == date {
            let new_state = &history.states[next_rebalance];
            let (p, report) = if next_rebalance == 0 {
                replication_units = settings.initial_capital / level;
                benchmark_units = settings.initial_capital / bench_price;
                initialize(dataset, new_state, settings.initial_capital, date, &costs)
            } else {
                let old_state = &history.states[next_rebalance - 1];
                let flow = flows.flow_on(date);
                rebalance_step(&portfolio, dataset, Some(old_state), new_state, date, flow, &costs)
            }
            .map_err(|e| e.at(date))?;
            if next_rebalance > 0 {
                replication_units += report.deposit / level;
                benchmark_units += report.deposit / bench_price;
            }
            portfolio = p;
            reports.push(report);
            next_rebalance += 1;
        }
        let etf_value = portfolio.value_at(dataset, date).map_err(|e| e.at(date))?;
        series.push(SeriesPoint {
            date,
            etf_value,
            index_level: level,
            replication_value: replication_units * level,
            benchmark_value: benchmark_units * bench_price,
        });
    }

    Ok(SimulationResult {
        exponent,
        reports,
        series,
        flows,
        states: history.states,
        benchmark: settings.benchmark.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RangeStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl RangeStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(RangeStats {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceSummary {
    pub exponent: Option<f64>,
    pub benchmark: AssetId,
    /// `None` when the return series has zero variance.
    pub etf_sharpe: Option<f64>,
    pub benchmark_sharpe: Option<f64>,
    pub index_sharpe: Option<f64>,
    pub turnover_one_sided: Option<RangeStats>,
    pub turnover_two_sided: Option<RangeStats>,
    pub total_fees: f64,
    pub total_spread_costs: f64,
    pub median_weighted_spread: Option<f64>,
    pub rebalance_count: usize,
    pub final_etf_value: f64,
    pub final_replication_value: f64,
    pub final_benchmark_value: f64,
    pub frictionless_proportional: bool,
}

/// Annualisation factor for daily crypto returns.
pub const PERIODS_PER_YEAR: f64 = 365.0;

/// `mean / std * sqrt(365)` with the sample standard deviation.
///
/// `Ok(None)` when the standard deviation is zero.
pub fn sharpe_ratio(log_returns: &[f64]) -> Result<Option<f64>> {
    if log_returns.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "Sharpe ratio needs at least 2 returns, got {}",
            log_returns.len()
        )));
    }
    let n = log_returns.len() as f64;
    let mean = log_returns.iter().sum::<f64>() / n;
    let var = log_returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    if !(std > 8.0 * f64::EPSILON * mean.abs()) {
        return Ok(None);
    }
    Ok(Some(mean / std * PERIODS_PER_YEAR.sqrt()))
}

/// Daily log-returns of a value series with external flows removed: on a
/// flow date the end value is taken net of that flow.
pub fn flow_adjusted_log_returns(values: &[(NaiveDate, f64)], flows: &BTreeMap<NaiveDate, f64>) -> Vec<f64> {
    values
        .windows(2)
        .map(|w| {
            let flow = flows.get(&w[1].0).copied().unwrap_or(0.0);
            ((w[1].1 - flow) / w[0].1).ln()
        })
        .collect()
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn performance_summary(result: &SimulationResult) -> Result<PerformanceSummary> {
    if result.series.is_empty() {
        return Err(Error::InsufficientData("empty simulation result".into()));
    }
    let flows: BTreeMap<NaiveDate, f64> = result
        .reports
        .iter()
        .filter(|r| !r.initial)
        .map(|r| (r.date, r.deposit))
        .collect();
    let pick = |f: fn(&SeriesPoint) -> f64| -> Vec<(NaiveDate, f64)> {
        result.series.iter().map(|p| (p.date, f(p))).collect()
    };
    let etf = flow_adjusted_log_returns(&pick(|p| p.etf_value), &flows);
    let bench = flow_adjusted_log_returns(&pick(|p| p.benchmark_value), &flows);
    let index = flow_adjusted_log_returns(&pick(|p| p.index_level), &BTreeMap::new());

    let later: Vec<&RebalanceReport> = result.reports.iter().filter(|r| !r.initial).collect();
    let one: Vec<f64> = later.iter().map(|r| r.turnover_one_sided).collect();
    let two: Vec<f64> = later.iter().map(|r| r.turnover_two_sided).collect();
    let mut spreads: Vec<f64> = result.reports.iter().filter_map(|r| r.weighted_spread()).collect();
    spreads.sort_by(f64::total_cmp);

    let last = result.series.last().expect("non-empty");
    Ok(PerformanceSummary {
        exponent: result.exponent.map(f64::from),
        benchmark: result.benchmark.clone(),
        etf_sharpe: sharpe_ratio(&etf)?,
        benchmark_sharpe: sharpe_ratio(&bench)?,
        index_sharpe: sharpe_ratio(&index)?,
        turnover_one_sided: RangeStats::of(&one),
        turnover_two_sided: RangeStats::of(&two),
        total_fees: result.reports.iter().map(|r| r.fees).sum(),
        total_spread_costs: result.reports.iter().map(|r| r.spread_costs).sum(),
        median_weighted_spread: quantile_sorted(&spreads, 0.5),
        rebalance_count: result.reports.len(),
        final_etf_value: last.etf_value,
        final_replication_value: last.replication_value,
        final_benchmark_value: last.benchmark_value,
        frictionless_proportional: is_proportional(result, 1e-9),
    })
}

/// Whether the ETF-to-index ratio stays constant within `tolerance` relative.
pub fn is_proportional(result: &SimulationResult, tolerance: f64) -> bool {
    let Some(first) = result.series.first() else {
        return true;
    };
    let r0 = first.etf_value / first.index_level;
    result
        .series
        .iter()
        .all(|p| ((p.etf_value / p.index_level) / r0 - 1.0).abs() <= tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::Constituent;
    use crate::market_data::{AttentionSeries, DailyObservation};

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn a(s: &str) -> AssetId {
        AssetId::new(s).unwrap()
    }

    fn dataset(rows: &[(&str, &str, f64)]) -> MarketDataset {
        MarketDataset::from_parts(
            rows.iter()
                .map(|(asset, date, price)| {
                    (
                        a(asset),
                        DailyObservation {
                            date: d(date),
                            price: *price,
                            market_cap: *price,
                            volume_24h: Some(1e6),
                        },
                    )
                })
                .collect(),
            AttentionSeries::default(),
            vec![],
        )
        .unwrap()
    }

    fn weights(date: &str, ws: &[(&str, f64)]) -> IndexState {
        IndexState {
            as_of: d(date),
            constituents: ws
                .iter()
                .map(|(s, w)| Constituent {
                    asset: a(s),
                    weight: *w,
                    base_quantity: 1.0,
                })
                .collect(),
            divisor: 1.0,
        }
    }

    #[test]
    fn initialize_hand_arithmetic() {
        let ds = dataset(&[("BTC", "2021-01-01", 10_000.0), ("ETH", "2021-01-01", 100.0)]);
        let s = weights("2021-01-01", &[("BTC", 0.8), ("ETH", 0.2)]);
        let (p, r) = initialize(&ds, &s, 1_000_000.0, d("2021-01-01"), &CostModel::frictionless()).unwrap();
        assert!((p.holdings[&a("BTC")] - 80.0).abs() < 1e-12);
        assert!((p.holdings[&a("ETH")] - 2000.0).abs() < 1e-9);
        assert_eq!(p.cash, 0.0);
        assert!((r.delta_sum() - 1.0).abs() < 1e-15);
        assert_eq!(r.turnover_one_sided, 1.0);
    }

    #[test]
    fn single_constituent_takes_everything() {
        let ds = dataset(&[("BTC", "2021-01-01", 123.0)]);
        let s = weights("2021-01-01", &[("BTC", 1.0)]);
        let (p, r) = initialize(&ds, &s, 5000.0, d("2021-01-01"), &CostModel::frictionless()).unwrap();
        assert!((p.holdings[&a("BTC")] * 123.0 - 5000.0).abs() < 1e-9);
        assert_eq!(r.post_value, 5000.0);
    }

    #[test]
    fn costs_reduce_initial_value() {
        let ds = dataset(&[("BTC", "2021-01-01", 10_000.0), ("ETH", "2021-01-01", 100.0)]);
        let s = weights("2021-01-01", &[("BTC", 0.8), ("ETH", 0.2)]);
        let costs = CostModel {
            fees: Some(FeeSchedule::default_schedule()),
            spread_share: 0.5,
            spread: &NoSpread,
        };
        let (p, r) = initialize(&ds, &s, 1_000_000.0, d("2021-01-01"), &costs).unwrap();
        let v = p.value_at(&ds, d("2021-01-01")).unwrap();
        assert!(v < 1_000_000.0);
        // 800k at 0.2% and 200k at 0.2%
        assert!((r.fees - 2000.0).abs() < 1e-9);
        assert!((v - (1_000_000.0 - 2000.0)).abs() < 1e-6);
    }

    #[test]
    fn unchanged_state_is_a_fixed_point() {
        let ds = dataset(&[("BTC", "2021-01-01", 100.0), ("ETH", "2021-01-01", 10.0)]);
        let s = weights("2021-01-01", &[("BTC", 0.6), ("ETH", 0.4)]);
        let costs = CostModel {
            fees: Some(FeeSchedule::default_schedule()),
            spread_share: 0.5,
            spread: &NoSpread,
        };
        let mut p = Portfolio::default();
        p.holdings.insert(a("BTC"), 6.0);
        p.holdings.insert(a("ETH"), 40.0);
        let (next, r) = rebalance_step(&p, &ds, Some(&s), &s, d("2021-01-01"), 0.0, &costs).unwrap();
        assert_eq!(r.fees + r.spread_costs, 0.0);
        assert!(r.trades.iter().all(|t| t.trade_notional.abs() < 1e-12));
        assert!((next.holdings[&a("BTC")] - 6.0).abs() < 1e-12);
        assert!((next.holdings[&a("ETH")] - 40.0).abs() < 1e-12);
        assert_eq!(r.turnover_one_sided, 0.0);
    }

    #[test]
    fn split_into_two_assets() {
        let ds = dataset(&[("AAA", "2021-02-01", 1.0), ("BBB", "2021-02-01", 2.0)]);
        let old = weights("2021-01-01", &[("AAA", 1.0)]);
        let new = weights("2021-02-01", &[("AAA", 0.5), ("BBB", 0.5)]);
        let mut p = Portfolio::default();
        p.holdings.insert(a("AAA"), 100.0);
        let (next, r) =
            rebalance_step(&p, &ds, Some(&old), &new, d("2021-02-01"), 0.0, &CostModel::frictionless()).unwrap();
        let t_a = r.trades.iter().find(|t| t.asset == a("AAA")).unwrap();
        let t_b = r.trades.iter().find(|t| t.asset == a("BBB")).unwrap();
        assert!((t_a.trade_notional + 50.0).abs() < 1e-12);
        assert!((t_b.trade_notional - 50.0).abs() < 1e-12);
        assert_eq!(r.delta_sum(), 0.0);
        assert_eq!(r.turnover_one_sided, 0.5);
        assert!((next.holdings[&a("BBB")] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn dropped_constituent_fully_sold() {
        let ds = dataset(&[("AAA", "2021-02-01", 1.0), ("BBB", "2021-02-01", 2.0)]);
        let old = weights("2021-01-01", &[("AAA", 0.7), ("BBB", 0.3)]);
        let new = weights("2021-02-01", &[("AAA", 1.0)]);
        let mut p = Portfolio::default();
        p.holdings.insert(a("AAA"), 70.0);
        p.holdings.insert(a("BBB"), 15.0);
        let (next, r) =
            rebalance_step(&p, &ds, Some(&old), &new, d("2021-02-01"), 0.0, &CostModel::frictionless()).unwrap();
        assert_eq!(r.delta(&a("BBB")), -0.3);
        let t_b = r.trades.iter().find(|t| t.asset == a("BBB")).unwrap();
        assert!((t_b.trade_notional + 30.0).abs() < 1e-12);
        assert!(!next.holdings.contains_key(&a("BBB")));
    }

    #[test]
    fn oversized_withdrawal_is_clamped() {
        let ds = dataset(&[("AAA", "2021-02-01", 1.0)]);
        let s = weights("2021-02-01", &[("AAA", 1.0)]);
        let mut p = Portfolio::default();
        p.holdings.insert(a("AAA"), 100.0);
        let costs = CostModel {
            fees: Some(FeeSchedule::default_schedule()),
            spread_share: 0.5,
            spread: &NoSpread,
        };
        let (next, r) = rebalance_step(&p, &ds, Some(&s), &s, d("2021-02-01"), -500.0, &costs).unwrap();
        assert!(r.withdrawal_clamped);
        assert_eq!(r.post_value, 0.0);
        assert!((r.deposit + 99.5).abs() < 1e-12);
        assert!((r.pre_value + r.deposit - r.fees - r.spread_costs - r.post_value).abs() < 1e-12);
        assert!(next.holdings.values().all(|u| *u == 0.0));
    }

    #[test]
    fn sharpe_edge_cases() {
        assert!(sharpe_ratio(&[0.01]).is_err());
        assert_eq!(sharpe_ratio(&[0.0, 0.0, 0.0]).unwrap(), None);
        assert_eq!(sharpe_ratio(&[0.01; 30]).unwrap(), None);
        let s = sharpe_ratio(&[0.01, 0.03]).unwrap().unwrap();
        // mean 0.02, sample std 0.0141421..
        assert!((s - 0.02 / (0.0002f64).sqrt() * 365f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn quantile_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), Some(2.5));
        assert_eq!(quantile_sorted(&v, 0.25), Some(1.75));
        assert_eq!(quantile_sorted(&v, 1.0), Some(4.0));
        assert_eq!(quantile_sorted(&[], 0.5), None);
    }
}
