//! Seeded synthetic market data for tests, benchmarks and the sample run.
//!
//! Prices follow independent geometric Brownian motions; circulating supply is
//! fixed per asset so market caps span several orders of magnitude. Taker
//! orders are built so their spread fraction lies on a known line.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::Result;
use crate::market_data::{AssetId, AttentionSeries, DailyObservation, MarketDataset, TradeFill};

#[derive(Debug, Clone, PartialEq)]
pub struct TradeSpec {
    pub asset: AssetId,
    pub orders: usize,
    pub intercept: f64,
    pub slope: f64,
    /// Multiplicative noise on the spread, `line * (1 + noise * |z|)`.
    pub noise: f64,
    pub min_notional: f64,
    pub max_notional: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub assets: usize,
    pub start: NaiveDate,
    pub days: usize,
    pub seed: u64,
    pub daily_volatility: f64,
    pub daily_drift: f64,
    pub top_market_cap: f64,
    /// Ratio between consecutive market-cap ranks at the start.
    pub cap_decay: f64,
    /// 24h volume as a fraction of market cap.
    pub volume_share: f64,
    pub attention: bool,
    pub trades: Option<TradeSpec>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            assets: 10,
            start: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            days: 365,
            seed: 1,
            daily_volatility: 0.04,
            daily_drift: 0.001,
            top_market_cap: 2e11,
            cap_decay: 0.45,
            volume_share: 0.05,
            attention: true,
            trades: None,
        }
    }
}

/// `BTC`, `ETH`, then `C02`, `C03`, ...
pub fn asset_name(rank: usize) -> AssetId {
    let s = match rank {
        0 => "BTC".to_string(),
        1 => "ETH".to_string(),
        r => format!("C{r:02}"),
    };
    AssetId::new(s).expect("valid symbol")
}

pub fn generate(spec: &SyntheticSpec) -> Result<MarketDataset> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(spec.assets * spec.days);
    let mut last_btc_price = 30_000.0;
    for rank in 0..spec.assets {
        let asset = asset_name(rank);
        let mut price = if rank == 0 {
            30_000.0
        } else {
            10f64.powf(rng.random_range(-1.0..3.0))
        };
        let supply = spec.top_market_cap * spec.cap_decay.powi(rank as i32) / price;
        for day in 0..spec.days {
            if day > 0 {
                let z: f64 = rng.sample(StandardNormal);
                let sigma = spec.daily_volatility;
                price *= (spec.daily_drift - 0.5 * sigma * sigma + sigma * z).exp();
            }
            let cap = price * supply;
            let v: f64 = rng.sample(StandardNormal);
            rows.push((
                asset.clone(),
                DailyObservation {
                    date: spec.start + Duration::days(day as i64),
                    price,
                    market_cap: cap,
                    volume_24h: Some(cap * spec.volume_share * (0.2 * v).exp()),
                },
            ));
        }
        if rank == 0 {
            last_btc_price = price;
        }
    }

    let attention = if spec.attention {
        weekly_attention(&mut rng, spec.start, spec.days)?
    } else {
        AttentionSeries::default()
    };
    let trades = match &spec.trades {
        Some(t) => line_trades(&mut rng, t, last_btc_price),
        None => Vec::new(),
    };
    MarketDataset::from_parts(rows, attention, trades)
}

fn weekly_attention(rng: &mut ChaCha20Rng, start: NaiveDate, days: usize) -> Result<AttentionSeries> {
    let step = Normal::new(0.0, 6.0).expect("finite sd");
    let mut level: f64 = 50.0;
    let mut points = Vec::new();
    let mut day = 0;
    while day < days {
        points.push((start + Duration::days(day as i64), level.round()));
        level = (level + step.sample(rng)).clamp(0.0, 100.0);
        day += 7;
    }
    AttentionSeries::new(points)
}

/// Two-fill taker orders whose spread fraction is
/// `(intercept + slope * notional) * (1 + noise * |z|)`.
pub fn line_trades(rng: &mut ChaCha20Rng, spec: &TradeSpec, mid: f64) -> Vec<TradeFill> {
    let lo = spec.min_notional.max(1e-9).ln();
    let hi = spec.max_notional.max(spec.min_notional * 1.0001).ln();
    let mut fills = Vec::with_capacity(spec.orders * 2);
    let mut ts: i64 = 1_600_000_000_000;
    for i in 0..spec.orders {
        let notional = rng.random_range(lo..hi).exp();
        let z: f64 = rng.sample(StandardNormal);
        let spread = (spec.intercept + spec.slope * notional) * (1.0 + spec.noise * z.abs());
        let half = 0.5 * spread * mid;
        let qty = notional / (2.0 * mid);
        let id = format!("o{i}");
        for price in [mid - half, mid + half] {
            ts += 1;
            fills.push(TradeFill {
                timestamp_ms: ts,
                asset: spec.asset.clone(),
                taker_order_id: id.clone(),
                price,
                quantity: qty,
            });
        }
    }
    fills
}
