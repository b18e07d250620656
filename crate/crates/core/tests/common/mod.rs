#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use crixetf_core::index::DateRange;
use crixetf_core::market_data::{AssetId, MarketDataset};
use crixetf_core::spread::{pinball_loss, SpreadObservation};
use crixetf_core::synthetic::{asset_name, generate, SyntheticSpec, TradeSpec};

pub fn d(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

/// Daily data from 2020-01-01 for `days` days.
pub fn fixture(seed: u64, assets: usize, days: usize) -> MarketDataset {
    generate(&SyntheticSpec {
        assets,
        days,
        seed,
        daily_volatility: 0.06,
        ..Default::default()
    })
    .unwrap()
}

pub fn trade_spec(orders: usize, noise: f64) -> TradeSpec {
    TradeSpec {
        asset: asset_name(0),
        orders,
        intercept: 1.866219e-4,
        slope: 5.546762e-9,
        noise,
        min_notional: 50.0,
        max_notional: 2e6,
    }
}

/// Writes CSVs plus a config with the given extra TOML appended and
/// returns the config path.
pub fn write_project(dir: &Path, dataset: &MarketDataset, start: &str, end: &str, extra: &str) -> PathBuf {
    dataset.write_csv_dir(dir).unwrap();
    let trades = if dataset.trades().is_empty() {
        ""
    } else {
        "trades = \"trades.csv\"\n"
    };
    let text = format!(
        "[data]\nprices = \"prices.csv\"\nvolumes = \"volumes.csv\"\nattention = \"attention.csv\"\n{trades}\n\
         [backtest]\nstart = \"{start}\"\nend = \"{end}\"\n\n{extra}"
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || a == b
}

/// Exhaustive AIC scan over every k, written from scratch.
pub fn brute_force_k(dataset: &MarketDataset, range: DateRange, resolution: f64) -> usize {
    let dates: Vec<_> = dataset.calendar().iter().copied().filter(|x| range.contains(*x)).collect();
    let mut panel: Vec<(AssetId, Vec<(f64, f64)>)> = dataset
        .assets()
        .filter_map(|a| {
            let rows: Option<Vec<(f64, f64)>> = dates
                .iter()
                .map(|dt| dataset.exact(a, *dt).map(|o| (o.price, o.market_cap)))
                .collect();
            rows.map(|r| (a.clone(), r))
        })
        .collect();
    panel.sort_by(|x, y| y.1[0].1.partial_cmp(&x.1[0].1).unwrap().then(x.0.cmp(&y.0)));
    let big_k = panel.len();
    let returns = |k: usize| -> Vec<f64> {
        (1..dates.len())
            .map(|t| {
                let num: f64 = panel[..k].iter().map(|(_, r)| r[t - 1].1 * r[t].0 / r[t - 1].0).sum();
                let den: f64 = panel[..k].iter().map(|(_, r)| r[t - 1].1).sum();
                (num / den).ln()
            })
            .collect()
    };
    let market = returns(big_k);
    let n = market.len() as f64;
    let floor = (resolution * resolution * market.iter().map(|r| r * r).sum::<f64>() / n).max(1e-300);
    let mut best = (f64::INFINITY, 0);
    for k in 1..=big_k {
        let r = returns(k);
        let mse = market.iter().zip(&r).map(|(m, p)| (m - p) * (m - p)).sum::<f64>() / n;
        let var = if mse > floor { mse } else { floor };
        let aic = n / 2.0 * ((2.0 * std::f64::consts::PI * var).ln() + 1.0) + 2.0 * k as f64;
        if aic < best.0 {
            best = (aic, k);
        }
    }
    best.1
}

/// Minimum pinball loss over every line through two observations.
pub fn pair_enumeration_loss(obs: &[SpreadObservation], tau: f64) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..obs.len() {
        for j in (i + 1)..obs.len() {
            let (a, b) = (obs[i], obs[j]);
            if a.notional == b.notional {
                continue;
            }
            let slope = (b.spread_fraction - a.spread_fraction) / (b.notional - a.notional);
            let intercept = a.spread_fraction - slope * a.notional;
            best = best.min(pinball_loss(obs, intercept, slope, tau));
        }
    }
    best
}

