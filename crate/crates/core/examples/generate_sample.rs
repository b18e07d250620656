//! Writes the synthetic sample dataset and config used in the README.
//!
//! cargo run -p crixetf-core --example generate_sample -- data/sample

use std::path::PathBuf;

use chrono::NaiveDate;
use crixetf_core::synthetic::{asset_name, generate, SyntheticSpec, TradeSpec};

const CONFIG: &str = r#"[data]
prices = "prices.csv"
volumes = "volumes.csv"
attention = "attention.csv"
trades = "trades.csv"

[backtest]
start = "2020-07-01"
end = "2021-06-01"
initial_capital = 1000000.0
benchmark = "BTC"

[index]
max_constituents = 10

[costs]
enabled = true
spread_share = 0.5

[spread]
asset = "BTC"
quantile = 0.95
exponents = [2.0, 5.0, 10.0]

[flows]
enabled = true
beta_up = 0.5
beta_down = 0.1
noise_scale = 10000.0
seed = 42
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/sample".into()));
    let spec = SyntheticSpec {
        assets: 12,
        start: NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date"),
        days: 487,
        seed: 2021,
        trades: Some(TradeSpec {
            asset: asset_name(0),
            orders: 2000,
            intercept: 1.866219e-4,
            slope: 5.546762e-9,
            noise: 1.0,
            min_notional: 50.0,
            max_notional: 2e6,
        }),
        ..Default::default()
    };
    let dataset = generate(&spec)?;
    dataset.write_csv_dir(&dir)?;
    std::fs::write(dir.join("config.toml"), CONFIG)?;
    println!("wrote sample data to {}", dir.display());
    Ok(())
}
