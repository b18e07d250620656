//! Stochastic capital deposits and withdrawals.
//!
//! Net flows on each rebalance date are a seeded random increment whose
//! drift follows the month-over-month change in attention, with a larger
//! response to rising attention than to falling attention.

use std::io::Write;
use std::path::Path;

use chrono::{Months, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{AttentionSeries, DATE_FORMAT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowModelParams {
    pub initial_capital: f64,
    /// Flow per attention point gained, as a percentage of initial capital.
    pub beta_up: f64,
    /// Flow per attention point lost, as a percentage of initial capital.
    pub beta_down: f64,
    /// Standard deviation of the Gaussian noise, quote currency.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for FlowModelParams {
    fn default() -> Self {
        FlowModelParams {
            initial_capital: 1_000_000.0,
            beta_up: 0.5,
            beta_down: 0.1,
            noise_scale: 10_000.0,
            seed: 0,
        }
    }
}

impl FlowModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_capital.is_finite() && self.initial_capital > 0.0) {
            return Err(Error::Config("initial_capital must be positive".into()));
        }
        if !(self.beta_up >= 0.0 && self.beta_down >= 0.0) {
            return Err(Error::Config("flow sensitivities must be non-negative".into()));
        }
        if self.beta_down > self.beta_up {
            return Err(Error::Config(format!(
                "beta_down ({}) must not exceed beta_up ({})",
                self.beta_down, self.beta_up
            )));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::Config("noise_scale must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSchedule {
    /// First entry is the initial capital on the first rebalance date; the
    /// rest are net flows, positive for deposits.
    pub entries: Vec<(NaiveDate, f64)>,
}

impl FlowSchedule {
    /// Initial capital followed by zero flows on every later date.
    pub fn flat(initial_capital: f64, rebalance_dates: &[NaiveDate]) -> Self {
        FlowSchedule {
            entries: rebalance_dates
                .iter()
                .enumerate()
                .map(|(i, d)| (*d, if i == 0 { initial_capital } else { 0.0 }))
                .collect(),
        }
    }

    pub fn initial_capital(&self) -> Option<f64> {
        self.entries.first().map(|e| e.1)
    }

    /// Net flow on `date`; zero for dates that are not rebalance dates and
    /// for the initial allocation date.
    pub fn flow_on(&self, date: NaiveDate) -> f64 {
        self.entries
            .iter()
            .skip(1)
            .find(|e| e.0 == date)
            .map_or(0.0, |e| e.1)
    }

    pub fn cumulative_net_flow(&self) -> f64 {
        self.entries.iter().skip(1).map(|e| e.1).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,net_flow\n");
        for (d, f) in &self.entries {
            out.push_str(&format!("{},{}\n", d.format(DATE_FORMAT), f));
        }
        out
    }

    pub fn write_csv(&self, path: &Path, header_comment: Option<&str>) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut body = String::new();
        if let Some(c) = header_comment {
            body.push_str(&format!("# {c}\n"));
        }
        body.push_str(&self.to_csv());
        f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Change in mean attention between the month ending at `date` and the
/// month before it.
pub fn attention_change(attention: &AttentionSeries, date: NaiveDate) -> Result<f64> {
    let one = date.checked_sub_months(Months::new(1));
    let two = date.checked_sub_months(Months::new(2));
    let (Some(one), Some(two)) = (one, two) else {
        return Err(Error::InvalidInput(format!("date {date} out of range")));
    };
    let current = attention.mean_between(one, date);
    let prior = attention.mean_between(two, one);
    match (current, prior) {
        (Some(c), Some(p)) => Ok(c - p),
        _ => Err(Error::InsufficientData(format!(
            "attention series does not cover the two months before {date}"
        ))),
    }
}

pub fn generate_flows(
    attention: &AttentionSeries,
    rebalance_dates: &[NaiveDate],
    params: &FlowModelParams,
) -> Result<FlowSchedule> {
    params.validate()?;
    let Some((&first, rest)) = rebalance_dates.split_first() else {
        return Ok(FlowSchedule { entries: vec![] });
    };
    let noise = Normal::new(0.0, params.noise_scale)
        .map_err(|e| Error::Config(format!("noise_scale: {e}")))?;
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let unit = params.initial_capital / 100.0;
    let mut entries = Vec::with_capacity(rebalance_dates.len());
    entries.push((first, params.initial_capital));
    for &date in rest {
        let change = attention_change(attention, date).map_err(|e| e.at(date))?;
        let drift = params.beta_up * change.max(0.0) * unit + params.beta_down * change.min(0.0) * unit;
        let eps: f64 = noise.sample(&mut rng);
        entries.push((date, drift + eps));
    }
    Ok(FlowSchedule { entries })
}
