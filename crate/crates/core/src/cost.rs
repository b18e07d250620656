//! Trading fees and total trade cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_SCHEDULE: &str = include_str!("../config/fee_schedule.toml");

pub const DEFAULT_SPREAD_SHARE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeeTier {
    /// Inclusive lower bound on trade notional.
    pub threshold: f64,
    pub rate: f64,
}

/// Volume-tiered taker fee schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct FeeSchedule {
    tiers: Vec<FeeTier>,
}

#[derive(Serialize, Deserialize)]
struct RawSchedule {
    tiers: Vec<FeeTier>,
}

impl TryFrom<RawSchedule> for FeeSchedule {
    type Error = Error;
    fn try_from(raw: RawSchedule) -> Result<Self> {
        FeeSchedule::new(raw.tiers)
    }
}

impl From<FeeSchedule> for RawSchedule {
    fn from(s: FeeSchedule) -> Self {
        RawSchedule { tiers: s.tiers }
    }
}

impl FeeSchedule {
    /// Thresholds must start at 0 and strictly increase; rates must lie in
    /// `(0, 1)` and never increase.
    pub fn new(tiers: Vec<FeeTier>) -> Result<Self> {
        let first = tiers
            .first()
            .ok_or_else(|| Error::Config("fee schedule has no tiers".into()))?;
        if first.threshold != 0.0 {
            return Err(Error::Config(format!(
                "first fee tier must start at 0, got {}",
                first.threshold
            )));
        }
        for t in &tiers {
            if !(t.rate > 0.0 && t.rate < 1.0) {
                return Err(Error::Config(format!("fee rate {} not in (0, 1)", t.rate)));
            }
            if !t.threshold.is_finite() {
                return Err(Error::Config("fee threshold must be finite".into()));
            }
        }
        for w in tiers.windows(2) {
            if w[1].threshold <= w[0].threshold {
                return Err(Error::Config(format!(
                    "fee thresholds must increase: {} after {}",
                    w[1].threshold, w[0].threshold
                )));
            }
            if w[1].rate > w[0].rate {
                return Err(Error::Config(format!(
                    "fee rates must not increase: {} after {}",
                    w[1].rate, w[0].rate
                )));
            }
        }
        Ok(FeeSchedule { tiers })
    }

    /// The schedule shipped in `config/fee_schedule.toml`.
    pub fn default_schedule() -> Self {
        FeeSchedule::from_toml(DEFAULT_SCHEDULE).expect("bundled fee schedule is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("fee schedule: {e}")))
    }

    pub fn tiers(&self) -> &[FeeTier] {
        &self.tiers
    }

    pub fn fee_rate(&self, notional: f64) -> f64 {
        let i = self.tiers.partition_point(|t| t.threshold <= notional);
        self.tiers[i.saturating_sub(1)].rate
    }
}

impl Default for FeeSchedule {
    fn default() -> Self {
        FeeSchedule::default_schedule()
    }
}

pub fn fee_rate(schedule: &FeeSchedule, notional: f64) -> f64 {
    schedule.fee_rate(notional)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TradeCost {
    pub notional: f64,
    pub fee: f64,
    pub spread_cost: f64,
    pub total: f64,
}

/// Fee plus the share of the spread a marketable order pays.
///
/// `notional` is the absolute trade size; `spread_share` is 0.5 for a
/// half-spread reading and 1.0 for a full-spread one.
pub fn trade_cost(
    schedule: &FeeSchedule,
    spread_fraction: f64,
    notional: f64,
    spread_share: f64,
) -> TradeCost {
    let notional = notional.abs();
    let fee = schedule.fee_rate(notional) * notional;
    let spread_cost = spread_share * spread_fraction.max(0.0) * notional;
    TradeCost {
        notional,
        fee,
        spread_cost,
        total: fee + spread_cost,
    }
}
