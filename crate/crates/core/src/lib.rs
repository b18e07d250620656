//! Backtesting a physically replicating ETF on a market-cap-weighted crypto
//! index, with tiered fees, volume-scaled spread costs and attention-driven
//! capital flows.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod market_data;
pub mod index;
pub mod spread;
pub mod cost;
pub mod flows;
pub mod simulator;

pub use error::{Error, Result};
pub mod config;
pub mod report;
pub mod cli;
pub mod synthetic;
