use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

use crate::market_data::AssetId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: column `{column}`: {message}")]
    Malformed {
        file: PathBuf,
        line: u64,
        column: String,
        message: String,
    },

    #[error("{file}:{line}: duplicate observation for {asset} on {date}")]
    DuplicateKey {
        file: PathBuf,
        line: u64,
        asset: AssetId,
        date: NaiveDate,
    },

    #[error("{file}:{line}: timestamp {timestamp_ms} is earlier than the previous fill")]
    UnsortedTrades {
        file: PathBuf,
        line: u64,
        timestamp_ms: i64,
    },

    #[error("unknown asset {0}")]
    UnknownAsset(AssetId),

    #[error("no observation for {asset} within {window_days} days before {date}")]
    StaleObservation {
        asset: AssetId,
        date: NaiveDate,
        window_days: i64,
    },

    #[error("missing {what} for {asset} on {date}")]
    MissingValue {
        what: &'static str,
        asset: AssetId,
        date: NaiveDate,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("quantile fit did not converge after {iterations} iterations (last coefficient change {last_change:e}, loss {loss:e})")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        loss: f64,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{date}: {source}")]
    AtDate {
        date: NaiveDate,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(self, date: NaiveDate) -> Self {
        match self {
            e @ Error::AtDate { .. } => e,
            e => Error::AtDate {
                date,
                source: Box::new(e),
            },
        }
    }
}
