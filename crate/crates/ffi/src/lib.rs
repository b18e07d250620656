//! C ABI over `crixetf-core`.
//!
//! Every fallible function returns a [`CrixStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and can
//! be read with [`crix_last_error_message`]. Handles returned by `*_new` or
//! `*_load` must be released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use chrono::NaiveDate;
use crixetf_core::config::LoadedConfig;
use crixetf_core::cost::{trade_cost, FeeSchedule, FeeTier};
use crixetf_core::market_data::{load_dataset, AssetId, DatasetPaths, MarketDataset, DATE_FORMAT};
use crixetf_core::spread::{fit_ols, fit_quantile, LineFit, QuantileFitOptions, ScalingExponent, SpreadObservation};
use crixetf_core::{cli, spread, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidInput = 5,
    Computation = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CrixTradeCost {
    pub notional: f64,
    pub fee: f64,
    pub spread_cost: f64,
    pub total: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CrixLineFit {
    pub intercept: f64,
    pub slope: f64,
    pub loss: f64,
    pub observations: usize,
}

/// Opaque market dataset.
pub struct CrixDataset {
    inner: MarketDataset,
}

/// Opaque fee schedule.
pub struct CrixFeeSchedule {
    inner: FeeSchedule,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CrixStatus {
    match e {
        Error::Io { .. } => CrixStatus::Io,
        Error::Malformed { .. }
        | Error::DuplicateKey { .. }
        | Error::UnsortedTrades { .. }
        | Error::Config(_) => CrixStatus::Parse,
        Error::UnknownAsset(_)
        | Error::StaleObservation { .. }
        | Error::MissingValue { .. }
        | Error::InvalidInput(_) => CrixStatus::InvalidInput,
        Error::InsufficientData(_) | Error::RankDeficient(_) | Error::NonConvergence { .. } => {
            CrixStatus::Computation
        }
        Error::AtDate { source, .. } => status_of(source),
    }
}

struct Failure(CrixStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CrixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CrixStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CrixStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CrixStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CrixStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn crix_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn crix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads prices, volumes and attention CSVs; `trades` may be null.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crix_dataset_load(
    prices: *const c_char,
    volumes: *const c_char,
    attention: *const c_char,
    trades: *const c_char,
    out_dataset: *mut *mut CrixDataset,
) -> CrixStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        let paths = DatasetPaths {
            prices: PathBuf::from(text(prices, "prices")?),
            volumes: PathBuf::from(text(volumes, "volumes")?),
            attention: PathBuf::from(text(attention, "attention")?),
            trades: if trades.is_null() {
                None
            } else {
                Some(PathBuf::from(text(trades, "trades")?))
            },
        };
        let inner = load_dataset(&paths)?;
        *slot = Box::into_raw(Box::new(CrixDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle from [`crix_dataset_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn crix_dataset_free(dataset: *mut CrixDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crix_dataset_asset_count(dataset: *const CrixDataset, out_count: *mut usize) -> CrixStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        *out(out_count, "out_count")? = d.inner.assets().count();
        Ok(())
    })
}

/// Price of `asset` on `date` (`YYYY-MM-DD`), falling back to the latest
/// observation inside the staleness window.
///
/// # Safety
/// `dataset` must be a live handle; strings NUL-terminated; `out_price` writable.
#[no_mangle]
pub unsafe extern "C" fn crix_dataset_price_at(
    dataset: *const CrixDataset,
    asset: *const c_char,
    date: *const c_char,
    out_price: *mut f64,
) -> CrixStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let asset = AssetId::new(text(asset, "asset")?)?;
        let date = chrono_date(text(date, "date")?)?;
        *out(out_price, "out_price")? = d.inner.price_at(&asset, date)?;
        Ok(())
    })
}

fn chrono_date(s: &str) -> Result<NaiveDate, Failure> {
    NaiveDate::parse_from_str(s, DATE_FORMAT)
        .map_err(|e| Failure(CrixStatus::Parse, format!("date `{s}`: {e}")))
}

/// The bundled default fee schedule.
///
/// # Safety
/// `out_schedule` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crix_fee_schedule_default(out_schedule: *mut *mut CrixFeeSchedule) -> CrixStatus {
    guard(|| {
        let slot = out(out_schedule, "out_schedule")?;
        *slot = Box::into_raw(Box::new(CrixFeeSchedule {
            inner: FeeSchedule::default_schedule(),
        }));
        Ok(())
    })
}

/// Schedule from `len` (threshold, rate) pairs; thresholds start at 0 and
/// increase, rates do not increase.
///
/// # Safety
/// `thresholds` and `rates` must point to `len` doubles; `out_schedule` writable.
#[no_mangle]
pub unsafe extern "C" fn crix_fee_schedule_new(
    thresholds: *const f64,
    rates: *const f64,
    len: usize,
    out_schedule: *mut *mut CrixFeeSchedule,
) -> CrixStatus {
    guard(|| {
        let slot = out(out_schedule, "out_schedule")?;
        let t = slice(thresholds, len, "thresholds")?;
        let r = slice(rates, len, "rates")?;
        let tiers = t
            .iter()
            .zip(r)
            .map(|(&threshold, &rate)| FeeTier { threshold, rate })
            .collect();
        *slot = Box::into_raw(Box::new(CrixFeeSchedule {
            inner: FeeSchedule::new(tiers)?,
        }));
        Ok(())
    })
}

/// # Safety
/// `schedule` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn crix_fee_schedule_free(schedule: *mut CrixFeeSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

/// # Safety
/// `schedule` must be a live handle; `out_rate` writable.
#[no_mangle]
pub unsafe extern "C" fn crix_fee_rate(schedule: *const CrixFeeSchedule, notional: f64, out_rate: *mut f64) -> CrixStatus {
    guard(|| {
        let s = schedule.as_ref().ok_or_else(|| null("schedule"))?;
        *out(out_rate, "out_rate")? = s.inner.fee_rate(notional.abs());
        Ok(())
    })
}

/// # Safety
/// `schedule` must be a live handle; `out_cost` writable.
#[no_mangle]
pub unsafe extern "C" fn crix_trade_cost(
    schedule: *const CrixFeeSchedule,
    spread_fraction: f64,
    notional: f64,
    spread_share: f64,
    out_cost: *mut CrixTradeCost,
) -> CrixStatus {
    guard(|| {
        let s = schedule.as_ref().ok_or_else(|| null("schedule"))?;
        let c = trade_cost(&s.inner, spread_fraction, notional, spread_share);
        *out(out_cost, "out_cost")? = CrixTradeCost {
            notional: c.notional,
            fee: c.fee,
            spread_cost: c.spread_cost,
            total: c.total,
        };
        Ok(())
    })
}

unsafe fn observations(notional: *const f64, spread: *const f64, len: usize) -> Result<Vec<SpreadObservation>, Failure> {
    let x = slice(notional, len, "notional")?;
    let y = slice(spread, len, "spread")?;
    Ok(x.iter()
        .zip(y)
        .map(|(&notional, &spread_fraction)| SpreadObservation { notional, spread_fraction })
        .collect())
}

fn line(fit: LineFit) -> CrixLineFit {
    CrixLineFit {
        intercept: fit.intercept,
        slope: fit.slope,
        loss: fit.loss,
        observations: fit.observations,
    }
}

/// Least-squares line of spread fraction on notional.
///
/// # Safety
/// Both arrays must hold `len` doubles; `out_fit` writable.
#[no_mangle]
pub unsafe extern "C" fn crix_fit_ols(
    notional: *const f64,
    spread: *const f64,
    len: usize,
    out_fit: *mut CrixLineFit,
) -> CrixStatus {
    guard(|| {
        let slot = out(out_fit, "out_fit")?;
        *slot = line(fit_ols(&observations(notional, spread, len)?)?);
        Ok(())
    })
}

/// Quantile line at level `tau` in (0, 1).
///
/// # Safety
/// Both arrays must hold `len` doubles; `out_fit` writable.
#[no_mangle]
pub unsafe extern "C" fn crix_fit_quantile(
    notional: *const f64,
    spread: *const f64,
    len: usize,
    tau: f64,
    out_fit: *mut CrixLineFit,
) -> CrixStatus {
    guard(|| {
        let slot = out(out_fit, "out_fit")?;
        let obs = observations(notional, spread, len)?;
        *slot = line(fit_quantile(&obs, tau, &QuantileFitOptions::default())?);
        Ok(())
    })
}

/// `intercept + slope * notional`.
#[no_mangle]
pub extern "C" fn crix_predict_spread(intercept: f64, slope: f64, notional: f64) -> f64 {
    intercept + slope * notional
}

/// `(reference_volume / target_volume)^(1/a)`.
///
/// # Safety
/// `out_factor` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crix_scaling_factor(
    reference_volume: f64,
    target_volume: f64,
    a: f64,
    out_factor: *mut f64,
) -> CrixStatus {
    guard(|| {
        let slot = out(out_factor, "out_factor")?;
        *slot = spread::scaling_factor(reference_volume, target_volume, ScalingExponent::new(a)?)?;
        Ok(())
    })
}

/// Runs the configured backtests and writes all outputs into `out_dir`,
/// like `crixetf run-backtest`.
///
/// # Safety
/// Both strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn crix_run_backtest(config_path: *const c_char, out_dir: *const c_char) -> CrixStatus {
    guard(|| {
        let config = PathBuf::from(text(config_path, "config_path")?);
        let out_dir = PathBuf::from(text(out_dir, "out_dir")?);
        let cfg = LoadedConfig::load(&config, &[])?;
        cli::run_backtests(&cfg, &out_dir)?;
        Ok(())
    })
}
