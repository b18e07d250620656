//! Spread estimation from trade fills.
//!
//! A taker order filled by several counterparts walks the book, so the price
//! range across its fills approximates the spread it paid. Those observations
//! are regressed on order notional (mean and upper-quantile fits), and the
//! resulting curve for one liquid asset is transferred to the others through
//! the root of their 24h volume ratio.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::market_data::{group_fills, AssetId, MarketDataset, TradeFill};

/// Half-width in days of the window used to average the reference volume.
pub const REFERENCE_WINDOW_DAYS: i64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadObservation {
    /// Quote-currency value of the whole taker order.
    pub notional: f64,
    /// `(max fill price - min fill price) / mean fill price`.
    pub spread_fraction: f64,
}

/// How fill prices are averaged in the spread denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceMean {
    #[default]
    Equal,
    QuantityWeighted,
}

/// One observation per taker order with at least two fills.
pub fn extract_spread_observations(fills: &[TradeFill], mean: PriceMean) -> Vec<SpreadObservation> {
    group_fills(fills)
        .into_iter()
        .filter(|g| g.fills.len() >= 2)
        .map(|g| {
            let notional: f64 = g.fills.iter().map(|f| f.price * f.quantity).sum();
            let max = g.fills.iter().map(|f| f.price).fold(f64::MIN, f64::max);
            let min = g.fills.iter().map(|f| f.price).fold(f64::MAX, f64::min);
            let avg = match mean {
                PriceMean::Equal => {
                    g.fills.iter().map(|f| f.price).sum::<f64>() / g.fills.len() as f64
                }
                PriceMean::QuantityWeighted => {
                    notional / g.fills.iter().map(|f| f.quantity).sum::<f64>()
                }
            };
            SpreadObservation {
                notional,
                spread_fraction: (max - min) / avg,
            }
        })
        .collect()
}

/// Either the conditional mean or a conditional quantile level in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantileLevel {
    Mean,
    Level(f64),
}

impl QuantileLevel {
    pub fn level(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(QuantileLevel::Level(tau))
        } else {
            Err(Error::InvalidInput(format!("quantile level {tau} not in (0, 1)")))
        }
    }
}

impl fmt::Display for QuantileLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantileLevel::Mean => f.write_str("mean"),
            QuantileLevel::Level(t) => write!(f, "{t}"),
        }
    }
}

impl Serialize for QuantileLevel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            QuantileLevel::Mean => s.serialize_str("mean"),
            QuantileLevel::Level(t) => s.serialize_f64(*t),
        }
    }
}

impl<'de> Deserialize<'de> for QuantileLevel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) if s == "mean" => Ok(QuantileLevel::Mean),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "quantile must be a number in (0, 1) or \"mean\", got \"{s}\""
            ))),
            Raw::Num(t) => QuantileLevel::level(t).map_err(serde::de::Error::custom),
        }
    }
}

/// Affine fit of spread fraction on notional, before it is tied to an asset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub quantile: QuantileLevel,
    pub observations: usize,
    /// Sum of squared residuals for mean fits, pinball loss for quantile fits.
    pub loss: f64,
    pub iterations: usize,
}

impl LineFit {
    pub fn into_curve(
        self,
        asset: AssetId,
        reference_date: NaiveDate,
        reference_volume_24h: f64,
    ) -> SpreadCurve {
        SpreadCurve {
            asset,
            quantile: self.quantile,
            intercept: self.intercept,
            slope: self.slope,
            reference_date,
            reference_volume_24h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadCurve {
    pub asset: AssetId,
    pub quantile: QuantileLevel,
    pub intercept: f64,
    /// Fraction per unit of quote currency.
    pub slope: f64,
    pub reference_date: NaiveDate,
    pub reference_volume_24h: f64,
}

impl SpreadCurve {
    /// Curve for `asset` whose reference volume is the mean 24h volume over
    /// the days around `reference_date`.
    pub fn with_reference(
        fit: LineFit,
        dataset: &MarketDataset,
        asset: AssetId,
        reference_date: NaiveDate,
    ) -> Result<Self> {
        let vol = dataset.mean_volume_around(&asset, reference_date, REFERENCE_WINDOW_DAYS)?;
        if !(vol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "reference volume for {asset} around {reference_date} is zero"
            )));
        }
        Ok(fit.into_curve(asset, reference_date, vol))
    }
}

fn check_design(observations: &[SpreadObservation]) -> Result<()> {
    if observations.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 spread observations, got {}",
            observations.len()
        )));
    }
    if let Some(o) = observations
        .iter()
        .find(|o| !o.notional.is_finite() || !o.spread_fraction.is_finite())
    {
        return Err(Error::InvalidInput(format!("non-finite observation {o:?}")));
    }
    let x0 = observations[0].notional;
    if observations.iter().all(|o| o.notional == x0) {
        return Err(Error::RankDeficient("all notionals are equal".into()));
    }
    Ok(())
}

pub fn fit_ols(observations: &[SpreadObservation]) -> Result<LineFit> {
    check_design(observations)?;
    let n = observations.len() as f64;
    let mx = observations.iter().map(|o| o.notional).sum::<f64>() / n;
    let my = observations.iter().map(|o| o.spread_fraction).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for o in observations {
        let dx = o.notional - mx;
        sxx += dx * dx;
        sxy += dx * (o.spread_fraction - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::RankDeficient("zero notional variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let loss = observations
        .iter()
        .map(|o| (o.spread_fraction - intercept - slope * o.notional).powi(2))
        .sum();
    Ok(LineFit {
        intercept,
        slope,
        quantile: QuantileLevel::Mean,
        observations: observations.len(),
        loss,
        iterations: 0,
    })
}

/// Check loss `rho_tau(r) = r * (tau - 1{r < 0})`.
pub fn pinball(residual: f64, tau: f64) -> f64 {
    if residual >= 0.0 {
        tau * residual
    } else {
        (tau - 1.0) * residual
    }
}

pub fn pinball_loss(observations: &[SpreadObservation], intercept: f64, slope: f64, tau: f64) -> f64 {
    observations
        .iter()
        .map(|o| pinball(o.spread_fraction - intercept - slope * o.notional, tau))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileFitOptions {
    pub max_iterations: usize,
    /// Convergence tolerance on the standardised coefficients.
    pub tolerance: f64,
    pub initial_smoothing: f64,
    pub smoothing_decay: f64,
    pub min_smoothing: f64,
}

impl Default for QuantileFitOptions {
    fn default() -> Self {
        QuantileFitOptions {
            max_iterations: 200,
            tolerance: 1e-10,
            initial_smoothing: 0.1,
            smoothing_decay: 0.5,
            min_smoothing: 1e-10,
        }
    }
}

/// Affine quantile regression minimising the pinball loss.
///
/// Iteratively reweighted least squares with a shrinking smoothing floor on
/// the residual weights gets close to the optimum; the solution is then moved
/// onto the exact optimal vertex (a line through two observations) by
/// pivoting about zero-residual points.
pub fn fit_quantile(
    observations: &[SpreadObservation],
    tau: f64,
    options: &QuantileFitOptions,
) -> Result<LineFit> {
    let level = QuantileLevel::level(tau)?;
    check_design(observations)?;
    let xs: Vec<f64> = observations.iter().map(|o| o.notional).collect();
    let ys: Vec<f64> = observations.iter().map(|o| o.spread_fraction).collect();

    let (start_b0, start_b1, irls_iters) = irls(&xs, &ys, tau, options);

    let max_pivots = 10 * xs.len() + 100;
    let (intercept, slope, loss, pivots) = polish_vertex(&xs, &ys, tau, start_b0, start_b1, max_pivots)?;
    Ok(LineFit {
        intercept,
        slope,
        quantile: level,
        observations: observations.len(),
        loss,
        iterations: irls_iters + pivots,
    })
}

fn irls(xs: &[f64], ys: &[f64], tau: f64, opt: &QuantileFitOptions) -> (f64, f64, usize) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sx = (xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n).sqrt();
    let sy = {
        let s = (ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n).sqrt();
        if s > 0.0 { s } else { 1.0 }
    };
    let u: Vec<f64> = xs.iter().map(|x| (x - mx) / sx).collect();
    let v: Vec<f64> = ys.iter().map(|y| (y - my) / sy).collect();

    let mut weights = vec![1.0; u.len()];
    let (mut b0, mut b1) = weighted_ls(&u, &v, &weights).unwrap_or((0.0, 0.0));
    let mut delta = opt.initial_smoothing;
    let mut iters = 0;
    while iters < opt.max_iterations {
        iters += 1;
        for ((w, ui), vi) in weights.iter_mut().zip(&u).zip(&v) {
            let r = vi - b0 - b1 * ui;
            let side = if r > 0.0 { tau } else { 1.0 - tau };
            *w = side / r.abs().max(delta);
        }
        let Some((n0, n1)) = weighted_ls(&u, &v, &weights) else {
            break;
        };
        let change = (n0 - b0).abs().max((n1 - b1).abs());
        b0 = n0;
        b1 = n1;
        delta = (delta * opt.smoothing_decay).max(opt.min_smoothing);
        if change < opt.tolerance {
            break;
        }
    }
    let slope = sy * b1 / sx;
    let intercept = my + sy * b0 - slope * mx;
    (intercept, slope, iters)
}

fn weighted_ls(u: &[f64], v: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let (mut sw, mut su, mut sv) = (0.0, 0.0, 0.0);
    for ((ui, vi), wi) in u.iter().zip(v).zip(w) {
        sw += wi;
        su += wi * ui;
        sv += wi * vi;
    }
    if !(sw > 0.0) {
        return None;
    }
    let (mu, mv) = (su / sw, sv / sw);
    let (mut suu, mut suv) = (0.0, 0.0);
    for ((ui, vi), wi) in u.iter().zip(v).zip(w) {
        suu += wi * (ui - mu) * (ui - mu);
        suv += wi * (ui - mu) * (vi - mv);
    }
    if !(suu > 0.0) || !suv.is_finite() {
        return None;
    }
    let b1 = suv / suu;
    Some((mv - b1 * mu, b1))
}

fn loss_of(xs: &[f64], ys: &[f64], b0: f64, b1: f64, tau: f64) -> f64 {
    xs.iter().zip(ys).map(|(x, y)| pinball(y - b0 - b1 * x, tau)).sum()
}

/// Best line through observation `p`: minimises the pinball loss over slopes.
///
/// Returns `(intercept, slope, other basis point)`.
fn best_line_through(xs: &[f64], ys: &[f64], tau: f64, p: usize) -> Option<(f64, f64, usize)> {
    let (xp, yp) = (xs[p], ys[p]);
    // (candidate slope, weight, tau for that point, index)
    let mut cands: Vec<(f64, f64, f64, usize)> = Vec::with_capacity(xs.len());
    for k in 0..xs.len() {
        let h = xs[k] - xp;
        if h == 0.0 {
            continue;
        }
        let t = (ys[k] - yp) / h;
        let side = if h > 0.0 { tau } else { 1.0 - tau };
        cands.push((t, h.abs(), side, k));
    }
    if cands.is_empty() {
        return None;
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.3.cmp(&b.3)));
    // Subgradient in s of sum w * rho_side(t - s) starts at -sum(w * side)
    // and rises by w at each breakpoint.
    let mut deriv: f64 = -cands.iter().map(|c| c.1 * c.2).sum::<f64>();
    let mut chosen = cands.len() - 1;
    for (i, c) in cands.iter().enumerate() {
        deriv += c.1;
        if deriv >= 0.0 {
            chosen = i;
            break;
        }
    }
    let (slope, _, _, q) = cands[chosen];
    Some((yp - slope * xp, slope, q))
}

fn polish_vertex(
    xs: &[f64],
    ys: &[f64],
    tau: f64,
    b0: f64,
    b1: f64,
    max_pivots: usize,
) -> Result<(f64, f64, f64, usize)> {
    let anchor = (0..xs.len())
        .min_by(|&i, &j| {
            let ri = (ys[i] - b0 - b1 * xs[i]).abs();
            let rj = (ys[j] - b0 - b1 * xs[j]).abs();
            ri.total_cmp(&rj)
        })
        .expect("non-empty");
    let (mut c0, mut c1, q) = best_line_through(xs, ys, tau, anchor)
        .ok_or_else(|| Error::RankDeficient("all notionals are equal".into()))?;
    let mut basis = [anchor, q];
    let mut loss = loss_of(xs, ys, c0, c1, tau);
    let mut pivots = 1;
    loop {
        let scale = ys.iter().fold(0.0f64, |m, y| m.max(y.abs())) + c0.abs();
        let on_line: Vec<usize> = (0..xs.len())
            .filter(|&k| {
                basis.contains(&k)
                    || (ys[k] - c0 - c1 * xs[k]).abs() <= 1e-12 * (scale + (c1 * xs[k]).abs())
            })
            .collect();
        let mut improved: Option<(f64, f64, f64, [usize; 2])> = None;
        for &z in &on_line {
            if let Some((n0, n1, nq)) = best_line_through(xs, ys, tau, z) {
                let l = loss_of(xs, ys, n0, n1, tau);
                let best_so_far = improved.map_or(loss, |b| b.2);
                if l < best_so_far - 1e-15 * loss.abs().max(f64::MIN_POSITIVE) {
                    improved = Some((n0, n1, l, [z, nq]));
                }
            }
        }
        match improved {
            Some((n0, n1, l, b)) => {
                let change = (n0 - c0).abs().max((n1 - c1).abs());
                c0 = n0;
                c1 = n1;
                loss = l;
                basis = b;
                pivots += 1;
                if pivots > max_pivots {
                    return Err(Error::NonConvergence {
                        iterations: pivots,
                        last_change: change,
                        loss,
                    });
                }
            }
            None => return Ok((c0, c1, loss, pivots)),
        }
    }
}

/// `max(0, intercept + slope * notional)`.
pub fn predict_spread(curve: &SpreadCurve, notional: f64) -> f64 {
    (curve.intercept + curve.slope * notional).max(0.0)
}

/// Root exponent `a` used to scale spreads by relative 24h volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ScalingExponent(f64);

impl ScalingExponent {
    pub const DEFAULT_GRID: [f64; 3] = [2.0, 5.0, 10.0];

    pub fn new(a: f64) -> Result<Self> {
        if a.is_finite() && a > 0.0 {
            Ok(ScalingExponent(a))
        } else {
            Err(Error::InvalidInput(format!("scaling exponent must be positive, got {a}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ScalingExponent {
    type Error = Error;
    fn try_from(a: f64) -> Result<Self> {
        ScalingExponent::new(a)
    }
}

impl From<ScalingExponent> for f64 {
    fn from(a: ScalingExponent) -> f64 {
        a.0
    }
}

impl fmt::Display for ScalingExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `(reference_volume / target_volume)^(1/a)`.
pub fn scaling_factor(reference_volume: f64, target_volume: f64, a: ScalingExponent) -> Result<f64> {
    if !(target_volume.is_finite() && target_volume > 0.0) {
        return Err(Error::InvalidInput(format!(
            "target 24h volume must be positive, got {target_volume}"
        )));
    }
    if !(reference_volume.is_finite() && reference_volume > 0.0) {
        return Err(Error::InvalidInput(format!(
            "reference 24h volume must be positive, got {reference_volume}"
        )));
    }
    Ok((reference_volume / target_volume).powf(1.0 / a.get()))
}

/// Spread of `target` on `date` for a trade of `notional`, scaled from the
/// reference curve by relative 24h volume.
pub fn scale_spread(
    base: &SpreadCurve,
    target: &AssetId,
    dataset: &MarketDataset,
    date: NaiveDate,
    a: ScalingExponent,
    notional: f64,
) -> Result<f64> {
    let target_volume = dataset.volume_at(target, date)?;
    if !(target_volume > 0.0) {
        return Err(Error::MissingValue {
            what: "positive 24h volume",
            asset: target.clone(),
            date,
        });
    }
    let factor = scaling_factor(base.reference_volume_24h, target_volume, a)?;
    Ok(predict_spread(base, notional) * factor)
}
