//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Set `CRIXETF_ORIGINAL_CONFIG` to a config over the original 2020-07 to
//! 2021-06 data to also print the informational comparison run.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::Datelike;
use common::{brute_force_k, d, fixture, pair_enumeration_loss, rel_close, trade_spec, write_project};
use crixetf_core::cli::run_backtests;
use crixetf_core::config::LoadedConfig;
use crixetf_core::flows::{generate_flows, FlowModelParams, FlowSchedule};
use crixetf_core::index::{index_value, select_constituent_count, DateRange, IndexHistory, IndexParams, IndexState, PriceMap};
use crixetf_core::market_data::{AssetId, AttentionSeries, MarketDataset};
use crixetf_core::simulator::{
    performance_summary, run_backtest, sharpe_ratio, BacktestSettings, CostSettings, SeriesPoint, SimulationResult,
};
use crixetf_core::spread::{
    fit_quantile, predict_spread, scaling_factor, QuantileFitOptions, QuantileLevel, ScalingExponent, SpreadCurve,
    SpreadObservation,
};
use crixetf_core::synthetic::{generate, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: f64, what: &str) -> std::result::Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit, || {
        format!("{what} took {:.2} s, limit {limit} s", elapsed.as_secs_f64())
    })
}

fn btc() -> AssetId {
    AssetId::new("BTC").unwrap()
}

fn settings(start: &str, end: &str) -> BacktestSettings {
    BacktestSettings {
        start: d(start),
        end: d(end),
        initial_capital: 1e6,
        benchmark: btc(),
        index: IndexParams::default(),
        costs: CostSettings::default(),
        flows: None,
    }
}

fn published_curve() -> SpreadCurve {
    SpreadCurve {
        asset: btc(),
        quantile: QuantileLevel::Level(0.95),
        intercept: 1.866219e-4,
        slope: 5.546762e-9,
        reference_date: d("2020-06-01"),
        reference_volume_24h: 3e10,
    }
}

fn a(x: f64) -> ScalingExponent {
    ScalingExponent::new(x).unwrap()
}

fn frictionless_replication() -> Check {
    let ds = fixture(1, 10, 460);
    let mut s = settings("2020-04-01", "2021-03-31");
    s.costs.enabled = false;
    let t = Instant::now();
    let r = run_backtest(&ds, &s, None).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let check = |r: &SimulationResult| -> std::result::Result<f64, String> {
        let r0 = r.series[0].etf_value / r.series[0].index_level;
        let mut worst = 0.0f64;
        for p in &r.series {
            worst = worst.max(((p.etf_value / p.index_level) / r0 - 1.0).abs());
        }
        ensure(worst <= 1e-9, || format!("ratio drift {worst:e}"))?;
        Ok(worst)
    };
    let mut worst = check(&r)?;
    ensure(r.series.len() >= 360, || format!("only {} days simulated", r.series.len()))?;
    within(elapsed, 1.0, "12-month 10-asset backtest")?;
    for seed in 2..12 {
        let ds = fixture(seed, 2 + seed as usize % 7, 300);
        let r = run_backtest(&ds, &settings("2020-02-01", "2020-10-15").with_costs_off(), Some(a(2.0)))
            .map_err(|e| e.to_string())?;
        worst = worst.max(check(&r)?);
    }
    Ok(format!("max ratio drift {worst:.1e}, 12-month run {:.3} s", elapsed.as_secs_f64()))
}

trait CostsOff {
    fn with_costs_off(self) -> Self;
}

impl CostsOff for BacktestSettings {
    fn with_costs_off(mut self) -> Self {
        self.costs.enabled = false;
        self
    }
}

fn random_settings(rng: &mut ChaCha20Rng) -> (MarketDataset, BacktestSettings) {
    let ds = fixture(rng.random(), rng.random_range(2..=10), 300);
    let mut s = settings("2020-03-01", "2020-10-20");
    s.costs.spread_curve = Some(published_curve());
    s.flows = Some(FlowModelParams {
        noise_scale: rng.random_range(0.0..2e5),
        seed: rng.random(),
        ..Default::default()
    });
    (ds, s)
}

fn delta_conservation() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut dates = 0;
    for _ in 0..100 {
        let (ds, s) = random_settings(&mut rng);
        let r = run_backtest(&ds, &s, Some(a(5.0))).map_err(|e| e.to_string())?;
        for rep in &r.reports {
            let target = if rep.initial { 1.0 } else { 0.0 };
            let err = (rep.delta_sum() - target).abs();
            ensure(err <= 1e-12, || format!("{}: sum of deltas off by {err:e}", rep.date))?;
            worst = worst.max(err);
            dates += 1;
        }
    }
    within(t.elapsed(), 10.0, "100 fixtures")?;
    Ok(format!("{dates} rebalances, max error {worst:.1e}, {:.2} s", t.elapsed().as_secs_f64()))
}

fn laspeyres() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut worst_h = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=15);
        let members: Vec<_> = (0..n)
            .map(|i| {
                let p = 10f64.powf(rng.random_range(-3.0..5.0));
                let c = 10f64.powf(rng.random_range(3.0..12.0));
                (AssetId::new(format!("X{i}")).unwrap(), p, c)
            })
            .collect();
        let level = rng.random_range(1.0..1e4);
        let state = IndexState::from_market_caps(d("2021-01-01"), members.clone(), level).map_err(|e| e.to_string())?;
        let lambda = 10f64.powf(rng.random_range(-3.0..3.0));
        let prices: PriceMap = members.iter().map(|m| (m.0.clone(), m.1 * lambda)).collect();
        let v = index_value(&state, &prices).map_err(|e| e.to_string())?;
        let err = (v / (lambda * level) - 1.0).abs();
        ensure(err <= 1e-12, || format!("homogeneity error {err:e}"))?;
        worst_h = worst_h.max(err);
    }
    let mut worst_c = 0.0f64;
    let mut joins = 0;
    for seed in 0..30 {
        let ds = fixture(seed, 2 + seed as usize % 9, 300);
        let dates = ds.rebalance_dates(d("2020-03-01"), d("2020-10-20"));
        let h = IndexHistory::build(&ds, &dates, &IndexParams::default()).map_err(|e| e.to_string())?;
        for w in h.states.windows(2) {
            let date = w[1].as_of;
            let prices: PriceMap = ds.assets().map(|x| (x.clone(), ds.price_at(x, date).unwrap())).collect();
            let before = index_value(&w[0], &prices).map_err(|e| e.to_string())?;
            let after = index_value(&w[1], &prices).map_err(|e| e.to_string())?;
            let err = (after / before - 1.0).abs();
            ensure(rel_close(before, after, 1e-9), || format!("{date}: jump {err:e}"))?;
            worst_c = worst_c.max(err);
            joins += 1;
        }
    }
    Ok(format!("homogeneity max {worst_h:.1e}, continuity max {worst_c:.1e} over {joins} rebalances"))
}

fn aic_oracle() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let t = Instant::now();
    let mut ks = BTreeMap::new();
    for _ in 0..100 {
        let assets = rng.random_range(2..=6);
        let days = rng.random_range(10..=90);
        let ds = fixture(rng.random(), assets, days);
        let range = DateRange::new(ds.calendar()[0], *ds.calendar().last().unwrap());
        let candidates: Vec<usize> = (1..=assets).collect();
        let got = select_constituent_count(&ds, &candidates, range, 1e-3).map_err(|e| e.to_string())?;
        let want = brute_force_k(&ds, range, 1e-3);
        ensure(got.k_star == want, || format!("selected {} but exhaustive scan gives {want}", got.k_star))?;
        *ks.entry(want).or_insert(0) += 1;
    }
    within(t.elapsed(), 30.0, "100 fixtures")?;
    Ok(format!("100/100 match, k distribution {ks:?}, {:.2} s", t.elapsed().as_secs_f64()))
}

fn published_spread_curve() -> Check {
    let c = published_curve();
    let at0 = predict_spread(&c, 0.0);
    let at1m = predict_spread(&c, 1e6);
    ensure(at0 == 1.866219e-4, || format!("notional 0 gives {at0:e}"))?;
    ensure((at1m - 5.733e-3).abs() <= 1e-6, || format!("notional 1e6 gives {at1m:e}"))?;
    Ok(format!("{at0:e} at 0, {at1m:.6e} at 1e6"))
}

fn quantile_regression() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let obs: Vec<SpreadObservation> = (0..10_000)
        .map(|_| {
            let x: f64 = rng.random_range(0.0..2e6);
            let z: f64 = unit.sample(&mut rng);
            SpreadObservation {
                notional: x,
                spread_fraction: 1.866219e-4 + 5.546762e-9 * x + z * 1e-4 * (1.0 + x / 5e5),
            }
        })
        .collect();
    let t = Instant::now();
    let fit = fit_quantile(&obs, 0.95, &QuantileFitOptions::default()).map_err(|e| e.to_string())?;
    let above = obs
        .iter()
        .filter(|o| o.spread_fraction > fit.intercept + fit.slope * o.notional)
        .count() as f64
        / obs.len() as f64;
    ensure((above - 0.05).abs() <= 0.02, || format!("{:.2}% strictly above", above * 100.0))?;

    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(3..=20);
        let small: Vec<SpreadObservation> = (0..n)
            .map(|_| {
                let x: f64 = rng.random_range(0.0..1e6);
                SpreadObservation {
                    notional: x,
                    spread_fraction: 2e-4 + 5e-9 * x + rng.random_range(-1.0..1.0) * 1e-4 * (1.0 + x / 1e6),
                }
            })
            .collect();
        let tau = [0.05, 0.25, 0.5, 0.75, 0.95][rng.random_range(0..5)];
        let got = fit_quantile(&small, tau, &QuantileFitOptions::default()).map_err(|e| e.to_string())?;
        let want = pair_enumeration_loss(&small, tau);
        let err = (got.loss - want).abs();
        ensure(err <= 1e-9, || format!("n={n} tau={tau}: loss {} vs optimum {want}", got.loss))?;
        worst = worst.max(err);
    }
    within(t.elapsed(), 60.0, "quantile checks")?;
    Ok(format!(
        "{:.2}% above on 10000 points, 200 instances max loss gap {worst:.1e}, {:.2} s",
        above * 100.0,
        t.elapsed().as_secs_f64()
    ))
}

fn spread_scaling() -> Check {
    let f = |r: f64, t: f64, x: f64| scaling_factor(r, t, a(x)).map_err(|e| e.to_string());
    for x in [2.0, 5.0, 10.0] {
        let v = f(7e9, 7e9, x)?;
        ensure(v == 1.0, || format!("equal volumes, a={x}: {v}"))?;
    }
    let v = f(4e8, 1e8, 2.0)?;
    ensure(v == 2.0, || format!("ratio 4, a=2: {v}"))?;
    for ratio in [1.5, 4.0, 100.0, 1e6] {
        let fs: Vec<f64> = [2.0, 5.0, 10.0].iter().map(|x| f(ratio, 1.0, *x)).collect::<Result<_, _>>()?;
        ensure(fs[0] > fs[1] && fs[1] > fs[2] && fs[2] > 1.0, || format!("ratio {ratio}: {fs:?}"))?;
    }
    Ok("unit factor, square root of 4, monotone decay to 1".into())
}

fn cost_drag() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut checked = 0;
    for _ in 0..50 {
        let (ds, s) = random_settings(&mut rng);
        let r = run_backtest(&ds, &s, Some(a(2.0))).map_err(|e| e.to_string())?;
        let gap = r.cost_gap_in_index_units();
        ensure(gap.first().is_some_and(|g| g.1 > 0.0), || "no initial cost".into())?;
        for w in gap.windows(2) {
            let slack = 1e-12 * w[0].1.abs().max(1.0);
            ensure(w[1].1 >= w[0].1 - slack, || format!("{}: gap fell from {} to {}", w[1].0, w[0].1, w[1].1))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} consecutive rebalance pairs non-decreasing in index units"))
}

fn monthly_attention(start: &str, months: usize, low: f64, high: f64) -> AttentionSeries {
    let mut points = Vec::new();
    let mut day = d(start);
    let end = day.checked_add_months(chrono::Months::new(months as u32)).unwrap();
    while day < end {
        let m = (day.year() * 12 + day.month() as i32) as usize;
        points.push((day, if m.is_multiple_of(2) { low } else { high }));
        day += chrono::Duration::days(1);
    }
    AttentionSeries::new(points).unwrap()
}

fn flow_model() -> Check {
    let ds = generate(&SyntheticSpec { assets: 3, days: 400, ..Default::default() }).map_err(|e| e.to_string())?;
    let dates = ds.rebalance_dates(d("2020-04-01"), d("2021-01-31"));
    let p = FlowModelParams { seed: 77, noise_scale: 25_000.0, ..Default::default() };
    let x = generate_flows(ds.attention(), &dates, &p).map_err(|e| e.to_string())?;
    let y = generate_flows(ds.attention(), &dates, &p).map_err(|e| e.to_string())?;
    ensure(x.to_csv().as_bytes() == y.to_csv().as_bytes(), || "same seed, different schedules".into())?;
    let z = generate_flows(ds.attention(), &dates, &FlowModelParams { seed: 78, ..p.clone() })
        .map_err(|e| e.to_string())?;
    ensure(x != z, || "different seeds gave the same schedule".into())?;

    let attention = monthly_attention("2020-01-01", 14, 40.0, 60.0);
    let dates: Vec<_> = (3..12).map(|m| d("2020-01-01").checked_add_months(chrono::Months::new(m)).unwrap()).collect();
    let p = FlowModelParams { beta_up: 0.5, beta_down: 0.1, noise_scale: 0.0, seed: 1, ..Default::default() };
    let s: FlowSchedule = generate_flows(&attention, &dates, &p).map_err(|e| e.to_string())?;
    let ups = s.entries.iter().skip(1).filter(|e| e.1 > 0.0).count();
    let downs = s.entries.iter().skip(1).filter(|e| e.1 < 0.0).count();
    ensure(ups == downs && ups > 0, || format!("shocks not symmetric: {ups} up, {downs} down"))?;
    let total = s.cumulative_net_flow();
    ensure(total > 0.0, || format!("cumulative flow {total}"))?;
    Ok(format!("byte-identical schedules, cumulative flow {total:.0} over {ups} up and {downs} down shocks"))
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in std::fs::read_dir(&p).unwrap() {
            let e = e.unwrap().path();
            if e.is_dir() {
                stack.push(e);
            } else {
                out.insert(e.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&e).unwrap());
            }
        }
    }
    out
}

fn end_to_end_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds = generate(&SyntheticSpec {
        assets: 8,
        days: 400,
        seed: 10,
        trades: Some(trade_spec(500, 1.0)),
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let path = write_project(dir.path(), &ds, "2020-04-01", "2021-01-31", "[flows]\nseed = 5\nnoise_scale = 50000.0\n");
    let mut outputs = Vec::new();
    for name in ["one", "two"] {
        let cfg = LoadedConfig::load(&path, &[]).map_err(|e| e.to_string())?;
        run_backtests(&cfg, &dir.path().join(name)).map_err(|e| e.to_string())?;
        outputs.push(files(&dir.path().join(name)));
    }
    ensure(outputs[0] == outputs[1], || {
        let differ: Vec<_> = outputs[0]
            .iter()
            .filter(|(k, v)| outputs[1].get(*k) != Some(*v))
            .map(|(k, _)| k.display().to_string())
            .collect();
        format!("outputs differ: {differ:?}")
    })?;
    let bytes: usize = outputs[0].values().map(Vec::len).sum();
    Ok(format!("{} files, {bytes} bytes identical", outputs[0].len()))
}

fn sharpe_formula() -> Check {
    // mean 0.00625, sample std sqrt(1.26875e-3 / 3), times sqrt(365)
    let r = [0.01, -0.02, 0.03, 0.005];
    let mean = r.iter().sum::<f64>() / 4.0;
    let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 3.0;
    let by_hand = mean / var.sqrt() * 365f64.sqrt();
    ensure((by_hand - 5.806_294_359_330_4).abs() < 1e-9, || format!("hand value {by_hand}"))?;
    let direct = sharpe_ratio(&r).map_err(|e| e.to_string())?.ok_or("zero variance")?;
    let mut v = 100.0;
    let mut series = vec![SeriesPoint {
        date: d("2021-01-01"),
        etf_value: v,
        index_level: v,
        replication_value: v,
        benchmark_value: v,
    }];
    for (i, x) in r.iter().enumerate() {
        v *= f64::exp(*x);
        let date = d("2021-01-02") + chrono::Duration::days(i as i64);
        series.push(SeriesPoint { date, etf_value: v, index_level: v, replication_value: v, benchmark_value: v });
    }
    let result = SimulationResult {
        exponent: None,
        reports: vec![],
        series,
        flows: FlowSchedule { entries: vec![] },
        states: vec![],
        benchmark: btc(),
    };
    let summary = performance_summary(&result).map_err(|e| e.to_string())?;
    for (name, s) in [("sharpe_ratio", Some(direct)), ("etf", summary.etf_sharpe), ("benchmark", summary.benchmark_sharpe)] {
        let s = s.ok_or(format!("{name}: no value"))?;
        ensure((s - by_hand).abs() < 1e-9, || format!("{name}: {s} vs {by_hand}"))?;
    }
    Ok(format!("{by_hand:.10} matches"))
}

fn original_data_comparison() {
    let Ok(path) = std::env::var("CRIXETF_ORIGINAL_CONFIG") else {
        println!("SKIP 11b original-data comparison (CRIXETF_ORIGINAL_CONFIG not set)");
        return;
    };
    let out = tempfile::tempdir().unwrap();
    let results = LoadedConfig::load(Path::new(&path), &[]).and_then(|cfg| run_backtests(&cfg, out.path()));
    let results = match results {
        Ok(r) => r,
        Err(e) => {
            println!("INFO 11b original-data run failed: {e}");
            return;
        }
    };
    let close = |got: f64, want: f64| if rel_close(got, want, 0.2) { "within 20%" } else { "outside 20%" };
    for r in &results {
        let Ok(s) = performance_summary(r) else { continue };
        if let Some(t) = &s.turnover_one_sided {
            println!(
                "INFO 11b a={:?} turnover mean {:.4} ({}) min {:.4} ({}) max {:.4} ({})",
                s.exponent,
                t.mean,
                close(t.mean, 0.052),
                t.min,
                close(t.min, 0.022),
                t.max,
                close(t.max, 0.152)
            );
        }
        if let (Some(e), Some(b)) = (s.etf_sharpe, s.benchmark_sharpe) {
            println!(
                "INFO 11b a={:?} Sharpe ETF {e:.3} ({}) benchmark {b:.3} ({})",
                s.exponent,
                close(e, 0.89),
                close(b, 0.66)
            );
        }
    }
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("frictionless replication", frictionless_replication),
        ("delta conservation", delta_conservation),
        ("Laspeyres homogeneity and continuity", laspeyres),
        ("AIC oracle equivalence", aic_oracle),
        ("published spread curve", published_spread_curve),
        ("quantile regression", quantile_regression),
        ("spread scaling", spread_scaling),
        ("cost drag monotonicity", cost_drag),
        ("flow determinism and asymmetry", flow_model),
        ("end-to-end determinism", end_to_end_determinism),
        ("Sharpe formula", sharpe_formula),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.2} s]", i + 1);
            }
        }
    }
    original_data_comparison();
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
