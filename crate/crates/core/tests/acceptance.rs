//! Acceptance criteria. Each test prints one PASS/FAIL line and asserts.
//! Tests take a shared lock so the runtime limits are measured without
//! competing for the CPU.

use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rsi_forecast::eval::{
    improvement_pct, run_ablation, sensitivity_report, AblationConfig, AblationReport, PatternSel,
};
use rsi_forecast::features::{
    apply_scaling, fit_scaling, invert_target, MinMax, Sample, SampleSet,
};
use rsi_forecast::market_data::{
    clear_pay_as_bid, synthesize, write_csv, Bid, HourlyRecord, MarketDataset, SimConfig,
};
use rsi_forecast::mlp::{
    jacobian, model_from_str, model_to_string, train_lm, MlpModel, Network, TrainConfig,
};
use rsi_forecast::rsi::{condition_report, market_rsi, rsi_per_generator, RsiSeries};
use rsi_forecast::{Error, Regime};

// Pinned thresholds.
const JACOBIAN_MAX_REL_ERR: f64 = 1e-4;
const JACOBIAN_FD_STEP: f64 = 1e-6;
const JACOBIAN_MIN_ENTRY: f64 = 1e-8;
const JACOBIAN_RUNTIME: Duration = Duration::from_secs(10);
const SINE_TARGET_MSE: f64 = 1e-3;
const SINE_MIN_SUCCESSES: usize = 9;
const SINE_RUNTIME: Duration = Duration::from_secs(30);
const RSI_SCALE_REL_TOL: f64 = 1e-9;
const CLEARING_TOL: f64 = 1e-9;
const ABLATION_SEEDS: u64 = 10;
const ABLATION_RUNTIME: Duration = Duration::from_secs(600);
const SIGN_TEST_ALPHA: f64 = 0.05;
const IMPROVEMENT_TOL: f64 = 0.01;
const ROUND_TRIP_TOL: f64 = 1e-12;

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(())).lock().unwrap_or_else(|e| e.into_inner())
}

/// Written straight to stderr so the line shows up even when the harness
/// captures test output.
fn report(id: u32, name: &str, pass: bool, detail: String) {
    let line = format!("criterion {id:>2} [{}] {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn sample_set(rows: Vec<(Vec<f64>, f64)>) -> SampleSet {
    let n = rows.first().map(|r| r.0.len()).unwrap_or(0);
    SampleSet {
        feature_names: (0..n).map(|i| format!("x{i}")).collect(),
        samples: rows
            .into_iter()
            .map(|(features, target)| Sample { date: NaiveDate::MIN, hour: 1, features, target })
            .collect(),
    }
}

/// Independent forward pass used as the finite-difference oracle.
fn oracle_output(n_in: usize, n_h: usize, w: &[f64], x: &[f64]) -> f64 {
    let mut y = w[w.len() - 1];
    for j in 0..n_h {
        let mut z = w[n_h * n_in + j];
        for i in 0..n_in {
            z += w[j * n_in + i] * x[i];
        }
        y += w[n_h * (n_in + 1) + j] / (1.0 + (-z).exp());
    }
    y
}

#[test]
fn c01_jacobian_matches_central_differences() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1AC0);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for _ in 0..100 {
        let n_in = rng.random_range(1..=10);
        let n_h = rng.random_range(1..=8);
        let n_samples = rng.random_range(1..=6);
        let w: Vec<f64> = (0..Network::n_params_for(n_in, n_h)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rows: Vec<(Vec<f64>, f64)> = (0..n_samples)
            .map(|_| ((0..n_in).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(-1.0..1.0)))
            .collect();
        let net = Network::from_params(n_in, n_h, w.clone()).unwrap();
        let data = sample_set(rows.clone());
        let (_, jac) = jacobian(&net, &data).unwrap();
        for (k, (x, y)) in rows.iter().enumerate() {
            for c in 0..w.len() {
                let mut plus = w.clone();
                let mut minus = w.clone();
                plus[c] += JACOBIAN_FD_STEP;
                minus[c] -= JACOBIAN_FD_STEP;
                let r_plus = y - oracle_output(n_in, n_h, &plus, x);
                let r_minus = y - oracle_output(n_in, n_h, &minus, x);
                let numeric = (r_plus - r_minus) / (2.0 * JACOBIAN_FD_STEP);
                let analytic = jac[(k, c)];
                if analytic.abs().max(numeric.abs()) > JACOBIAN_MIN_ENTRY {
                    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
                    worst = worst.max(rel);
                    checked += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst < JACOBIAN_MAX_REL_ERR && elapsed < JACOBIAN_RUNTIME;
    report(1, "Jacobian vs central differences", pass, format!("max rel err {worst:.2e} over {checked} entries in {elapsed:.2?}"));
    assert!(pass);
}

#[test]
fn c02_lm_fits_a_sine() {
    let _g = serial();
    let start = Instant::now();
    let data = sample_set(
        (0..200)
            .map(|k| {
                let x = k as f64 / 199.0;
                (vec![x], (2.0 * std::f64::consts::PI * x).sin())
            })
            .collect(),
    );
    let mut successes = 0;
    let mut monotone = true;
    let mut finals = Vec::new();
    for seed in 0..10 {
        let cfg = TrainConfig { seed, validation_fraction: 0.0, max_epochs: 300, ..TrainConfig::default() };
        let out = train_lm(&data, 10, &cfg).unwrap();
        if out.train_mse < SINE_TARGET_MSE {
            successes += 1;
        }
        let accepted: Vec<f64> = out.trace.steps.iter().filter(|s| s.accepted).filter_map(|s| s.sse_trial).collect();
        monotone &= accepted.windows(2).all(|w| w[1] <= w[0]);
        finals.push(format!("{:.1e}", out.train_mse));
    }
    let elapsed = start.elapsed();
    let pass = successes >= SINE_MIN_SUCCESSES && monotone && elapsed < SINE_RUNTIME;
    report(
        2,
        "LM fits sin(2 pi x)",
        pass,
        format!("{successes}/10 seeds below {SINE_TARGET_MSE:e}, monotone SSE {monotone}, {elapsed:.2?}; final MSEs {}", finals.join(" ")),
    );
    assert!(pass);
}

#[test]
fn c03_market_rsi_matches_brute_force() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut max_oracle_gap = 0.0f64;
    let mut max_scale_rel = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let caps: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1000.0)).collect();
        let demand = rng.random_range(1.0..3000.0);
        let total: f64 = caps.iter().sum();
        let brute = caps.iter().map(|c| 100.0 * (total - c) / demand).fold(f64::INFINITY, f64::min);
        let got = market_rsi(&caps, demand).unwrap();
        max_oracle_gap = max_oracle_gap.max((got - brute).abs());
        for lambda in [0.5, 2.0, 10.0] {
            let scaled: Vec<f64> = caps.iter().map(|c| c * lambda).collect();
            for i in 0..n {
                let a = rsi_per_generator(&caps, demand, i).unwrap();
                let b = rsi_per_generator(&scaled, demand * lambda, i).unwrap();
                if a != 0.0 || b != 0.0 {
                    max_scale_rel = max_scale_rel.max((a - b).abs() / a.abs().max(b.abs()));
                }
            }
            let m = market_rsi(&scaled, demand * lambda).unwrap();
            if got != 0.0 || m != 0.0 {
                max_scale_rel = max_scale_rel.max((got - m).abs() / got.abs().max(m.abs()));
            }
        }
    }
    let pass = max_oracle_gap == 0.0 && max_scale_rel < RSI_SCALE_REL_TOL;
    report(3, "market RSI oracle and scale invariance", pass, format!("oracle gap {max_oracle_gap:e}, max scale rel err {max_scale_rel:.1e}"));
    assert!(pass);
}

/// Weighted-average prices of every acceptance set consistent with price
/// order: a fully accepted prefix set plus at most one partial bid, with no
/// rejected bid cheaper than any accepted one.
fn clearing_oracle(bids: &[(f64, f64)], demand: f64) -> Vec<f64> {
    let n = bids.len();
    let mut out = Vec::new();
    for full in 0u32..(1 << n) {
        let in_full = |i: usize| full & (1 << i) != 0;
        let q_full: f64 = (0..n).filter(|&i| in_full(i)).map(|i| bids[i].1).sum();
        let c_full: f64 = (0..n).filter(|&i| in_full(i)).map(|i| bids[i].0 * bids[i].1).sum();
        let mut options: Vec<(Option<usize>, f64)> = Vec::new();
        if (q_full - demand).abs() <= 1e-9 * demand {
            options.push((None, c_full));
        }
        for m in (0..n).filter(|&m| !in_full(m)) {
            let take = demand - q_full;
            if take > 0.0 && take <= bids[m].1 {
                options.push((Some(m), c_full + take * bids[m].0));
            }
        }
        for (marginal, cost) in options {
            let accepted = |i: usize| in_full(i) || marginal == Some(i);
            let max_acc = (0..n).filter(|&i| accepted(i)).map(|i| bids[i].0).fold(f64::NEG_INFINITY, f64::max);
            let min_rej = (0..n).filter(|&i| !accepted(i)).map(|i| bids[i].0).fold(f64::INFINITY, f64::min);
            let partial_is_dearest = marginal.is_none_or(|m| (0..n).filter(|&i| in_full(i)).all(|i| bids[i].0 <= bids[m].0));
            if max_acc <= min_rej && partial_is_dearest {
                out.push(cost / demand);
            }
        }
    }
    out
}

#[test]
fn c04_clearing_matches_exhaustive_oracle() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut shortages = 0;
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=5);
        // Coarse prices make ties common.
        let raw: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.random_range(0..20) as f64 * 2.5, rng.random_range(1.0..100.0))).collect();
        let total: f64 = raw.iter().map(|b| b.1).sum();
        let demand = rng.random_range(0.5..total * 1.2);
        let bids: Vec<Bid> = raw.iter().map(|&(p, q)| Bid::new(p, q)).collect();
        match clear_pay_as_bid(&bids, demand) {
            Ok(c) => {
                let oracle = clearing_oracle(&raw, demand);
                if oracle.is_empty() {
                    mismatches += 1;
                    continue;
                }
                for o in oracle {
                    worst = worst.max((c.wavg_price - o).abs());
                }
                let served: f64 = c.accepted.iter().sum();
                if (served - demand).abs() > 1e-9 * demand {
                    mismatches += 1;
                }
            }
            Err(Error::Shortage { deficit }) => {
                shortages += 1;
                if total >= demand || (deficit - (demand - total)).abs() > 1e-9 {
                    mismatches += 1;
                }
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }
    let pass = worst <= CLEARING_TOL && mismatches == 0;
    report(4, "pay-as-bid clearing vs exhaustive oracle", pass, format!("max |wavg gap| {worst:.1e}, {shortages} shortage cases, {mismatches} mismatches"));
    assert!(pass);
}

fn ablation_dataset(pivotal_markup: f64) -> (MarketDataset, RsiSeries) {
    let cfg = SimConfig { pivotal_markup, ..SimConfig::default() };
    assert!(cfg.days >= 20 * 7);
    let data = synthesize(&cfg).unwrap();
    let rsi = RsiSeries::from_dataset(&data).unwrap();
    (data, rsi)
}

fn peak_ablation(data: &MarketDataset, rsi: &RsiSeries) -> AblationReport {
    let seeds: Vec<u64> = (0..ABLATION_SEEDS).collect();
    run_ablation(data, rsi, &[PatternSel::All], &[Regime::peak()], &AblationConfig::default(), &seeds).unwrap()
}

#[test]
fn c05_rsi_inputs_improve_peak_forecasts() {
    let _g = serial();
    let start = Instant::now();
    let (data, rsi) = ablation_dataset(2.0);
    let rep = peak_ablation(&data, &rsi);
    let elapsed = start.elapsed();
    let row = rep.row(PatternSel::All, "peak").unwrap();
    let mean = row.mean_seed_improvement_pct.unwrap();
    let pass = mean > 0.0 && row.n_seeds == ABLATION_SEEDS as usize && elapsed < ABLATION_RUNTIME;
    report(
        5,
        "directional ablation (markup 2, peak, all days)",
        pass,
        format!(
            "mean improvement {mean:.2}% over {} seeds (RMSE {:.4} with vs {:.4} without), {elapsed:.1?}",
            row.n_seeds,
            row.rmse_with_rsi.unwrap(),
            row.rmse_without_rsi.unwrap()
        ),
    );
    assert!(pass);
}

#[test]
fn c06_no_market_power_no_effect() {
    let _g = serial();
    let (data, rsi) = ablation_dataset(1.0);
    let rep = peak_ablation(&data, &rsi);
    let row = rep.row(PatternSel::All, "peak").unwrap();
    let test = row.sign_test.unwrap();
    let pass = !test.significant(SIGN_TEST_ALPHA) && row.n_seeds == ABLATION_SEEDS as usize;
    report(
        6,
        "negative control (markup 1)",
        pass,
        format!(
            "{} positive / {} negative seeds, sign-test p = {:.3}, mean improvement {:.2}%",
            test.positives,
            test.negatives,
            test.p_value,
            row.mean_seed_improvement_pct.unwrap()
        ),
    );
    assert!(pass);
}

#[test]
fn c07_correlation_signs() {
    let _g = serial();
    let (data, rsi) = ablation_dataset(2.0);
    let rows = sensitivity_report(&data, &rsi, &[Regime::peak(), Regime::offpeak()]).unwrap();
    let pass = rows.iter().all(|r| r.price_load > 0.0 && r.price_rsi < 0.0);
    let detail = rows
        .iter()
        .map(|r| format!("{}: r(P,D) = {:.3}, r(P,RSI) = {:.3}", r.regime, r.price_load, r.price_rsi))
        .collect::<Vec<_>>()
        .join("; ");
    report(7, "correlation signs", pass, detail);
    assert!(pass);
}

#[test]
fn c08_condition_report_on_engineered_fleet() {
    let _g = serial();
    // Fleet [600, 300, 300]: market RSI = 100 * 600 / load. Load 600 gives
    // RSI 100 (<= 110), load 500 gives 120.
    let start = NaiveDate::from_ymd_opt(2013, 1, 1).unwrap();
    let peak = Regime::peak();
    let mut records = Vec::new();
    let mut scarce_left = 12; // of 8 days x 6 peak hours = 48
    for d in 0..8 {
        for hour in 1..=24u8 {
            let load = if peak.contains(hour) {
                if scarce_left > 0 {
                    scarce_left -= 1;
                    600.0
                } else {
                    500.0
                }
            } else {
                400.0
            };
            records.push(HourlyRecord {
                date: start + chrono::Duration::days(d),
                hour,
                load,
                wavg_price: 30.0,
                capacities: vec![600.0, 300.0, 300.0],
            });
        }
    }
    let data = MarketDataset::new(records).unwrap();
    let rep = condition_report(&RsiSeries::from_dataset(&data).unwrap(), &peak).unwrap();
    let pass = rep.share_le_110 == 0.25 && rep.share_gt_110 == 0.75 && rep.hours_counted == 48;
    report(8, "condition report shape", pass, format!("{:.4} / {:.4} over {} peak hours", rep.share_le_110, rep.share_gt_110, rep.hours_counted));
    assert!(pass);
}

#[test]
fn c09_improvement_arithmetic() {
    let _g = serial();
    let fri = improvement_pct(0.030, 0.0166).unwrap();
    let all = improvement_pct(0.0433, 0.0393).unwrap();
    let pass = (fri - 44.67).abs() <= IMPROVEMENT_TOL && (all - 9.24).abs() <= IMPROVEMENT_TOL;
    report(9, "improvement fixtures", pass, format!("{fri:.4}% and {all:.4}%"));
    assert!(pass);
}

#[test]
fn c10_determinism_and_round_trips() {
    let _g = serial();
    let cfg = SimConfig { days: 60, ..SimConfig::default() };
    let csv = |cfg: &SimConfig| {
        let mut buf = Vec::new();
        write_csv(&synthesize(cfg).unwrap(), &mut buf).unwrap();
        buf
    };
    let synth_identical = csv(&cfg) == csv(&cfg);

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rows: Vec<(Vec<f64>, f64)> = (0..120)
        .map(|_| {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..50.0)).collect();
            let y = x[0] * 0.3 + (x[1] / 10.0).sin() * 5.0 + 20.0;
            (x, y)
        })
        .collect();
    let raw = sample_set(rows);
    let scaling = fit_scaling(&raw).unwrap();
    let scaled = apply_scaling(&scaling, &raw).unwrap();
    let out = train_lm(&scaled, 4, &TrainConfig { max_epochs: 30, seed: 10, ..TrainConfig::default() }).unwrap();
    let model = MlpModel {
        network: out.network,
        fingerprint: raw.fingerprint(),
        feature_names: raw.feature_names.clone(),
        scaling: scaling.clone(),
        seed: 10,
    };
    let back = model_from_str(&model_to_string(&model).unwrap()).unwrap();
    let forward_identical = scaled.samples.iter().all(|s| {
        model.forward(&s.features).unwrap().to_bits() == back.forward(&s.features).unwrap().to_bits()
    }) && (0..200).all(|_| {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..3.0)).collect();
        model.forward(&x).unwrap().to_bits() == back.forward(&x).unwrap().to_bits()
    });

    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let lo: f64 = rng.random_range(-1e3..1e3);
        let mm = MinMax { min: lo, max: lo + rng.random_range(1e-3..1e4) };
        let x = rng.random_range(mm.min..=mm.max);
        worst = worst.max((mm.unscale(mm.scale(x)) - x).abs() / x.abs().max(1.0));
        let y = rng.random_range(scaling.target.min..=scaling.target.max);
        let ys = scaling.target.scale(y);
        worst = worst.max((invert_target(&scaling, ys) - y).abs() / y.abs().max(1.0));
    }
    let pass = synth_identical && forward_identical && worst < ROUND_TRIP_TOL;
    report(
        10,
        "determinism and round trips",
        pass,
        format!("synth CSV identical {synth_identical}, model forward bit-identical {forward_identical}, max scaling round-trip err {worst:.1e}"),
    );
    assert!(pass);
}
