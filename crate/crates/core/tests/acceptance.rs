//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs under `cargo test` with a custom harness.
//!
//! `cargo test --test acceptance -- <substring>` runs only matching criteria.

mod common;

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::{double_change_scenario, recovery_scenario, regime_scenario, rel, single_change_scenario, stationary_scenario};
use ebv::forecasting::{all_baselines, rolling_evaluation, EvaluationTable, RollingOptions, EBV_METHOD};
use ebv::model::Integrator;
use ebv::segmentation::{log_likelihood, segment, LikelihoodSpec};
use ebv::synthgen::{generate, random_hourly_gaps, ExtProfile, Regime, ScenarioSpec};
use ebv::{aic, fit_segment, reconstruct, HiveDataset, HiveParams, ModelConfig, SearchSpace, SegmentParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn cfg() -> ModelConfig {
    ModelConfig::default()
}

fn space() -> SearchSpace {
    SearchSpace::from_config(&cfg())
}

fn build(spec: &ScenarioSpec) -> HiveDataset {
    generate(spec, &cfg()).expect("valid scenario").0
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn integrator_oracle() -> Outcome {
    let c = cfg();
    let euler = c.clone().with_integrator(Integrator::EulerFine, 10_000);
    let mut worst = 0.0_f64;
    let mut at = HiveParams::new(0.0, 0.0, 0.0);
    for &s_c in &linspace(0.0, c.s_inf, 5) {
        for &s_h in &linspace(0.0, c.s_inf, 5) {
            for &theta in &linspace(31.0, 38.0, 5) {
                let params = HiveParams::new(s_c, s_h, theta);
                let spec = ScenarioSpec {
                    regimes: vec![Regime { start_day: 0, params }],
                    ext_profile: ExtProfile {
                        mean: theta,
                        day_jitter: 2.0,
                        ..ExtProfile::default()
                    },
                    seed: 7,
                    ..ScenarioSpec::default()
                };
                let d = build(&spec);
                let seg = [SegmentParams { range: 0..d.len(), params }];
                let a = reconstruct(&d, &seg, &c).unwrap();
                let b = reconstruct(&d, &seg, &euler).unwrap();
                for (x, y) in a.values().iter().zip(b.values()) {
                    let diff = (x.unwrap() - y.unwrap()).abs();
                    if diff > worst {
                        worst = diff;
                        at = params;
                    }
                }
            }
        }
    }
    outcome(
        worst <= 1e-3,
        format!("max |exact - euler| = {worst:.2e} °C at {at:?} (tol 1e-3, 125 parameter sets, 7 days)"),
    )
}

fn recovery() -> Outcome {
    let (space, c) = (space(), cfg());
    let mut exact_ok = 0;
    let mut worst = [0.0_f64; 3];
    for seed in 0..20 {
        let spec = recovery_scenario(seed, 0.0);
        let truth = spec.regimes[0].params;
        let d = build(&spec);
        let f = fit_segment(&d, 0..d.len(), &space, &c).unwrap();
        let err = [
            (f.params.s_c - truth.s_c).abs(),
            (f.params.s_h - truth.s_h).abs(),
            (f.params.theta_ideal - truth.theta_ideal).abs(),
        ];
        for (w, e) in worst.iter_mut().zip(err) {
            *w = w.max(e);
        }
        if err.iter().all(|&e| e <= 1e-3) {
            exact_ok += 1;
        }
    }
    let mut noisy_ok = 0;
    for seed in 0..20 {
        let spec = recovery_scenario(seed, 0.3);
        let truth = spec.regimes[0].params;
        let d = build(&spec);
        let f = fit_segment(&d, 0..d.len(), &space, &c).unwrap();
        if rel(f.params.s_c, truth.s_c) <= 0.10
            && rel(f.params.s_h, truth.s_h) <= 0.10
            && (f.params.theta_ideal - truth.theta_ideal).abs() <= 0.2
        {
            noisy_ok += 1;
        }
    }
    outcome(
        exact_ok == 20 && noisy_ok >= 18,
        format!(
            "noiseless {exact_ok}/20 within 1e-3 (worst abs err s_c {:.1e}, s_h {:.1e}, theta {:.1e}); \
             sigma=0.3 {noisy_ok}/20 within (10%, 10%, 0.2 °C), need 18",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn cut_points() -> Outcome {
    let (space, c, lik) = (space(), cfg(), LikelihoodSpec::default());
    let mut single_ok = 0;
    for seed in 0..20 {
        let (spec, day) = single_change_scenario(seed, 0.2);
        let d = build(&spec);
        let r = segment(&d, &space, &c, &lik).unwrap();
        if r.cut_points == [day * 24] {
            single_ok += 1;
        }
    }
    let mut double_ok = 0;
    for seed in 100..120 {
        let (spec, days) = double_change_scenario(seed, 0.2);
        let d = build(&spec);
        let r = segment(&d, &space, &c, &lik).unwrap();
        let found: Vec<usize> = r.cut_points.iter().map(|&t| d.day_of(t)).collect();
        if found.len() == 2 && found.iter().zip(days).all(|(&f, t)| f.abs_diff(t) <= 1) {
            double_ok += 1;
        }
    }
    outcome(
        single_ok >= 18 && double_ok >= 16,
        format!("single change exact {single_ok}/20 (need 18); double change within ±1 day {double_ok}/20 (need 16); noise 0.2 °C"),
    )
}

fn false_positives() -> Outcome {
    let (space, c, lik) = (space(), cfg(), LikelihoodSpec::default());
    let mut clean = 0;
    for seed in 0..100 {
        let d = build(&stationary_scenario(1000 + seed, 10, 0.2));
        if segment(&d, &space, &c, &lik).unwrap().cut_points.is_empty() {
            clean += 1;
        }
    }
    outcome(clean >= 95, format!("{clean}/100 stationary 10-day records with no cut (need 95)"))
}

fn aic_values() -> Outcome {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mle = LikelihoodSpec::default();
    let fixed1 = LikelihoodSpec::fixed(1.0);
    let ll = |r: &[f64], s: &LikelihoodSpec| log_likelihood(r, s).unwrap().value;
    let base = [0.3, -1.2, 0.7, 2.0];
    let c = 2.5;
    let scaled: Vec<f64> = base.iter().map(|x| x * c).collect();
    let checks = [
        ("lnL [0,0] fixed sigma 1", ll(&[0.0, 0.0], &fixed1), -ln2pi),
        ("lnL [0,0] fixed sigma 1 ≈ -1.837877", ll(&[0.0, 0.0], &fixed1), -1.8378770664093453),
        ("lnL [1,-1] mle", ll(&[1.0, -1.0], &mle), -(ln2pi + 1.0)),
        ("lnL [1,-1] mle ≈ -2.837877", ll(&[1.0, -1.0], &mle), -2.8378770664093453),
        ("mle scale shift", ll(&scaled, &mle) - ll(&base, &mle), -(base.len() as f64) * c.ln()),
        ("aic(-1.837877, 0, 3)", aic(-1.837877, 0, 3), 9.675754),
        ("aic(0, 2, 3)", aic(0.0, 2, 3), 22.0),
        ("aic cut increment", aic(-5.0, 3, 3) - aic(-5.0, 2, 3), 8.0),
    ];
    let failed: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-9)
        .map(|(n, got, want)| format!("{n}: got {got}, want {want}"))
        .collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} hand-computed values within 1e-9", checks.len())
        } else {
            failed.join("; ")
        },
    )
}

fn forecasting() -> Outcome {
    let (space, c) = (space(), cfg());
    let mut table = EvaluationTable::default();
    // one change per two-week inspection interval
    for seed in 0..4 {
        let spec = regime_scenario(200 + seed, 28, &[0, 14], 0.2);
        let d = build(&spec);
        table.extend(rolling_evaluation(&d, &space, &c, &all_baselines(), &RollingOptions::default()));
    }
    let summary = table.summary();
    let mean_of = |m: &str| summary.iter().find(|s| s.method == m).map(|s| s.mean_rmse);
    let Some(ebv) = mean_of(EBV_METHOD) else {
        return outcome(false, "no origins were evaluated");
    };
    let beaten: Vec<String> = summary
        .iter()
        .filter(|s| s.method != EBV_METHOD && s.mean_rmse < ebv)
        .map(|s| format!("{} {:.3}", s.method, s.mean_rmse))
        .collect();
    let improvement = table.improvement_over_best_baseline();
    let better = improvement.iter().filter(|&&x| x >= 0.2).count();
    // informational: against the single baseline with the lowest mean RMSE
    let best_method = summary
        .iter()
        .filter(|s| s.method != EBV_METHOD)
        .min_by(|a, b| a.mean_rmse.total_cmp(&b.mean_rmse))
        .map(|s| s.method.clone())
        .unwrap_or_default();
    let at = |origin: (&str, usize), m: &str| {
        table
            .rows
            .iter()
            .find(|r| (r.hive_id.as_str(), r.origin_day) == origin && r.method == m)
            .map(|r| r.rmse)
    };
    let mut vs_method = (0, 0);
    for r in table.rows.iter().filter(|r| r.method == EBV_METHOD) {
        if let Some(b) = at((&r.hive_id, r.origin_day), &best_method) {
            vs_method.1 += 1;
            if r.rmse <= 0.8 * b {
                vs_method.0 += 1;
            }
        }
    }
    let means: Vec<String> = summary.iter().map(|s| format!("{} {:.3}", s.method, s.mean_rmse)).collect();
    outcome(
        beaten.is_empty() && 2 * better >= improvement.len() && table.skipped.is_empty(),
        format!(
            "mean RMSE [{}]; >=20% better than the per-origin best baseline on {better}/{} origins (need half); \
             >=20% better than {best_method} on {}/{}; {} skipped",
            means.join(", "),
            improvement.len(),
            vs_method.0,
            vs_method.1,
            table.skipped.len()
        ),
    )
}

/// Fastest of repeated runs of each job. Jobs are interleaved round-robin
/// so slow phases of a shared machine hit every size alike.
fn fastest(jobs: &mut [Box<dyn FnMut() + '_>], min_rounds: usize, min_total: Duration) -> Vec<Duration> {
    let mut best = vec![Duration::MAX; jobs.len()];
    let started = Instant::now();
    let mut rounds = 0;
    while rounds < min_rounds || started.elapsed() < min_total {
        for (job, b) in jobs.iter_mut().zip(&mut best) {
            let t = Instant::now();
            job();
            *b = (*b).min(t.elapsed());
        }
        rounds += 1;
    }
    best
}

fn scaling() -> Outcome {
    let (space, c, lik) = (space(), cfg(), LikelihoodSpec::default());
    let data: Vec<_> = [30, 60, 120]
        .into_iter()
        .map(|days| {
            let spec = regime_scenario(300, days, &[0, days / 3, 2 * days / 3], 0.2);
            let (d, truth) = generate(&spec, &c).unwrap();
            let segs = truth.segments(d.len());
            (d, segs)
        })
        .collect();
    let mut recon_jobs: Vec<Box<dyn FnMut() + '_>> = data
        .iter()
        .map(|(d, segs)| {
            let c = &c;
            Box::new(move || {
                std::hint::black_box(reconstruct(d, segs, c).unwrap());
            }) as Box<dyn FnMut()>
        })
        .collect();
    let recon = fastest(&mut recon_jobs, 50, Duration::from_millis(500));
    let mut seg_jobs: Vec<Box<dyn FnMut() + '_>> = data
        .iter()
        .map(|(d, _)| {
            let (space, c, lik) = (&space, &c, &lik);
            Box::new(move || {
                std::hint::black_box(segment(d, space, c, lik).unwrap());
            }) as Box<dyn FnMut()>
        })
        .collect();
    let seg = fastest(&mut seg_jobs, 5, Duration::from_secs(5));
    let ratios = |t: &[Duration]| [t[1].as_secs_f64() / t[0].as_secs_f64(), t[2].as_secs_f64() / t[1].as_secs_f64()];
    let (rr, sr) = (ratios(&recon), ratios(&seg));
    let pass = rr.iter().chain(&sr).all(|&r| r <= 2.5) && seg[1] < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "fastest of repeated runs: reconstruct {:?}/{:?}/{:?} (ratios {:.2}, {:.2}); segment {:?}/{:?}/{:?} (ratios {:.2}, {:.2}); tol 2.5, 60-day segment < 120 s",
            recon[0], recon[1], recon[2], rr[0], rr[1], seg[0], seg[1], seg[2], sr[0], sr[1]
        ),
    )
}

fn missing_data() -> Outcome {
    let (space, c) = (space(), cfg());
    let mut worst = 0.0_f64;
    let mut ok = 0;
    for seed in 0..20 {
        let spec = recovery_scenario(seed, 0.0);
        let d = build(&spec);
        let full = fit_segment(&d, 0..d.len(), &space, &c).unwrap().params;
        let n = spec.num_ticks();
        let gappy = ScenarioSpec {
            missing_pattern: random_hourly_gaps(n, n / 10, 10_000 + seed),
            ext_missing_pattern: random_hourly_gaps(n, n / 10, 20_000 + seed),
            ..spec
        };
        let g = build(&gappy);
        let thinned = fit_segment(&g, 0..g.len(), &space, &c).unwrap().params;
        let change = rel(thinned.s_c, full.s_c)
            .max(rel(thinned.s_h, full.s_h))
            .max(rel(thinned.theta_ideal, full.theta_ideal));
        worst = worst.max(change);
        if change < 0.15 {
            ok += 1;
        }
    }
    outcome(
        ok == 20,
        format!("{ok}/20 scenarios within 15% after 10% core and 10% external gaps (worst relative change {:.1}%)", 100.0 * worst),
    )
}

fn read_result(path: &Path) -> serde_json::Value {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!(v["config_hash"].as_str().is_some_and(|h| h.len() == 64), "{path:?} lacks config_hash");
    v["result"].clone()
}

fn check_csv(path: &Path, header: &[&str], hash: &str) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(format!("# config_hash: {hash}").as_str()), "{path:?}");
    let body = lines.collect::<Vec<_>>().join("\n");
    let mut reader = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), header, "{path:?}");
    let mut n = 0;
    for row in reader.records() {
        assert_eq!(row.unwrap().len(), header.len());
        n += 1;
    }
    n
}

fn check_svg(path: &Path, hash: &str) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"), "{path:?}");
    assert!(text.contains(hash), "{path:?}");
}

fn cli_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        r#"
baselines = ["persistence", "seasonal_naive24", "arx", "holt_winters_additive"]

[forecasting]
fit_days = 3
horizon_days = 2

[[scenarios]]
hive_id = "changed"
num_days = 10
noise_sigma = 0.1
seed = 4
regimes = [
    { start_day = 0, params = { s_c = 20.0, s_h = 8.0, theta_ideal = 34.5 } },
    { start_day = 5, params = { s_c = 5.0, s_h = 8.0, theta_ideal = 34.5 } },
]
[scenarios.ext_profile]
mean = 33.5
day_jitter = 2.0
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = |args: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_ebv"))
            .args(args)
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        (o.status.success(), String::from_utf8_lossy(&o.stderr).into_owned())
    };
    let sensors = out.join("sensors.csv");
    let sensors_arg = sensors.to_str().unwrap();
    let steps = [
        ("simulate", run(&["simulate"])),
        ("segment", run(&["segment", "--input", sensors_arg])),
        ("evaluate", run(&["evaluate", "--input", sensors_arg])),
    ];
    if let Some((name, (_, err))) = steps.iter().find(|(_, (ok, _))| !ok) {
        return outcome(false, format!("{name} failed: {err}"));
    }

    let checked = std::panic::catch_unwind(|| {
        let summary = read_result(&out.join("summary.json"));
        let hash = summary["config_hash"].as_str().unwrap().to_string();
        let rows = check_csv(&sensors, &["timestamp", "hive_id", "sensor_location", "temperature_c"], &hash);
        assert_eq!(rows, 10 * 24 * 3);

        let seg = read_result(&out.join("segment_changed.json"));
        assert_eq!(seg["cut_days"], serde_json::json!([5]));
        assert_eq!(seg["segments"].as_array().unwrap().len(), 2);
        assert!(seg["aic"].is_f64() && seg["sigma_mle"].is_f64());
        assert!(!seg["aic_trace"].as_array().unwrap().is_empty());
        for s in seg["segments"].as_array().unwrap() {
            for k in ["s_c", "s_h", "theta_ideal"] {
                assert!(s["params"][k].is_f64(), "segment field {k}");
            }
            assert!(s["rmse"].is_f64() && s["start_time"].is_string());
        }
        let header = ["timestamp", "hive_id", "external", "observed_core", "reconstructed_core"];
        assert_eq!(check_csv(&out.join("segment_changed.csv"), &header, &hash), 240);
        check_svg(&out.join("segment_changed.svg"), &hash);
        assert_eq!(std::fs::read_to_string(out.join("segment_changed.svg")).unwrap().matches("class=\"cut\"").count(), 1);

        let eval = read_result(&out.join("evaluation.json"));
        assert_eq!(eval["summary"].as_array().unwrap().len(), 5);
        for s in eval["summary"].as_array().unwrap() {
            assert!(s["mean_rmse"].is_f64() && s["n"].as_u64() == Some(6));
        }
        let header = ["hive_id", "origin_day", "origin_time", "method", "rmse"];
        assert_eq!(check_csv(&out.join("evaluation.csv"), &header, &hash), 30);
        check_svg(&out.join("evaluation.svg"), &hash);
        check_svg(&out.join("simulate_changed.svg"), &hash);
    });
    match checked {
        Ok(()) => outcome(true, "simulate -> segment -> evaluate exit 0; JSON, CSV and SVG artifacts validated"),
        Err(e) => outcome(
            false,
            e.downcast_ref::<String>().cloned().unwrap_or_else(|| "artifact check failed".into()),
        ),
    }
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "integrator_oracle", budget: Some(Duration::from_secs(60)), run: integrator_oracle },
        Criterion { name: "parameter_recovery", budget: Some(Duration::from_secs(300)), run: recovery },
        Criterion { name: "cut_point_recovery", budget: Some(Duration::from_secs(600)), run: cut_points },
        Criterion { name: "false_positive_control", budget: None, run: false_positives },
        Criterion { name: "aic_unit_values", budget: None, run: aic_values },
        Criterion { name: "forecasting_benchmark", budget: Some(Duration::from_secs(900)), run: forecasting },
        Criterion { name: "linear_scaling", budget: None, run: scaling },
        Criterion { name: "missing_data_robustness", budget: None, run: missing_data },
        Criterion { name: "cli_end_to_end", budget: None, run: cli_end_to_end },
    ];
    // libtest-style flags such as --nocapture are ignored; a bare argument filters
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failures = 0;
    for c in criteria.iter().filter(|c| filter.as_deref().is_none_or(|f| c.name.contains(f))) {
        let started = Instant::now();
        let mut o = (c.run)();
        let elapsed = started.elapsed();
        if let Some(budget) = c.budget {
            if elapsed > budget {
                o.pass = false;
                o.detail.push_str(&format!("; over the {budget:?} budget"));
            }
        }
        if !o.pass {
            failures += 1;
        }
        println!(
            "{} {:<24} [{:>7.1}s] {}",
            if o.pass { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            o.detail
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
