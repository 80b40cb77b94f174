//! Seeded scenario builders shared by the integration and acceptance tests.

#![allow(dead_code)]

use ebv::synthgen::{ExtProfile, Regime, ScenarioSpec};
use ebv::HiveParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// External profile hovering around the ideal temperature, so both the
/// cooling and the heating branch are exercised every day.
fn straddling_profile(rng: &mut ChaCha8Rng, theta_ideal: f64, jitter: f64) -> ExtProfile {
    ExtProfile {
        mean: theta_ideal + rng.random_range(-1.5..1.5),
        amplitude: 8.0,
        heatwaves: Vec::new(),
        day_jitter: jitter,
    }
}

/// One-regime, seven-day scenario with strengths in `[3, 30]`.
pub fn recovery_scenario(seed: u64, noise_sigma: f64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = HiveParams::new(
        rng.random_range(3.0..30.0),
        rng.random_range(3.0..30.0),
        rng.random_range(33.0..36.0),
    );
    ScenarioSpec {
        hive_id: format!("recovery-{seed}"),
        num_days: 7,
        regimes: vec![Regime { start_day: 0, params }],
        ext_profile: straddling_profile(&mut rng, params.theta_ideal, 1.0),
        noise_sigma,
        seed,
        ..ScenarioSpec::default()
    }
}

/// Multiplies one randomly chosen strength by a factor in `[2, 4]` or its
/// inverse.
fn changed(rng: &mut ChaCha8Rng, p: HiveParams) -> HiveParams {
    let ratio = rng.random_range(2.0..4.0);
    let factor = if rng.random_bool(0.5) { ratio } else { 1.0 / ratio };
    let mut q = p;
    if rng.random_bool(0.5) {
        q.s_c *= factor;
    } else {
        q.s_h *= factor;
    }
    q
}

/// Scenario whose regimes start on the given days (the first must be 0);
/// each new regime scales one strength of the previous by at least 2x.
pub fn regime_scenario(seed: u64, num_days: usize, starts: &[usize], noise_sigma: f64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = HiveParams::new(
        rng.random_range(5.0..15.0),
        rng.random_range(5.0..15.0),
        rng.random_range(34.0..35.5),
    );
    let mut regimes = Vec::new();
    for (i, &d) in starts.iter().enumerate() {
        if i > 0 {
            p = changed(&mut rng, p);
        }
        regimes.push(Regime { start_day: d, params: p });
    }
    ScenarioSpec {
        hive_id: format!("regimes-{seed}"),
        num_days,
        regimes,
        ext_profile: straddling_profile(&mut rng, p.theta_ideal, 2.0),
        noise_sigma,
        seed,
        ..ScenarioSpec::default()
    }
}

/// Single change on a random day in `3..=7` of a ten-day record.
pub fn single_change_scenario(seed: u64, noise_sigma: f64) -> (ScenarioSpec, usize) {
    let day = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed).random_range(3..=7);
    (regime_scenario(seed, 10, &[0, day], noise_sigma), day)
}

/// Two changes at least four days apart in a fourteen-day record.
pub fn double_change_scenario(seed: u64, noise_sigma: f64) -> (ScenarioSpec, [usize; 2]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd0b1e);
    let d1 = rng.random_range(3..=6);
    let d2 = rng.random_range(d1 + 4..=11);
    (regime_scenario(seed, 14, &[0, d1, d2], noise_sigma), [d1, d2])
}

pub fn stationary_scenario(seed: u64, num_days: usize, noise_sigma: f64) -> ScenarioSpec {
    regime_scenario(seed, num_days, &[0], noise_sigma)
}

/// Relative difference, measured against `reference`.
pub fn rel(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs()
}
