//! Synthetic hives with known regimes.
//!
//! External temperature is a daily sinusoid peaking at 15:00 with optional
//! heatwave bumps. The core is integrated with the same propagator the
//! fitter uses, switching parameters at regime boundaries, then observed
//! through i.i.d. Gaussian noise and a gap mask.

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{HiveParams, ModelConfig, ModelError, Propagator, SegmentParams};
use crate::series::{HiveDataset, HiveType, SeriesError, TemperatureSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub start_day: usize,
    pub params: HiveParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heatwave {
    pub day: usize,
    /// Daily maximum of the external temperature on that day, °C.
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtProfile {
    pub mean: f64,
    /// Half the peak-to-trough swing, °C.
    pub amplitude: f64,
    pub heatwaves: Vec<Heatwave>,
    /// Standard deviation of a per-day offset added to the mean.
    pub day_jitter: f64,
}

impl Default for ExtProfile {
    fn default() -> Self {
        Self {
            mean: 28.0,
            amplitude: 8.0,
            heatwaves: Vec::new(),
            day_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub hive_id: String,
    pub num_days: usize,
    pub hive_type: HiveType,
    pub regimes: Vec<Regime>,
    pub ext_profile: ExtProfile,
    pub noise_sigma: f64,
    /// Gaps masking the observed core.
    pub missing_pattern: Vec<Gap>,
    /// Gaps masking the external (and peripheral) series.
    pub ext_missing_pattern: Vec<Gap>,
    /// Drop of the peripheral temperature on heatwave days for treated hives.
    pub ice_offset: f64,
    pub start: DateTime<Utc>,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            hive_id: "synthetic".into(),
            num_days: 7,
            hive_type: HiveType::Control,
            regimes: vec![Regime {
                start_day: 0,
                params: HiveParams::new(10.0, 4.0, 34.5),
            }],
            ext_profile: ExtProfile::default(),
            noise_sigma: 0.0,
            missing_pattern: Vec::new(),
            ext_missing_pattern: Vec::new(),
            ice_offset: 8.0,
            start: Utc.with_ymd_and_hms(2021, 7, 1, 0, 0, 0).unwrap(),
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn num_ticks(&self) -> usize {
        self.num_days * 24
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.num_days == 0 {
            return bad("num_days must be positive".into());
        }
        match self.regimes.first() {
            Some(r) if r.start_day == 0 => {}
            _ => return bad("regimes must start at day 0".into()),
        }
        for w in self.regimes.windows(2) {
            if w[1].start_day <= w[0].start_day {
                return bad("regime start days must be strictly increasing".into());
            }
        }
        if let Some(r) = self.regimes.last() {
            if r.start_day >= self.num_days {
                return bad(format!("regime starts at day {} past the end", r.start_day));
            }
        }
        for r in &self.regimes {
            r.params.validate(config)?;
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        let p = &self.ext_profile;
        if !(p.mean.is_finite() && p.amplitude >= 0.0 && p.day_jitter >= 0.0) {
            return bad("ext profile needs finite mean and non-negative amplitude/jitter".into());
        }
        if let Some(h) = p.heatwaves.iter().find(|h| h.day >= self.num_days) {
            return bad(format!("heatwave day {} past the end", h.day));
        }
        for g in self.missing_pattern.iter().chain(&self.ext_missing_pattern) {
            if g.start + g.len > self.num_ticks() {
                return bad(format!("gap {}+{} past the end", g.start, g.len));
            }
        }
        Ok(())
    }

    fn params_on_day(&self, day: usize) -> HiveParams {
        self.regimes
            .iter()
            .rev()
            .find(|r| r.start_day <= day)
            .map(|r| r.params)
            .expect("validated: first regime starts at day 0")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub regimes: Vec<Regime>,
    /// Regime start days after day 0.
    pub cut_days: Vec<usize>,
    pub cut_ticks: Vec<usize>,
    /// Core before noise and masking.
    pub clean_core: TemperatureSeries,
}

impl GroundTruth {
    pub fn segments(&self, num_ticks: usize) -> Vec<SegmentParams> {
        let mut edges: Vec<usize> = self.regimes.iter().map(|r| r.start_day * 24).collect();
        edges.push(num_ticks);
        self.regimes
            .iter()
            .zip(edges.windows(2))
            .map(|(r, w)| SegmentParams {
                range: w[0]..w[1],
                params: r.params,
            })
            .collect()
    }
}

fn diurnal(hour: usize) -> f64 {
    ((hour as f64 - 9.0) * std::f64::consts::TAU / 24.0).sin()
}

fn mask(values: &mut [Option<f64>], gaps: &[Gap]) {
    for g in gaps {
        for v in &mut values[g.start..g.start + g.len] {
            *v = None;
        }
    }
}

/// Builds a dataset and its ground truth from a scenario.
pub fn generate(spec: &ScenarioSpec, config: &ModelConfig) -> Result<(HiveDataset, GroundTruth), SynthError> {
    config.validate()?;
    spec.validate(config)?;
    let n = spec.num_ticks();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let prof = &spec.ext_profile;

    let jitter: Vec<f64> = if prof.day_jitter > 0.0 {
        let d = Normal::new(0.0, prof.day_jitter).expect("validated jitter");
        (0..spec.num_days).map(|_| d.sample(&mut rng)).collect()
    } else {
        vec![0.0; spec.num_days]
    };

    let mut ext = Vec::with_capacity(n);
    let mut adj = Vec::with_capacity(n);
    for t in 0..n {
        let (day, hour) = (t / 24, t % 24);
        let s = diurnal(hour);
        let base = prof.mean + jitter[day] + prof.amplitude * s;
        let wave = prof.heatwaves.iter().find(|h| h.day == day);
        let e = match wave {
            Some(h) => base + (h.peak - prof.mean - prof.amplitude - jitter[day]).max(0.0) * s.max(0.0),
            None => base,
        };
        ext.push(e);
        adj.push(match (spec.hive_type, wave) {
            (HiveType::Treated, Some(_)) => e - spec.ice_offset,
            _ => e,
        });
    }

    let mut clean = Vec::with_capacity(n);
    let p0 = spec.params_on_day(0);
    let prop0 = Propagator::new(&p0, config, 1.0);
    let (e0, a0) = (ext[0] - p0.theta_ideal, adj[0] - p0.theta_ideal);
    let k0 = prop0.rate(e0);
    // start at the steady state of the first tick's forcing
    let mut theta = p0.theta_ideal + if k0.abs() > 1e-12 { (e0 + a0) / k0 } else { 0.0 };
    for t in 0..n {
        clean.push(theta);
        let p = spec.params_on_day(t / 24);
        let prop = Propagator::new(&p, config, 1.0);
        let ti = p.theta_ideal;
        let next = prop.advance(theta - ti, ext[t] - ti, adj[t] - ti);
        if !next.is_finite() || next.abs() > crate::model::OVERFLOW_LIMIT {
            return Err(ModelError::NumericalOverflow { tick: t }.into());
        }
        theta = next + ti;
    }

    let mut core: Vec<Option<f64>> = if spec.noise_sigma > 0.0 {
        let d = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
        clean.iter().map(|c| Some(c + d.sample(&mut rng))).collect()
    } else {
        clean.iter().map(|&c| Some(c)).collect()
    };
    mask(&mut core, &spec.missing_pattern);

    let mut ext_obs: Vec<Option<f64>> = ext.iter().map(|&e| Some(e)).collect();
    mask(&mut ext_obs, &spec.ext_missing_pattern);
    let peri = match spec.hive_type {
        HiveType::Control => TemperatureSeries::missing(spec.start, n),
        HiveType::Treated => {
            let mut p: Vec<Option<f64>> = adj.iter().map(|&a| Some(a)).collect();
            mask(&mut p, &spec.ext_missing_pattern);
            TemperatureSeries::new(spec.start, p)?
        }
    };

    let dataset = HiveDataset::with_daily_grid(
        &spec.hive_id,
        spec.hive_type,
        TemperatureSeries::new(spec.start, ext_obs)?,
        peri,
        TemperatureSeries::new(spec.start, core)?,
    )?;
    let cut_days: Vec<usize> = spec.regimes.iter().skip(1).map(|r| r.start_day).collect();
    let truth = GroundTruth {
        regimes: spec.regimes.clone(),
        cut_ticks: cut_days.iter().map(|d| d * 24).collect(),
        cut_days,
        clean_core: TemperatureSeries::derived(spec.start, clean.into_iter().map(Some).collect()),
    };
    Ok((dataset, truth))
}

/// `count` distinct single-tick gaps drawn uniformly from `[0, num_ticks)`,
/// sorted by position.
pub fn random_hourly_gaps(num_ticks: usize, count: usize, seed: u64) -> Vec<Gap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ticks = sample(&mut rng, num_ticks, count.min(num_ticks)).into_vec();
    ticks.sort_unstable();
    ticks.into_iter().map(|start| Gap { start, len: 1 }).collect()
}
