//! Split P-controller thermal model of the hive core and its integration.
//!
//! All temperatures inside the model are relative to the ideal core
//! temperature. With forcing `F = θ_ext + θ_adj` the core obeys
//!
//! ```text
//! dθ/dt = F − (2 + s_c) θ     if θ_ext ≥ 0
//! dθ/dt = F − (2 + s_h) θ     otherwise
//! ```
//!
//! The forcing is held constant over each hourly tick, which makes the
//! update exact: `θ' = θ e^(−k dt) + (F/k)(1 − e^(−k dt))`.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{adjunct_series, HiveDataset, HiveType, SeriesError, TemperatureSeries};

pub const THETA_IDEAL_MIN: f64 = 31.0;
pub const THETA_IDEAL_MAX: f64 = 38.0;
/// Relative temperatures beyond this are treated as a diverged integration.
pub const OVERFLOW_LIMIT: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("integration diverged at tick {tick} (|θ| > {OVERFLOW_LIMIT})")]
    NumericalOverflow { tick: usize },
    #[error("segment {start}..{end} has no core observation to start from")]
    EmptySegment { start: usize, end: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("invalid segmentation: {0}")]
    BadSegments(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Per-segment parameter triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiveParams {
    /// Cooling strength, per hour.
    pub s_c: f64,
    /// Heating strength, per hour.
    pub s_h: f64,
    /// Ideal core temperature, °C.
    pub theta_ideal: f64,
}

impl HiveParams {
    pub const fn new(s_c: f64, s_h: f64, theta_ideal: f64) -> Self {
        Self { s_c, s_h, theta_ideal }
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<(), ModelError> {
        let ok_strength = |s: f64| s.is_finite() && (0.0..=config.s_inf).contains(&s);
        if !ok_strength(self.s_c) || !ok_strength(self.s_h) {
            return Err(ModelError::InvalidParams(format!(
                "strengths ({}, {}) outside [0, {}]",
                self.s_c, self.s_h, config.s_inf
            )));
        }
        if !(THETA_IDEAL_MIN..=THETA_IDEAL_MAX).contains(&self.theta_ideal) {
            return Err(ModelError::InvalidParams(format!(
                "theta_ideal {} outside [{THETA_IDEAL_MIN}, {THETA_IDEAL_MAX}]",
                self.theta_ideal
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// Both branches pull θ back towards zero.
    #[default]
    Stabilized,
    /// Heating branch uses `+ s_h θ` literally; unstable for `s_h > 2`.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    ExponentialExact,
    EulerFine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub s_inf: f64,
    pub sign_convention: SignConvention,
    pub integrator: Integrator,
    pub euler_substeps: u32,
    /// Missing-forcing runs at least this long stop the integration; the
    /// state is re-seeded from the next core observation.
    pub gap_reseed_ticks: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            s_inf: 100.0,
            sign_convention: SignConvention::Stabilized,
            integrator: Integrator::ExponentialExact,
            euler_substeps: 128,
            gap_reseed_ticks: 6,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.s_inf.is_finite() && self.s_inf > 50.0) {
            return Err(ModelError::InvalidConfig(format!(
                "s_inf must exceed 50, got {}",
                self.s_inf
            )));
        }
        if self.euler_substeps == 0 {
            return Err(ModelError::InvalidConfig("euler_substeps must be >= 1".into()));
        }
        if self.gap_reseed_ticks == 0 {
            return Err(ModelError::InvalidConfig("gap_reseed_ticks must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_integrator(mut self, integrator: Integrator, substeps: u32) -> Self {
        self.integrator = integrator;
        self.euler_substeps = substeps;
        self
    }
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    k: f64,
    decay: f64,
    gain: f64,
}

impl Branch {
    fn new(k: f64, dt: f64) -> Self {
        let decay = (-k * dt).exp();
        let gain = if k.abs() < 1e-12 { dt } else { -(-k * dt).exp_m1() / k };
        Self { k, decay, gain }
    }
}

/// One-tick update for a fixed parameter set, with the per-branch
/// exponentials computed once.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Propagator {
    cool: Branch,
    heat: Branch,
    integrator: Integrator,
    substeps: u32,
    dt: f64,
}

impl Propagator {
    pub(crate) fn new(params: &HiveParams, config: &ModelConfig, dt: f64) -> Self {
        let k_heat = match config.sign_convention {
            SignConvention::Stabilized => 2.0 + params.s_h,
            SignConvention::PaperLiteral => 2.0 - params.s_h,
        };
        Self {
            cool: Branch::new(2.0 + params.s_c, dt),
            heat: Branch::new(k_heat, dt),
            integrator: config.integrator,
            substeps: config.euler_substeps.max(1),
            dt,
        }
    }

    /// Relaxation rate `k` of the branch selected by `ext_rel`.
    pub(crate) fn rate(&self, ext_rel: f64) -> f64 {
        if ext_rel >= 0.0 {
            self.cool.k
        } else {
            self.heat.k
        }
    }

    #[inline]
    pub(crate) fn advance(&self, theta: f64, ext_rel: f64, adj_rel: f64) -> f64 {
        let b = if ext_rel >= 0.0 { &self.cool } else { &self.heat };
        let forcing = ext_rel + adj_rel;
        match self.integrator {
            Integrator::ExponentialExact => b.decay * theta + b.gain * forcing,
            Integrator::EulerFine => {
                let h = self.dt / f64::from(self.substeps);
                let mut th = theta;
                for _ in 0..self.substeps {
                    th += h * (forcing - b.k * th);
                }
                th
            }
        }
    }
}

/// Advances the relative core temperature over one interval of length `dt`
/// hours under constant forcing.
pub fn step(
    theta: f64,
    theta_ext: f64,
    theta_adj: f64,
    params: &HiveParams,
    config: &ModelConfig,
    dt: f64,
) -> Result<f64, ModelError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ModelError::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let next = Propagator::new(params, config, dt).advance(theta, theta_ext, theta_adj);
    if !next.is_finite() || next.abs() > OVERFLOW_LIMIT {
        return Err(ModelError::NumericalOverflow { tick: 0 });
    }
    Ok(next)
}

/// Observations and usable forcing for one tick range, independent of the
/// parameters. Built once per fit and reused for every objective evaluation.
#[derive(Debug, Clone)]
pub(crate) struct RangeTrack {
    pub start: usize,
    pub core: Vec<Option<f64>>,
    /// Absolute `(ext, adj)` driving the step out of each tick. Short
    /// forcing gaps carry the last value forward; `None` means the state
    /// cannot be advanced past this tick.
    pub forcing: Vec<Option<(f64, f64)>>,
}

impl RangeTrack {
    pub(crate) fn new(dataset: &HiveDataset, range: Range<usize>, gap_reseed_ticks: usize) -> Self {
        let ext = &dataset.ext().values()[range.clone()];
        let peri = &dataset.peri().values()[range.clone()];
        let treated = dataset.hive_type() == HiveType::Treated;
        let raw: Vec<Option<(f64, f64)>> = ext
            .iter()
            .zip(peri)
            .map(|(e, p)| {
                e.map(|e| {
                    let adj = if treated { p.unwrap_or(e) } else { e };
                    (e, adj)
                })
            })
            .collect();

        let mut forcing = raw.clone();
        let mut i = 0;
        while i < raw.len() {
            if raw[i].is_some() {
                i += 1;
                continue;
            }
            let run_start = i;
            while i < raw.len() && raw[i].is_none() {
                i += 1;
            }
            let carried = run_start.checked_sub(1).and_then(|j| raw[j]);
            let fill = if i - run_start >= gap_reseed_ticks { None } else { carried };
            for f in &mut forcing[run_start..i] {
                *f = fill;
            }
        }

        Self {
            start: range.start,
            core: dataset.core().values()[range].to_vec(),
            forcing,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.core.len()
    }

    pub(crate) fn first_core(&self) -> Option<f64> {
        self.core.iter().copied().flatten().next()
    }

    /// Runs the model over the range, reporting each tick's absolute
    /// prediction (or `None` where the state is unknown) to `visit`.
    #[inline]
    pub(crate) fn simulate(
        &self,
        params: &HiveParams,
        prop: &Propagator,
        mut visit: impl FnMut(usize, Option<f64>),
    ) -> Result<(), ModelError> {
        let ti = params.theta_ideal;
        let mut state: Option<f64> = None;
        for (i, (core, forcing)) in self.core.iter().zip(&self.forcing).enumerate() {
            // seed only where the state can be carried forward
            if state.is_none() && forcing.is_some() {
                state = core.map(|c| c - ti);
            }
            visit(i, state.map(|th| th + ti));
            state = match (state, forcing) {
                (Some(th), Some((e, a))) => {
                    let next = prop.advance(th, e - ti, a - ti);
                    if !next.is_finite() || next.abs() > OVERFLOW_LIMIT {
                        return Err(ModelError::NumericalOverflow { tick: self.start + i });
                    }
                    Some(next)
                }
                _ => None,
            };
        }
        Ok(())
    }

    /// Sum of squared residuals and the number of residual ticks.
    pub(crate) fn sse(&self, params: &HiveParams, prop: &Propagator) -> Result<(f64, usize), ModelError> {
        let mut sse = 0.0;
        let mut n = 0;
        let core = &self.core;
        self.simulate(params, prop, |i, pred| {
            if let (Some(p), Some(c)) = (pred, core[i]) {
                let r = c - p;
                sse += r * r;
                n += 1;
            }
        })?;
        Ok((sse, n))
    }
}

/// A tick range and the parameters governing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub range: Range<usize>,
    pub params: HiveParams,
}

pub(crate) fn check_segments(dataset: &HiveDataset, segments: &[SegmentParams]) -> Result<(), ModelError> {
    let mut expected = 0;
    for seg in segments {
        if seg.range.start != expected || seg.range.end <= seg.range.start {
            return Err(ModelError::BadSegments(format!(
                "segment {:?} does not continue from tick {expected}",
                seg.range
            )));
        }
        if !dataset.is_day_edge(seg.range.start) || !dataset.is_day_edge(seg.range.end) {
            return Err(ModelError::BadSegments(format!(
                "segment {:?} is not aligned to day boundaries",
                seg.range
            )));
        }
        expected = seg.range.end;
    }
    if expected != dataset.len() {
        return Err(ModelError::BadSegments(format!(
            "segments cover {expected} of {} ticks",
            dataset.len()
        )));
    }
    Ok(())
}

/// Model trajectory of one range in absolute °C.
pub(crate) fn reconstruct_range(
    dataset: &HiveDataset,
    range: Range<usize>,
    params: &HiveParams,
    config: &ModelConfig,
) -> Result<Vec<Option<f64>>, ModelError> {
    let track = RangeTrack::new(dataset, range.clone(), config.gap_reseed_ticks);
    if track.first_core().is_none() {
        return Err(ModelError::EmptySegment {
            start: range.start,
            end: range.end,
        });
    }
    let prop = Propagator::new(params, config, 1.0);
    let mut out = vec![None; track.len()];
    track.simulate(params, &prop, |i, p| out[i] = p)?;
    Ok(out)
}

/// Reconstructs the core temperature over the whole grid from per-segment
/// parameters and the observed forcing.
pub fn reconstruct(
    dataset: &HiveDataset,
    segments: &[SegmentParams],
    config: &ModelConfig,
) -> Result<TemperatureSeries, ModelError> {
    config.validate()?;
    check_segments(dataset, segments)?;
    adjunct_series(dataset)?;
    let mut values = Vec::with_capacity(dataset.len());
    for seg in segments {
        seg.params.validate(config)?;
        values.extend(reconstruct_range(dataset, seg.range.clone(), &seg.params, config)?);
    }
    Ok(TemperatureSeries::derived(dataset.start(), values))
}
