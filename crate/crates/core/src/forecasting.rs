//! Fit-then-integrate forecasts and the rolling-origin comparison.
//!
//! A forecast fits one parameter set on a trailing window, starts from the
//! window's last core observation and integrates the model over the horizon
//! driven by the supplied future external (and optionally peripheral)
//! temperatures.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{fit_baseline, predict_baseline, BaselineError, BaselineId, BaselineModel};
use crate::fitting::{fit_segment, FitError, FitResult, SearchSpace};
use crate::model::{HiveParams, ModelConfig, ModelError, Propagator, OVERFLOW_LIMIT};
use crate::series::{HiveDataset, HiveType, TemperatureSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("no tick has both series present")]
    NoOverlap,
    #[error("series are not aligned: {0}")]
    Misaligned(String),
    #[error("forcing unusable at horizon tick {tick}: a gap of {len} ticks reaches the reseed limit")]
    HorizonForcingMissing { tick: usize, len: usize },
    #[error("invalid forecast window: {0}")]
    InvalidWindow(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone)]
pub struct ForecastRequest<'a> {
    pub dataset: &'a HiveDataset,
    /// Day-aligned tick range of the fit; the forecast starts at its end.
    pub fit_window: Range<usize>,
    pub horizon: usize,
    pub future_ext: TemperatureSeries,
    pub future_adj: Option<TemperatureSeries>,
    /// Observed core over the horizon, for scoring.
    pub actual: Option<TemperatureSeries>,
}

impl<'a> ForecastRequest<'a> {
    /// Request whose future forcing and actuals are read from the dataset
    /// itself, as in a hindcast.
    pub fn from_dataset(dataset: &'a HiveDataset, fit_window: Range<usize>, horizon: usize) -> Result<Self, ForecastError> {
        let end = fit_window.end;
        if end + horizon > dataset.len() {
            return Err(ForecastError::InvalidWindow(format!(
                "horizon {end}..{} runs past the {} ticks of data",
                end + horizon,
                dataset.len()
            )));
        }
        let future = end..end + horizon;
        let future_adj = match dataset.hive_type() {
            HiveType::Treated if dataset.peri().values()[future.clone()].iter().any(Option::is_some) => {
                Some(dataset.peri().slice(future.clone()))
            }
            _ => None,
        };
        Ok(Self {
            dataset,
            fit_window,
            horizon,
            future_ext: dataset.ext().slice(future.clone()),
            future_adj,
            actual: Some(dataset.core().slice(future)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    /// Absolute core temperature for each horizon tick.
    pub forecast: TemperatureSeries,
    pub params_used: HiveParams,
    pub fit: FitResult,
    pub rmse: Option<f64>,
    /// RMSE per 24-tick block of the horizon; `None` where no tick overlaps.
    pub per_day_rmse: Vec<Option<f64>>,
    /// Treated hive forecast without future peripheral temperatures.
    pub degraded_adj: bool,
}

/// Root mean squared error over ticks where both series are present.
pub fn rmse(actual: &TemperatureSeries, predicted: &TemperatureSeries) -> Result<f64, ForecastError> {
    if actual.len() != predicted.len() || actual.start() != predicted.start() {
        return Err(ForecastError::Misaligned(format!(
            "{} ticks from {} vs {} ticks from {}",
            actual.len(),
            actual.start(),
            predicted.len(),
            predicted.start()
        )));
    }
    rmse_values(actual.values(), predicted.values()).ok_or(ForecastError::NoOverlap)
}

fn rmse_values(a: &[Option<f64>], p: &[Option<f64>]) -> Option<f64> {
    let (sse, k) = a
        .iter()
        .zip(p)
        .filter_map(|(a, p)| Some(a.as_ref()? - p.as_ref()?))
        .fold((0.0, 0usize), |(s, k), d| (s + d * d, k + 1));
    (k > 0).then(|| (sse / k as f64).sqrt())
}

pub fn forecast(request: &ForecastRequest, space: &SearchSpace, config: &ModelConfig) -> Result<ForecastResult, ForecastError> {
    let ds = request.dataset;
    let window = request.fit_window.clone();
    let horizon = request.horizon;
    if window.end > ds.len() {
        return Err(ForecastError::InvalidWindow(format!("window {window:?} past the data")));
    }
    if horizon == 0 {
        return Err(ForecastError::InvalidWindow("horizon must be positive".into()));
    }
    if request.future_ext.len() != horizon {
        return Err(ForecastError::Misaligned(format!(
            "future ext has {} ticks, horizon is {horizon}",
            request.future_ext.len()
        )));
    }
    for (name, s) in [("future adj", request.future_adj.as_ref()), ("actual", request.actual.as_ref())] {
        if let Some(s) = s {
            if s.len() != horizon || s.start() != request.future_ext.start() {
                return Err(ForecastError::Misaligned(format!("{name} is not aligned with future ext")));
            }
        }
    }

    let fit = fit_segment(ds, window.clone(), space, config)?;
    let params = fit.params;
    let ti = params.theta_ideal;
    let (seed_tick, seed) = (window.clone())
        .rev()
        .find_map(|t| ds.core().get(t).map(|v| (t, v)))
        .expect("fit succeeded, so the window has core observations");

    let treated = ds.hive_type() == HiveType::Treated;
    let degraded_adj = treated && request.future_adj.is_none();
    // forcing for the steps out of ticks seed_tick .. end + horizon − 1
    let mut forcing: Vec<Option<(f64, f64)>> = (seed_tick..window.end)
        .map(|t| {
            ds.ext().get(t).map(|e| {
                let adj = if treated { ds.peri().get(t).unwrap_or(e) } else { e };
                (e, adj)
            })
        })
        .collect();
    for k in 0..horizon - 1 {
        forcing.push(request.future_ext.get(k).map(|e| {
            let adj = match &request.future_adj {
                Some(a) if treated => a.get(k).unwrap_or(e),
                _ => e,
            };
            (e, adj)
        }));
    }
    let mut last = None;
    let mut run = 0;
    for (i, f) in forcing.iter_mut().enumerate() {
        match f {
            Some(v) => {
                last = Some(*v);
                run = 0;
            }
            None => {
                run += 1;
                if run >= config.gap_reseed_ticks || last.is_none() {
                    return Err(ForecastError::HorizonForcingMissing {
                        tick: (seed_tick + i).saturating_sub(window.end),
                        len: run,
                    });
                }
                *f = last;
            }
        }
    }

    let prop = Propagator::new(&params, config, 1.0);
    let mut theta = seed - ti;
    let mut out = Vec::with_capacity(horizon);
    for (i, f) in forcing.iter().enumerate() {
        let (e, a) = f.expect("gaps were filled or rejected");
        theta = prop.advance(theta, e - ti, a - ti);
        if !theta.is_finite() || theta.abs() > OVERFLOW_LIMIT {
            return Err(ModelError::NumericalOverflow { tick: seed_tick + i }.into());
        }
        if seed_tick + i + 1 >= window.end {
            out.push(Some(theta + ti));
        }
    }
    debug_assert_eq!(out.len(), horizon);
    let forecast = TemperatureSeries::derived(request.future_ext.start(), out);

    let (rmse_all, per_day) = match &request.actual {
        Some(actual) => {
            let per_day = actual
                .values()
                .chunks(24)
                .zip(forecast.values().chunks(24))
                .map(|(a, p)| rmse_values(a, p))
                .collect();
            (rmse_values(actual.values(), forecast.values()), per_day)
        }
        None => (None, Vec::new()),
    };

    Ok(ForecastResult {
        forecast,
        params_used: params,
        fit,
        rmse: rmse_all,
        per_day_rmse: per_day,
        degraded_adj,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollingOptions {
    pub fit_days: usize,
    pub horizon_days: usize,
}

impl Default for RollingOptions {
    fn default() -> Self {
        Self {
            fit_days: 3,
            horizon_days: 7,
        }
    }
}

pub const EBV_METHOD: &str = "ebv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub hive_id: String,
    pub origin_day: usize,
    pub method: String,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedOrigin {
    pub hive_id: String,
    pub origin_day: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub n: usize,
    pub mean_rmse: f64,
    /// Sample standard deviation; 0 for a single origin.
    pub std_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationTable {
    /// Ordered by origin, then EBV first and baselines in request order.
    pub rows: Vec<EvaluationRow>,
    pub skipped: Vec<SkippedOrigin>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

impl EvaluationTable {
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }

    /// Mean and spread per method, pooling every origin of every hive.
    pub fn summary(&self) -> Vec<MethodSummary> {
        self.methods()
            .into_iter()
            .map(|m| {
                let v: Vec<f64> = self.rows.iter().filter(|r| r.method == m).map(|r| r.rmse).collect();
                let (mean_rmse, std_rmse) = mean_std(&v);
                MethodSummary {
                    method: m,
                    n: v.len(),
                    mean_rmse,
                    std_rmse,
                }
            })
            .collect()
    }

    /// Mean and spread per method of the per-hive mean RMSEs.
    pub fn summary_by_hive(&self) -> Vec<MethodSummary> {
        let mut hives: Vec<&str> = self.rows.iter().map(|r| r.hive_id.as_str()).collect();
        hives.dedup();
        hives.sort_unstable();
        hives.dedup();
        self.methods()
            .into_iter()
            .map(|m| {
                let per_hive: Vec<f64> = hives
                    .iter()
                    .filter_map(|h| {
                        let v: Vec<f64> = self
                            .rows
                            .iter()
                            .filter(|r| r.method == m && r.hive_id == *h)
                            .map(|r| r.rmse)
                            .collect();
                        (!v.is_empty()).then(|| mean_std(&v).0)
                    })
                    .collect();
                let (mean_rmse, std_rmse) = mean_std(&per_hive);
                MethodSummary {
                    method: m,
                    n: per_hive.len(),
                    mean_rmse,
                    std_rmse,
                }
            })
            .collect()
    }

    /// Per origin, `1 − ebv / min(baselines)`, in row order.
    pub fn improvement_over_best_baseline(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.rows.len() {
            let key = (&self.rows[i].hive_id, self.rows[i].origin_day);
            let j = self.rows[i..]
                .iter()
                .position(|r| (&r.hive_id, r.origin_day) != key)
                .map_or(self.rows.len(), |p| i + p);
            let group = &self.rows[i..j];
            let ebv = group.iter().find(|r| r.method == EBV_METHOD).map(|r| r.rmse);
            let best = group
                .iter()
                .filter(|r| r.method != EBV_METHOD)
                .map(|r| r.rmse)
                .fold(f64::INFINITY, f64::min);
            if let Some(e) = ebv {
                if best.is_finite() {
                    out.push(1.0 - e / best);
                }
            }
            i = j;
        }
        out
    }

    pub fn extend(&mut self, other: EvaluationTable) {
        self.rows.extend(other.rows);
        self.skipped.extend(other.skipped);
    }
}

enum OriginOutcome {
    Rows(Vec<EvaluationRow>),
    Skipped(SkippedOrigin),
}

fn evaluate_origin(
    dataset: &HiveDataset,
    origin_day: usize,
    space: &SearchSpace,
    config: &ModelConfig,
    baselines: &[BaselineModel],
    opts: &RollingOptions,
) -> Result<Vec<EvaluationRow>, ForecastError> {
    let bounds = dataset.day_boundaries();
    let edge = |d: usize| bounds.get(d).copied().unwrap_or(dataset.len());
    let window = edge(origin_day)..edge(origin_day + opts.fit_days);
    let horizon = edge(origin_day + opts.fit_days + opts.horizon_days) - window.end;
    let request = ForecastRequest::from_dataset(dataset, window.clone(), horizon)?;
    let actual = request.actual.clone().expect("hindcast carries actuals");

    let ebv = forecast(&request, space, config)?;
    let row = |method: String, rmse: f64| EvaluationRow {
        hive_id: dataset.hive_id().to_string(),
        origin_day,
        method,
        rmse,
    };
    let mut rows = vec![row(EBV_METHOD.into(), ebv.rmse.ok_or(ForecastError::NoOverlap)?)];
    let hist_core = dataset.core().slice(window.clone());
    let hist_ext = dataset.ext().slice(window);
    for model in baselines {
        let fitted = fit_baseline(model, &hist_core, &hist_ext)?;
        let pred = predict_baseline(&fitted, horizon, Some(&request.future_ext))?;
        rows.push(row(model.id().to_string(), rmse(&actual, &pred)?));
    }
    Ok(rows)
}

/// Slides the fit/forecast protocol across the dataset one day at a time.
pub fn rolling_evaluation(
    dataset: &HiveDataset,
    space: &SearchSpace,
    config: &ModelConfig,
    baselines: &[BaselineModel],
    opts: &RollingOptions,
) -> EvaluationTable {
    let span = opts.fit_days + opts.horizon_days;
    let origins: Vec<usize> = if opts.fit_days == 0 || opts.horizon_days == 0 || dataset.num_days() < span {
        Vec::new()
    } else {
        (0..=dataset.num_days() - span).collect()
    };
    let outcomes: Vec<OriginOutcome> = origins
        .par_iter()
        .map(|&o| match evaluate_origin(dataset, o, space, config, baselines, opts) {
            Ok(rows) => OriginOutcome::Rows(rows),
            Err(e) => OriginOutcome::Skipped(SkippedOrigin {
                hive_id: dataset.hive_id().to_string(),
                origin_day: o,
                reason: e.to_string(),
            }),
        })
        .collect();
    let mut table = EvaluationTable::default();
    for o in outcomes {
        match o {
            OriginOutcome::Rows(r) => table.rows.extend(r),
            OriginOutcome::Skipped(s) => table.skipped.push(s),
        }
    }
    table
}

/// Default baseline set: every baseline with automatic hyperparameters.
pub fn all_baselines() -> Vec<BaselineModel> {
    BaselineId::ALL.iter().map(|id| id.default_model()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, ExtProfile, Heatwave, ScenarioSpec};
    use chrono::{TimeZone, Utc};

    fn t0() -> chrono::DateTime<Utc> {
        Utc.with_ymd_and_hms(2021, 7, 1, 0, 0, 0).unwrap()
    }

    fn s(v: &[Option<f64>]) -> TemperatureSeries {
        TemperatureSeries::new(t0(), v.to_vec()).unwrap()
    }

    #[test]
    fn rmse_hand_values() {
        let a = s(&[Some(34.0), Some(36.0)]);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(rmse(&a, &s(&[Some(35.0), Some(35.0)])).unwrap(), 1.0);
        // K = 2 after excluding the missing tick: sqrt((1 + 1)/2)
        let a = s(&[Some(34.0), None, Some(36.0)]);
        let p = s(&[Some(35.0), Some(30.0), Some(35.0)]);
        assert_eq!(rmse(&a, &p).unwrap(), 1.0);
        assert_eq!(rmse(&s(&[None]), &s(&[Some(1.0)])), Err(ForecastError::NoOverlap));
    }

    #[test]
    fn rmse_symmetric_and_shift_invariant() {
        let a = s(&[Some(34.0), Some(33.1), None, Some(35.2)]);
        let p = s(&[Some(33.5), Some(34.0), Some(30.0), Some(35.0)]);
        assert_eq!(rmse(&a, &p).unwrap(), rmse(&p, &a).unwrap());
        let shift = |x: &TemperatureSeries| x.map_present(|v| v + 5.0);
        assert!((rmse(&shift(&a), &shift(&p)).unwrap() - rmse(&a, &p).unwrap()).abs() < 1e-12);
    }

    fn scenario(noise: f64, hive_type: HiveType) -> ScenarioSpec {
        ScenarioSpec {
            num_days: 10,
            hive_type,
            noise_sigma: noise,
            ext_profile: ExtProfile {
                mean: 32.0,
                day_jitter: 2.0,
                heatwaves: vec![Heatwave { day: 5, peak: 43.0 }],
                ..ExtProfile::default()
            },
            seed: 21,
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn noiseless_forecast_matches_simulation() {
        let cfg = ModelConfig::default();
        for ty in [HiveType::Control, HiveType::Treated] {
            let (d, truth) = generate(&scenario(0.0, ty), &cfg).unwrap();
            let req = ForecastRequest::from_dataset(&d, 0..72, 168).unwrap();
            let f = forecast(&req, &SearchSpace::from_config(&cfg), &cfg).unwrap();
            assert!(!f.degraded_adj);
            let clean = truth.clean_core.slice(72..240);
            for (a, b) in f.forecast.values().iter().zip(clean.values()) {
                assert!((a.unwrap() - b.unwrap()).abs() <= 1e-6);
            }
            assert_eq!(f.per_day_rmse.len(), 7);
        }
    }

    #[test]
    fn noisy_forecast_stays_near_noise_floor() {
        let cfg = ModelConfig::default();
        let (d, _) = generate(&scenario(0.3, HiveType::Control), &cfg).unwrap();
        let req = ForecastRequest::from_dataset(&d, 0..72, 168).unwrap();
        let f = forecast(&req, &SearchSpace::from_config(&cfg), &cfg).unwrap();
        assert!(f.rmse.unwrap() <= 0.6, "{:?}", f.rmse);
    }

    #[test]
    fn treated_without_future_peri_is_flagged() {
        let cfg = ModelConfig::default();
        let (d, _) = generate(&scenario(0.0, HiveType::Treated), &cfg).unwrap();
        let mut req = ForecastRequest::from_dataset(&d, 0..72, 168).unwrap();
        req.future_adj = None;
        let f = forecast(&req, &SearchSpace::from_config(&cfg), &cfg).unwrap();
        assert!(f.degraded_adj);
    }

    #[test]
    fn constant_ideal_forcing_decays_to_ideal() {
        let cfg = ModelConfig::default();
        let (d, _) = generate(&scenario(0.0, HiveType::Control), &cfg).unwrap();
        let req = ForecastRequest::from_dataset(&d, 0..72, 48).unwrap();
        let fitted = forecast(&req, &SearchSpace::from_config(&cfg), &cfg).unwrap();
        let ti = fitted.params_used.theta_ideal;
        let mut req = req;
        req.future_ext = TemperatureSeries::from_present(req.future_ext.start(), &[ti; 48]).unwrap();
        let f = forecast(&req, &SearchSpace::from_config(&cfg), &cfg).unwrap();
        assert!(fitted.params_used.s_c.min(fitted.params_used.s_h) >= 3.0);
        for v in &f.forecast.values()[12..] {
            assert!((v.unwrap() - ti).abs() < 0.05);
        }
    }

    #[test]
    fn long_future_gap_is_rejected() {
        let cfg = ModelConfig::default();
        let (d, _) = generate(&scenario(0.0, HiveType::Control), &cfg).unwrap();
        let mut req = ForecastRequest::from_dataset(&d, 0..72, 48).unwrap();
        let mut v = req.future_ext.values().to_vec();
        for x in &mut v[10..16] {
            *x = None;
        }
        req.future_ext = TemperatureSeries::new(req.future_ext.start(), v).unwrap();
        assert!(matches!(
            forecast(&req, &SearchSpace::from_config(&cfg), &cfg),
            Err(ForecastError::HorizonForcingMissing { .. })
        ));
    }

    #[test]
    fn ten_days_give_one_origin() {
        let cfg = ModelConfig::default();
        let (d, _) = generate(&scenario(0.2, HiveType::Control), &cfg).unwrap();
        let baselines = vec![BaselineModel::Persistence, BaselineModel::SeasonalNaive24];
        let t = rolling_evaluation(&d, &SearchSpace::from_config(&cfg), &cfg, &baselines, &RollingOptions::default());
        assert!(t.skipped.is_empty(), "{:?}", t.skipped);
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows[0].method, EBV_METHOD);
        assert_eq!(t.summary().len(), 3);
        assert_eq!(t.improvement_over_best_baseline().len(), 1);
    }
}
