//! AIC-driven greedy cut-point search.
//!
//! Starting from a single segment, each round tentatively adds one cut at an
//! interior day boundary, refits the two affected segments and scores the
//! whole-dataset model by
//!
//! ```text
//! AIC = −2 ln L + 2(m + (m + 1) p)
//! ```
//!
//! with Gaussian residual likelihood. The best candidate is committed while
//! the AIC keeps falling; the returned model is the smallest cut count whose
//! AIC lies within a relative margin of the best one seen.
//!
//! Scoring every candidate with a full fit makes each round quadratic in the
//! series length. [`Strategy::Screened`] instead ranks candidates with a
//! precomputed table of per-day SSEs over a fixed parameter grid (prefix
//! sums make any segment's grid-best SSE cost O(grid)) and fits only a short
//! list exactly. [`Strategy::Exhaustive`] fits every candidate.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::RwLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitting::{fit_segment, FitError, FitResult, SearchSpace, MIN_OBSERVATIONS};
use crate::model::{reconstruct, HiveParams, ModelConfig, Propagator, RangeTrack, SegmentParams};
use crate::series::{HiveDataset, TemperatureSeries};

/// Parameters per segment in the AIC penalty.
pub const PARAMS_PER_SEGMENT: usize = 3;
/// Residual RMS below this counts as an exact reconstruction.
pub const ZERO_VARIANCE_SIGMA: f64 = 1e-9;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("segmentation needs at least 2 days, got {have}")]
    InsufficientDays { have: usize },
    #[error("log-likelihood needs at least 2 residuals, got {have}")]
    TooFewResiduals { have: usize },
    #[error("fixed sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("invalid segmentation options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "sigma")]
pub enum SigmaPolicy {
    /// σ² = mean squared residual of the candidate model.
    #[default]
    Mle,
    Fixed(f64),
}

/// Gaussian residual model; only the σ policy is configurable.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LikelihoodSpec {
    pub sigma_policy: SigmaPolicy,
}

impl LikelihoodSpec {
    pub fn fixed(sigma: f64) -> Self {
        Self {
            sigma_policy: SigmaPolicy::Fixed(sigma),
        }
    }

    pub fn validate(&self) -> Result<(), SegmentationError> {
        match self.sigma_policy {
            SigmaPolicy::Fixed(s) if !(s > 0.0 && s.is_finite()) => Err(SegmentationError::InvalidSigma(s)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    /// `ln L`; `+∞` when the residuals vanish under the MLE policy.
    pub value: f64,
    pub zero_variance: bool,
    pub sigma_mle: f64,
}

fn log_lik_from_sse(sse: f64, n: usize, spec: &LikelihoodSpec) -> Result<LogLikelihood, SegmentationError> {
    spec.validate()?;
    if n < 2 {
        return Err(SegmentationError::TooFewResiduals { have: n });
    }
    let nf = n as f64;
    let var = sse / nf;
    let sigma_mle = var.sqrt();
    Ok(match spec.sigma_policy {
        SigmaPolicy::Mle if sigma_mle < ZERO_VARIANCE_SIGMA => LogLikelihood {
            value: f64::INFINITY,
            zero_variance: true,
            sigma_mle,
        },
        SigmaPolicy::Mle => LogLikelihood {
            value: -nf / 2.0 * (LN_2PI + var.ln() + 1.0),
            zero_variance: false,
            sigma_mle,
        },
        SigmaPolicy::Fixed(s) => LogLikelihood {
            value: -nf / 2.0 * (LN_2PI + 2.0 * s.ln()) - sse / (2.0 * s * s),
            zero_variance: false,
            sigma_mle,
        },
    })
}

/// Gaussian log-likelihood of a residual vector.
pub fn log_likelihood(residuals: &[f64], spec: &LikelihoodSpec) -> Result<LogLikelihood, SegmentationError> {
    let sse = residuals.iter().map(|r| r * r).sum();
    log_lik_from_sse(sse, residuals.len(), spec)
}

/// `−2 ln L + 2(m + (m + 1) p)`.
pub fn aic(log_lik: f64, num_cuts: usize, params_per_segment: usize) -> f64 {
    let m = num_cuts as f64;
    -2.0 * log_lik + 2.0 * (m + (m + 1.0) * params_per_segment as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Strategy {
    /// Rank candidates on the grid table, fit the best `shortlist` exactly.
    Screened { shortlist: usize },
    /// Fit every candidate.
    Exhaustive,
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::Screened { shortlist: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationOptions {
    pub strategy: Strategy,
    /// Accept the smallest model with `AIC ≤ min + relaxation·|min|`.
    pub relaxation: f64,
    pub use_cache: bool,
    pub max_cuts: Option<usize>,
    /// Grid resolution of the screening table.
    pub screen_strength_points: usize,
    pub screen_theta_step: f64,
}

impl Default for SegmentationOptions {
    fn default() -> Self {
        Self {
            strategy: Strategy::default(),
            relaxation: 0.10,
            use_cache: true,
            max_cuts: None,
            screen_strength_points: 24,
            screen_theta_step: 0.25,
        }
    }
}

impl SegmentationOptions {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        let bad = |m: &str| Err(SegmentationError::InvalidOptions(m.into()));
        if !(self.relaxation >= 0.0 && self.relaxation.is_finite()) {
            return bad("relaxation must be >= 0");
        }
        if let Strategy::Screened { shortlist: 0 } = self.strategy {
            return bad("shortlist must be >= 1");
        }
        if self.screen_strength_points < 2 || self.screen_theta_step.is_nan() || self.screen_theta_step <= 0.0 {
            return bad("screening grid needs >= 2 strength points and a positive theta step");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub num_cuts: usize,
    pub aic: f64,
    pub cut_points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    /// Tick indices of the chosen cuts, each an interior day boundary.
    pub cut_points: Vec<usize>,
    pub params: Vec<HiveParams>,
    pub segments: Vec<SegmentParams>,
    pub fits: Vec<FitResult>,
    pub reconstruction: TemperatureSeries,
    pub aic: f64,
    pub log_likelihood: f64,
    pub aic_trace: Vec<TraceEntry>,
    pub sigma_mle: f64,
    pub zero_variance: bool,
}

#[derive(Debug, Clone)]
struct Model {
    cuts: Vec<usize>,
    fits: Vec<FitResult>,
    aic: f64,
    lnl: LogLikelihood,
}

type FitCache = RwLock<HashMap<(usize, usize), Result<FitResult, FitError>>>;

struct Search<'a> {
    dataset: &'a HiveDataset,
    space: &'a SearchSpace,
    config: &'a ModelConfig,
    spec: &'a LikelihoodSpec,
    cache: Option<FitCache>,
}

impl Search<'_> {
    fn fit(&self, range: Range<usize>) -> Result<FitResult, FitError> {
        let key = (range.start, range.end);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.read().expect("fit cache poisoned").get(&key) {
                return hit.clone();
            }
        }
        let result = fit_segment(self.dataset, range, self.space, self.config);
        if let Some(cache) = &self.cache {
            cache.write().expect("fit cache poisoned").insert(key, result.clone());
        }
        result
    }

    fn ranges(&self, cuts: &[usize]) -> Vec<Range<usize>> {
        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(0);
        edges.extend_from_slice(cuts);
        edges.push(self.dataset.len());
        edges.windows(2).map(|w| w[0]..w[1]).collect()
    }

    fn evaluate(&self, cuts: Vec<usize>) -> Result<Model, SegmentationError> {
        let fits = self
            .ranges(&cuts)
            .into_iter()
            .map(|r| self.fit(r))
            .collect::<Result<Vec<_>, _>>()?;
        let sse: f64 = fits.iter().map(FitResult::sse).sum();
        let n: usize = fits.iter().map(|f| f.residuals.len()).sum();
        let lnl = log_lik_from_sse(sse, n, self.spec)?;
        Ok(Model {
            aic: aic(lnl.value, cuts.len(), PARAMS_PER_SEGMENT),
            cuts,
            fits,
            lnl,
        })
    }

    fn with_cut(cuts: &[usize], c: usize) -> Vec<usize> {
        let mut v = cuts.to_vec();
        let pos = v.partition_point(|&x| x < c);
        v.insert(pos, c);
        v
    }
}

/// Per-day SSEs on a fixed parameter grid with per-grid-point prefix sums
/// over days.
struct ScreenTable {
    grid_len: usize,
    /// `prefix[d * grid_len + g]` = SSE of grid point `g` over days `< d`.
    prefix: Vec<f64>,
    /// Present core ticks over days `< d`.
    count_prefix: Vec<usize>,
}

impl ScreenTable {
    fn build(
        dataset: &HiveDataset,
        space: &SearchSpace,
        config: &ModelConfig,
        opts: &SegmentationOptions,
    ) -> Self {
        let grid = screening_grid(space, opts);
        let props: Vec<Propagator> = grid.iter().map(|p| Propagator::new(p, config, 1.0)).collect();
        let days = dataset.days();
        let rows: Vec<Vec<f64>> = days
            .par_iter()
            .map(|day| {
                let track = RangeTrack::new(dataset, day.clone(), config.gap_reseed_ticks);
                grid.iter()
                    .zip(&props)
                    .map(|(p, prop)| track.sse(p, prop).map_or(f64::INFINITY, |(sse, _)| sse))
                    .collect()
            })
            .collect();

        let g = grid.len();
        let mut prefix = vec![0.0; (days.len() + 1) * g];
        for (d, row) in rows.iter().enumerate() {
            for j in 0..g {
                prefix[(d + 1) * g + j] = prefix[d * g + j] + row[j];
            }
        }
        let mut count_prefix = vec![0; days.len() + 1];
        for (d, day) in days.iter().enumerate() {
            count_prefix[d + 1] = count_prefix[d] + dataset.core().values()[day.clone()].iter().flatten().count();
        }
        Self {
            grid_len: g,
            prefix,
            count_prefix,
        }
    }

    /// Grid-best SSE over days `a..b`.
    fn segment_sse(&self, a: usize, b: usize) -> f64 {
        let g = self.grid_len;
        let (lo, hi) = (&self.prefix[a * g..(a + 1) * g], &self.prefix[b * g..(b + 1) * g]);
        hi.iter().zip(lo).map(|(h, l)| h - l).fold(f64::INFINITY, f64::min)
    }

    fn present(&self, a: usize, b: usize) -> usize {
        self.count_prefix[b] - self.count_prefix[a]
    }
}

fn screening_grid(space: &SearchSpace, opts: &SegmentationOptions) -> Vec<HiveParams> {
    let gains = |(lo, hi): (f64, f64)| -> Vec<f64> {
        let (g_lo, g_hi) = (1.0 / (2.0 + hi), 1.0 / (2.0 + lo));
        let n = opts.screen_strength_points;
        (0..n)
            .map(|i| {
                let g = g_lo + (g_hi - g_lo) * i as f64 / (n - 1) as f64;
                (1.0 / g - 2.0).clamp(lo, hi)
            })
            .collect()
    };
    let (t_lo, t_hi) = space.theta_ideal_range;
    let steps = ((t_hi - t_lo) / opts.screen_theta_step).floor() as usize;
    let thetas: Vec<f64> = (0..=steps).map(|i| t_lo + opts.screen_theta_step * i as f64).collect();
    let (sc, sh) = (gains(space.s_c_range), gains(space.s_h_range));
    let mut grid = Vec::with_capacity(sc.len() * sh.len() * thetas.len());
    for &c in &sc {
        for &h in &sh {
            for &t in &thetas {
                grid.push(HiveParams::new(c, h, t));
            }
        }
    }
    grid
}

/// Greedy segmentation with default options.
pub fn segment(
    dataset: &HiveDataset,
    space: &SearchSpace,
    config: &ModelConfig,
    spec: &LikelihoodSpec,
) -> Result<SegmentationResult, SegmentationError> {
    segment_with(dataset, space, config, spec, &SegmentationOptions::default())
}

pub fn segment_with(
    dataset: &HiveDataset,
    space: &SearchSpace,
    config: &ModelConfig,
    spec: &LikelihoodSpec,
    opts: &SegmentationOptions,
) -> Result<SegmentationResult, SegmentationError> {
    opts.validate()?;
    spec.validate()?;
    config.validate().map_err(FitError::from)?;
    space.validate(config)?;
    let num_days = dataset.num_days();
    if num_days < 2 {
        return Err(SegmentationError::InsufficientDays { have: num_days });
    }

    let search = Search {
        dataset,
        space,
        config,
        spec,
        cache: opts.use_cache.then(|| RwLock::new(HashMap::new())),
    };
    let table = match opts.strategy {
        Strategy::Screened { .. } => Some(ScreenTable::build(dataset, space, config, opts)),
        Strategy::Exhaustive => None,
    };
    let bounds = dataset.day_boundaries();
    let max_cuts = opts.max_cuts.unwrap_or(num_days - 1);

    let mut current = search.evaluate(Vec::new())?;
    let mut history = vec![current.clone()];

    while !current.lnl.zero_variance && current.cuts.len() < max_cuts {
        // candidates as day indices, each inside exactly one current segment
        let cut_days: Vec<usize> = current.cuts.iter().map(|&c| dataset.day_of(c)).collect();
        let mut edges = vec![0];
        edges.extend_from_slice(&cut_days);
        edges.push(num_days);
        let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
        for w in edges.windows(2) {
            for d in w[0] + 1..w[1] {
                candidates.push((w[0], d, w[1]));
            }
        }
        if candidates.is_empty() {
            break;
        }

        let tried: Vec<Model> = match (&opts.strategy, &table) {
            (Strategy::Screened { shortlist }, Some(table)) => {
                let mut ranked: Vec<(f64, usize)> = candidates
                    .iter()
                    .filter(|&&(a, d, b)| table.present(a, d) >= MIN_OBSERVATIONS && table.present(d, b) >= MIN_OBSERVATIONS)
                    .map(|&(a, d, b)| (table.segment_sse(a, d) + table.segment_sse(d, b) - table.segment_sse(a, b), d))
                    .collect();
                ranked.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                let mut ok = Vec::new();
                for batch in ranked.chunks(*shortlist) {
                    let models: Vec<Model> = batch
                        .par_iter()
                        .filter_map(|&(_, d)| search.evaluate(Search::with_cut(&current.cuts, bounds[d])).ok())
                        .collect();
                    ok.extend(models);
                    if ok.len() >= *shortlist {
                        break;
                    }
                }
                ok
            }
            _ => candidates
                .par_iter()
                .filter_map(|&(_, d, _)| search.evaluate(Search::with_cut(&current.cuts, bounds[d])).ok())
                .collect(),
        };

        let Some(best) = tried
            .into_iter()
            .min_by(|x, y| x.aic.total_cmp(&y.aic).then_with(|| x.cuts.cmp(&y.cuts)))
        else {
            break;
        };
        if best.aic < current.aic {
            log::debug!("committed cuts {:?} with AIC {:.4}", best.cuts, best.aic);
            current = best;
            history.push(current.clone());
        } else {
            break;
        }
    }

    let chosen = select(&history, opts.relaxation);
    let segments: Vec<SegmentParams> = search
        .ranges(&chosen.cuts)
        .into_iter()
        .zip(&chosen.fits)
        .map(|(range, f)| SegmentParams { range, params: f.params })
        .collect();
    let reconstruction = reconstruct(dataset, &segments, config).map_err(FitError::from)?;
    Ok(SegmentationResult {
        cut_points: chosen.cuts.clone(),
        params: chosen.fits.iter().map(|f| f.params).collect(),
        segments,
        fits: chosen.fits.clone(),
        reconstruction,
        aic: chosen.aic,
        log_likelihood: chosen.lnl.value,
        aic_trace: history
            .iter()
            .map(|m| TraceEntry {
                num_cuts: m.cuts.len(),
                aic: m.aic,
                cut_points: m.cuts.clone(),
            })
            .collect(),
        sigma_mle: chosen.lnl.sigma_mle,
        zero_variance: chosen.lnl.zero_variance,
    })
}

/// Smallest model within the relaxation margin of the trace minimum.
fn select(history: &[Model], relaxation: f64) -> &Model {
    let min = history.iter().map(|m| m.aic).fold(f64::INFINITY, f64::min);
    let threshold = if min.is_finite() { min + relaxation * min.abs() } else { min };
    history
        .iter()
        .find(|m| m.aic <= threshold)
        .expect("trace holds its own minimum")
}
