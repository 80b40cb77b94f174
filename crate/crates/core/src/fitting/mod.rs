//! Per-segment parameter estimation.
//!
//! [`fit_segment`] minimises the reconstruction RMSE of one day-aligned
//! range with a box-constrained Levenberg-Marquardt solver launched from
//! every seed of a fixed multistart grid. Ranges whose data cannot identify
//! a strength are flagged (see [`Degeneracy`]) so that per-day runs can
//! interpolate the strength from neighbouring days.

mod lm;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{HiveParams, ModelConfig, ModelError, Propagator, RangeTrack, THETA_IDEAL_MAX, THETA_IDEAL_MIN};
use crate::series::{adjunct_series, HiveDataset, SeriesError};

pub use lm::{FD_STEP, MAX_ITERATIONS, REL_TOLERANCE};

/// Fewest present core ticks a three-parameter fit accepts.
pub const MIN_OBSERVATIONS: usize = 12;
/// Core ranges narrower than this are treated as flat.
pub const CONSTANT_CORE_RANGE_C: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("only {have} present core ticks in {start}..{end}, need {MIN_OBSERVATIONS}")]
    TooFewObservations { start: usize, end: usize, have: usize },
    #[error("best fit RMSE {rmse:.4} is not below twice the constant-predictor RMSE {constant_rmse:.4}")]
    NoConvergence { rmse: f64, constant_rmse: f64 },
    #[error("{0} strength is unidentified on every day")]
    AllDegenerate(Strength),
    #[error("range {start}..{end} does not start and end on day boundaries")]
    RangeNotDayAligned { start: usize, end: usize },
    #[error("invalid search space: {0}")]
    InvalidSearchSpace(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Cooling,
    Heating,
}

impl std::fmt::Display for Strength {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strength::Cooling => f.write_str("cooling"),
            Strength::Heating => f.write_str("heating"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Degeneracy {
    #[default]
    None,
    /// Core barely moves; both strengths sit at the upper bound and are not
    /// trusted.
    ConstantCore,
    /// External temperature stays on one side of the ideal temperature, so
    /// the other branch's strength never acts.
    OneSidedExt { unidentified: Strength },
}

impl Degeneracy {
    pub fn is_unidentified(&self, strength: Strength) -> bool {
        match self {
            Degeneracy::None => false,
            Degeneracy::ConstantCore => true,
            Degeneracy::OneSidedExt { unidentified } => *unidentified == strength,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub s_c_range: (f64, f64),
    pub s_h_range: (f64, f64),
    pub theta_ideal_range: (f64, f64),
    /// Starting points, tried in this order.
    pub multistart_grid: Vec<HiveParams>,
}

impl SearchSpace {
    /// Full box `[0, s_inf]² × [31, 38]` with the 3×3×3 corner/centre grid.
    pub fn from_config(config: &ModelConfig) -> Self {
        let s = [0.0, config.s_inf / 2.0, config.s_inf];
        let t = [THETA_IDEAL_MIN, (THETA_IDEAL_MIN + THETA_IDEAL_MAX) / 2.0, THETA_IDEAL_MAX];
        let mut grid = Vec::with_capacity(27);
        for &s_c in &s {
            for &s_h in &s {
                for &ti in &t {
                    grid.push(HiveParams::new(s_c, s_h, ti));
                }
            }
        }
        Self {
            s_c_range: (0.0, config.s_inf),
            s_h_range: (0.0, config.s_inf),
            theta_ideal_range: (THETA_IDEAL_MIN, THETA_IDEAL_MAX),
            multistart_grid: grid,
        }
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<(), FitError> {
        let bad = |msg: String| Err(FitError::InvalidSearchSpace(msg));
        for (name, (lo, hi)) in [("s_c", self.s_c_range), ("s_h", self.s_h_range)] {
            if !(0.0 <= lo && lo <= hi && hi <= config.s_inf) {
                return bad(format!("{name} range [{lo}, {hi}] not inside [0, {}]", config.s_inf));
            }
        }
        let (lo, hi) = self.theta_ideal_range;
        if !(THETA_IDEAL_MIN <= lo && lo <= hi && hi <= THETA_IDEAL_MAX) {
            return bad(format!(
                "theta_ideal range [{lo}, {hi}] not inside [{THETA_IDEAL_MIN}, {THETA_IDEAL_MAX}]"
            ));
        }
        if self.multistart_grid.is_empty() {
            return bad("multistart grid is empty".into());
        }
        if let Some(p) = self.multistart_grid.iter().find(|p| !self.contains(p)) {
            return bad(format!("seed {p:?} outside the box"));
        }
        Ok(())
    }

    pub fn contains(&self, p: &HiveParams) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| lo <= v && v <= hi;
        inside(p.s_c, self.s_c_range) && inside(p.s_h, self.s_h_range) && inside(p.theta_ideal, self.theta_ideal_range)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: HiveParams,
    pub rmse: f64,
    /// `(tick, observed − reconstructed)` for every present core tick the
    /// model could reach; ticks index the full dataset grid.
    pub residuals: Vec<(usize, f64)>,
    pub n_used: usize,
    pub degenerate: Degeneracy,
}

impl FitResult {
    pub fn sse(&self) -> f64 {
        self.residuals.iter().map(|(_, r)| r * r).sum()
    }
}

fn residuals_for(track: &RangeTrack, params: &HiveParams, config: &ModelConfig) -> Result<Vec<(usize, f64)>, ModelError> {
    let prop = Propagator::new(params, config, 1.0);
    let mut out = Vec::with_capacity(track.len());
    let core = &track.core;
    track.simulate(params, &prop, |i, pred| {
        if let (Some(p), Some(c)) = (pred, core[i]) {
            out.push((track.start + i, c - p));
        }
    })?;
    Ok(out)
}

fn rmse_of(residuals: &[(usize, f64)]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    (residuals.iter().map(|(_, r)| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Ordering used to pick among seeds: lower SSE, then lower `s_c`, `s_h`,
/// `theta_ideal`. SSEs within a relative 1e-12 count as ties.
fn better(a: &lm::Solution, b: &lm::Solution) -> bool {
    let tol = 1e-12 * a.sse.max(b.sse) + f64::MIN_POSITIVE;
    if (a.sse - b.sse).abs() > tol {
        return a.sse < b.sse;
    }
    let ka = (a.params.s_c, a.params.s_h, a.params.theta_ideal);
    let kb = (b.params.s_c, b.params.s_h, b.params.theta_ideal);
    ka < kb
}

fn check_range(dataset: &HiveDataset, range: &Range<usize>) -> Result<(), FitError> {
    if range.start >= range.end
        || range.end > dataset.len()
        || !dataset.is_day_edge(range.start)
        || !dataset.is_day_edge(range.end)
    {
        return Err(FitError::RangeNotDayAligned {
            start: range.start,
            end: range.end,
        });
    }
    Ok(())
}

/// Fits `{s_c, s_h, theta_ideal}` on one day-aligned range.
pub fn fit_segment(
    dataset: &HiveDataset,
    range: Range<usize>,
    space: &SearchSpace,
    config: &ModelConfig,
) -> Result<FitResult, FitError> {
    config.validate()?;
    space.validate(config)?;
    adjunct_series(dataset)?;
    check_range(dataset, &range)?;
    let track = RangeTrack::new(dataset, range.clone(), config.gap_reseed_ticks);
    fit_track(dataset, &track, range, space, config, &space.multistart_grid)
}

/// Fit on a prepared track; `seeds` may extend the space's grid.
pub(crate) fn fit_track(
    dataset: &HiveDataset,
    track: &RangeTrack,
    range: Range<usize>,
    space: &SearchSpace,
    config: &ModelConfig,
    seeds: &[HiveParams],
) -> Result<FitResult, FitError> {
    let present: Vec<f64> = track.core.iter().flatten().copied().collect();
    if present.len() < MIN_OBSERVATIONS {
        return Err(FitError::TooFewObservations {
            start: range.start,
            end: range.end,
            have: present.len(),
        });
    }

    let problem = lm::Problem { track, config, space };
    let solutions: Vec<lm::Solution> = seeds.par_iter().map(|seed| problem.solve(seed)).collect();
    let mut best = solutions[0];
    for s in &solutions[1..] {
        if better(s, &best) {
            best = *s;
        }
    }
    log::trace!("best seed converged after {} iterations, sse {}", best.iterations, best.sse);
    if !best.sse.is_finite() {
        return Err(FitError::Model(ModelError::NumericalOverflow { tick: range.start }));
    }

    let (lo, hi) = present
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut params = best.params;
    let degenerate = if hi - lo < CONSTANT_CORE_RANGE_C {
        params.s_c = space.s_c_range.1;
        params.s_h = space.s_h_range.1;
        Degeneracy::ConstantCore
    } else {
        one_sided(dataset, &range, params.theta_ideal)
    };

    let residuals = residuals_for(track, &params, config)?;
    let rmse = rmse_of(&residuals);

    if degenerate != Degeneracy::ConstantCore {
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        let constant_rmse =
            (present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / present.len() as f64).sqrt();
        if rmse >= 2.0 * constant_rmse {
            return Err(FitError::NoConvergence { rmse, constant_rmse });
        }
    }

    Ok(FitResult {
        params,
        rmse,
        n_used: residuals.len(),
        residuals,
        degenerate,
    })
}

fn one_sided(dataset: &HiveDataset, range: &Range<usize>, theta_ideal: f64) -> Degeneracy {
    let mut any_above = false;
    let mut any_below = false;
    for e in dataset.ext().values()[range.clone()].iter().flatten() {
        if e - theta_ideal >= 0.0 {
            any_above = true;
        } else {
            any_below = true;
        }
    }
    match (any_above, any_below) {
        (true, false) => Degeneracy::OneSidedExt {
            unidentified: Strength::Heating,
        },
        (false, true) => Degeneracy::OneSidedExt {
            unidentified: Strength::Cooling,
        },
        _ => Degeneracy::None,
    }
}

fn strength_mut(p: &mut HiveParams, s: Strength) -> &mut f64 {
    match s {
        Strength::Cooling => &mut p.s_c,
        Strength::Heating => &mut p.s_h,
    }
}

/// Replaces unidentified strengths of `fits[i]` (at day `positions[i]`) by
/// linear interpolation between identified neighbours, holding the nearest
/// value at the ends.
fn fill_strength(fits: &mut [FitResult], positions: &[usize], strength: Strength) -> Result<(), FitError> {
    let known: Vec<(f64, f64)> = fits
        .iter()
        .zip(positions)
        .filter(|(f, _)| !f.degenerate.is_unidentified(strength))
        .map(|(f, &d)| (d as f64, *strength_mut(&mut f.params.clone(), strength)))
        .collect();
    if known.is_empty() {
        return Err(FitError::AllDegenerate(strength));
    }
    for (fit, &day) in fits.iter_mut().zip(positions) {
        if !fit.degenerate.is_unidentified(strength) {
            continue;
        }
        let x = day as f64;
        let next = known.partition_point(|(d, _)| *d < x);
        let value = match (next.checked_sub(1).map(|i| known[i]), known.get(next)) {
            (Some((x0, y0)), Some(&(x1, y1))) => y0 + (y1 - y0) * (x - x0) / (x1 - x0),
            (Some((_, y)), None) | (None, Some(&(_, y))) => y,
            (None, None) => unreachable!("known is non-empty"),
        };
        *strength_mut(&mut fit.params, strength) = value;
    }
    Ok(())
}

/// Fills strengths flagged as unidentified in a day-ordered list of fits.
pub fn fill_unidentified(per_day_fits: &[FitResult]) -> Result<Vec<FitResult>, FitError> {
    let mut fits = per_day_fits.to_vec();
    let positions: Vec<usize> = (0..fits.len()).collect();
    fill_strength(&mut fits, &positions, Strength::Cooling)?;
    fill_strength(&mut fits, &positions, Strength::Heating)?;
    Ok(fits)
}

/// Independent fit of every daily sequence, then strength filling across
/// days. Failed days are reported in place and do not stop the others.
pub fn fit_per_day(
    dataset: &HiveDataset,
    space: &SearchSpace,
    config: &ModelConfig,
) -> Vec<Result<FitResult, FitError>> {
    let mut results: Vec<Result<FitResult, FitError>> = dataset
        .days()
        .into_par_iter()
        .map(|day| fit_segment(dataset, day, space, config))
        .collect();

    let (positions, mut ok): (Vec<usize>, Vec<FitResult>) = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().ok().map(|f| (i, f.clone())))
        .unzip();
    for strength in [Strength::Cooling, Strength::Heating] {
        if let Err(e) = fill_strength(&mut ok, &positions, strength) {
            log::warn!("hive {}: {e}; leaving flagged values in place", dataset.hive_id());
        }
    }
    for (pos, fit) in positions.into_iter().zip(ok) {
        results[pos] = Ok(fit);
    }
    results
}
