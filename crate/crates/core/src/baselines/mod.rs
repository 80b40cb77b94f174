//! Reference forecasters for the rolling comparison.
//!
//! All baselines see the same history as the thermal model. Gaps in the
//! history are bridged by carrying the last observation forward (leading
//! gaps take the first observation); the thermal model never does this.

mod arx;
mod holt_winters;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::TemperatureSeries;

pub use arx::{ArxFit, ArxOrder, ARX_MAX_ORDER, RIDGE_PENALTY};
pub use holt_winters::{HoltWintersFit, HwWeights, SEASON};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("{model} needs {need} present history ticks, got {have}")]
    InsufficientHistory { model: BaselineId, need: usize, have: usize },
    #[error("history core and ext are not aligned ({core} vs {ext} ticks)")]
    Misaligned { core: usize, ext: usize },
    #[error("ARX forecasts need future external temperatures for {horizon} ticks")]
    MissingExogenous { horizon: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineId {
    Persistence,
    #[serde(alias = "seasonal_naive")]
    SeasonalNaive24,
    Arx,
    #[serde(alias = "holt_winters")]
    HoltWintersAdditive,
}

impl BaselineId {
    pub const ALL: [BaselineId; 4] = [
        BaselineId::Persistence,
        BaselineId::SeasonalNaive24,
        BaselineId::Arx,
        BaselineId::HoltWintersAdditive,
    ];

    /// The model with automatic hyperparameter selection.
    pub fn default_model(self) -> BaselineModel {
        match self {
            BaselineId::Persistence => BaselineModel::Persistence,
            BaselineId::SeasonalNaive24 => BaselineModel::SeasonalNaive24,
            BaselineId::Arx => BaselineModel::Arx { order: None },
            BaselineId::HoltWintersAdditive => BaselineModel::HoltWintersAdditive { weights: None },
        }
    }
}

impl std::fmt::Display for BaselineId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BaselineId::Persistence => "persistence",
            BaselineId::SeasonalNaive24 => "seasonal_naive24",
            BaselineId::Arx => "arx",
            BaselineId::HoltWintersAdditive => "holt_winters_additive",
        })
    }
}

/// A baseline and its hyperparameters; `None` selects them from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "id")]
pub enum BaselineModel {
    Persistence,
    SeasonalNaive24,
    Arx { order: Option<ArxOrder> },
    HoltWintersAdditive { weights: Option<HwWeights> },
}

impl BaselineModel {
    pub fn id(&self) -> BaselineId {
        match self {
            BaselineModel::Persistence => BaselineId::Persistence,
            BaselineModel::SeasonalNaive24 => BaselineId::SeasonalNaive24,
            BaselineModel::Arx { .. } => BaselineId::Arx,
            BaselineModel::HoltWintersAdditive { .. } => BaselineId::HoltWintersAdditive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "id")]
pub enum FittedBaseline {
    Persistence { last: f64, next_time: DateTime<Utc> },
    SeasonalNaive24 { last_day: Vec<f64>, next_time: DateTime<Utc> },
    Arx { fit: ArxFit, next_time: DateTime<Utc> },
    HoltWintersAdditive { fit: HoltWintersFit, next_time: DateTime<Utc> },
}

/// Bridges gaps by last observation carried forward; leading gaps take the
/// first present value. `None` if nothing is present.
pub(crate) fn locf(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let first = values.iter().flatten().next().copied()?;
    let mut last = first;
    Some(
        values
            .iter()
            .map(|v| {
                if let Some(v) = v {
                    last = *v;
                }
                last
            })
            .collect(),
    )
}

fn require(model: BaselineId, need: usize, have: usize) -> Result<(), BaselineError> {
    if have < need {
        return Err(BaselineError::InsufficientHistory { model, need, have });
    }
    Ok(())
}

pub fn fit_baseline(
    model: &BaselineModel,
    history_core: &TemperatureSeries,
    history_ext: &TemperatureSeries,
) -> Result<FittedBaseline, BaselineError> {
    if history_core.len() != history_ext.len() {
        return Err(BaselineError::Misaligned {
            core: history_core.len(),
            ext: history_ext.len(),
        });
    }
    let id = model.id();
    let present = history_core.present_count();
    let next_time = history_core.end_time();
    let y = locf(history_core.values());
    match model {
        BaselineModel::Persistence => {
            require(id, 1, present)?;
            let y = y.expect("checked present");
            Ok(FittedBaseline::Persistence {
                last: *y.last().expect("non-empty"),
                next_time,
            })
        }
        BaselineModel::SeasonalNaive24 => {
            require(id, 2 * SEASON, present)?;
            let y = y.expect("checked present");
            Ok(FittedBaseline::SeasonalNaive24 {
                last_day: y[y.len() - SEASON..].to_vec(),
                next_time,
            })
        }
        BaselineModel::Arx { order } => {
            let u = locf(history_ext.values()).ok_or(BaselineError::InsufficientHistory {
                model: id,
                need: 1,
                have: 0,
            })?;
            let need = arx::min_history(order);
            require(id, need, present)?;
            let fit = arx::fit(&y.expect("checked present"), &u, order)?;
            Ok(FittedBaseline::Arx { fit, next_time })
        }
        BaselineModel::HoltWintersAdditive { weights } => {
            require(id, 2 * SEASON, present)?;
            let fit = holt_winters::fit(&y.expect("checked present"), weights)?;
            Ok(FittedBaseline::HoltWintersAdditive { fit, next_time })
        }
    }
}

pub fn predict_baseline(
    fitted: &FittedBaseline,
    horizon: usize,
    future_ext: Option<&TemperatureSeries>,
) -> Result<TemperatureSeries, BaselineError> {
    let (values, start) = match fitted {
        FittedBaseline::Persistence { last, next_time } => (vec![*last; horizon], *next_time),
        FittedBaseline::SeasonalNaive24 { last_day, next_time } => {
            ((0..horizon).map(|h| last_day[h % SEASON]).collect(), *next_time)
        }
        FittedBaseline::Arx { fit, next_time } => {
            let ext = match (fit.order.r, future_ext) {
                (0, _) => vec![0.0; horizon],
                (_, Some(e)) if e.len() >= horizon => {
                    let mut u = locf(&e.values()[..horizon]).ok_or(BaselineError::MissingExogenous { horizon })?;
                    // a leading gap continues the last history value rather than
                    // the first future one
                    if let Some(&lead) = fit.ext_tail.last() {
                        for (i, v) in e.values()[..horizon].iter().enumerate() {
                            if v.is_some() {
                                break;
                            }
                            u[i] = lead;
                        }
                    }
                    u
                }
                _ => return Err(BaselineError::MissingExogenous { horizon }),
            };
            (fit.predict(horizon, &ext), *next_time)
        }
        FittedBaseline::HoltWintersAdditive { fit, next_time } => (fit.predict(horizon), *next_time),
    };
    Ok(TemperatureSeries::derived(start, values.into_iter().map(Some).collect()))
}
