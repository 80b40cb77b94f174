//! Physics-informed modelling of beehive core temperature.
//!
//! The crate fits a split proportional controller on top of a lumped thermal
//! diffusion model to hourly hive temperatures, segments long recordings at
//! the days where the fitted colony behaviour changes, and forecasts the core
//! temperature from exogenous external temperatures.
//!
//! - [`model`]: the dynamical model and its integration
//! - [`fitting`]: constrained least-squares parameter estimation
//! - [`segmentation`]: AIC-driven greedy cut-point search
//! - [`forecasting`]: fit-then-integrate forecasts and rolling evaluation
//! - [`baselines`]: reference forecasters
//! - [`synthgen`]: synthetic hives with known ground truth
//! - [`io`]: CSV ingestion, run configuration and the command pipelines

pub mod baselines;
pub mod fitting;
pub mod forecasting;
pub mod io;
pub mod model;
pub mod segmentation;
pub mod series;
pub mod stats;
pub mod synthgen;

pub use fitting::{fit_per_day, fit_segment, fill_unidentified, Degeneracy, FitError, FitResult, SearchSpace};
pub use forecasting::{forecast, rmse, rolling_evaluation, ForecastRequest, ForecastResult};
pub use model::{reconstruct, step, HiveParams, ModelConfig, SegmentParams};
pub use segmentation::{aic, log_likelihood, segment, LikelihoodSpec, SegmentationResult};
pub use series::{adjunct_series, relative, HiveDataset, HiveType, TemperatureSeries};
