//! The `simulate`, `fit`, `segment`, `forecast` and `evaluate` commands.
//!
//! Hives are processed concurrently; each hive's artifacts are written by
//! the worker that handled it and `summary.json` is written last.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::ingest::{ingest, IngestOptions};
use super::output::{fmt_time, write_json, write_model_csv, write_rows, write_sensor_csv, write_text};
use super::plot::{bar_chart, line_chart, Line};
use super::{file_err, IoError};
use crate::fitting::{fit_per_day, fit_segment, Degeneracy, FitError, FitResult};
use crate::forecasting::{forecast, rolling_evaluation, EvaluationTable, ForecastError, ForecastRequest, MethodSummary, EBV_METHOD};
use crate::model::{reconstruct_range, HiveParams};
use crate::segmentation::{segment_with, TraceEntry};
use crate::series::{HiveDataset, HiveType, TemperatureSeries};
use crate::stats::{strength_summary, StrengthSummary};
use crate::synthgen::{generate, Regime, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Fit,
    Segment,
    Forecast,
    Evaluate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit => "fit",
            Command::Segment => "segment",
            Command::Forecast => "forecast",
            Command::Evaluate => "evaluate",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineInputs {
    pub inputs: Vec<PathBuf>,
    /// Overrides the configured output directory.
    pub out_dir: Option<PathBuf>,
    pub hive: Option<String>,
    /// Base seed for `simulate`; scenario `i` uses `seed + i`.
    pub seed: Option<u64>,
    pub no_plots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: Command,
    pub config_hash: String,
    pub out_dir: PathBuf,
    pub hives: Vec<String>,
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

struct Ctx<'a> {
    config: &'a RunConfig,
    hash: String,
    out: PathBuf,
    inputs: Vec<PathBuf>,
    plots: bool,
    command: Command,
}

impl Ctx<'_> {
    /// Output path under the run directory, never one of the inputs.
    fn path(&self, name: &str) -> Result<PathBuf, IoError> {
        let p = self.out.join(name);
        let resolved = p.canonicalize().unwrap_or_else(|_| p.clone());
        if self.inputs.contains(&resolved) {
            return Err(IoError::WouldOverwriteInput(p));
        }
        Ok(p)
    }

    fn json<T: Serialize>(&self, name: &str, value: T, artifacts: &mut Vec<PathBuf>) -> Result<(), IoError> {
        let p = self.path(name)?;
        write_json(&p, &self.hash, self.command.name(), value)?;
        artifacts.push(p);
        Ok(())
    }

    fn svg(&self, name: &str, text: String, artifacts: &mut Vec<PathBuf>) -> Result<(), IoError> {
        if self.plots {
            let p = self.path(name)?;
            write_text(&p, &text)?;
            artifacts.push(p);
        }
        Ok(())
    }
}

fn file_stem(hive: &str) -> String {
    hive.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn run_pipeline(command: Command, config: &RunConfig, inputs: &PipelineInputs) -> Result<RunSummary, IoError> {
    config.validate()?;
    let out = inputs.out_dir.clone().unwrap_or_else(|| config.output_dir.clone());
    std::fs::create_dir_all(&out).map_err(file_err(&out))?;
    let ctx = Ctx {
        config,
        hash: config.hash(),
        out: out.clone(),
        inputs: inputs
            .inputs
            .iter()
            .map(|p| p.canonicalize().unwrap_or_else(|_| p.clone()))
            .collect(),
        plots: config.plots && !inputs.no_plots,
        command,
    };

    let mut warnings = Vec::new();
    let (hives, mut artifacts) = if command == Command::Simulate {
        simulate(&ctx, inputs)?
    } else {
        if inputs.inputs.is_empty() {
            return Err(IoError::NoHives(": no --input files given".into()));
        }
        let report = ingest(&inputs.inputs, &ingest_options(config))?;
        warnings.extend(report.warnings);
        let datasets: Vec<HiveDataset> = report
            .datasets
            .into_iter()
            .filter(|d| inputs.hive.as_deref().is_none_or(|h| h == d.hive_id()))
            .collect();
        if datasets.is_empty() {
            return Err(IoError::NoHives(
                inputs.hive.as_ref().map(|h| format!(" matching {h:?}")).unwrap_or_default(),
            ));
        }
        let hives = datasets.iter().map(|d| d.hive_id().to_string()).collect();
        let artifacts = match command {
            Command::Fit => per_hive(&datasets, |d| fit_hive(&ctx, d))?,
            Command::Segment => per_hive(&datasets, |d| segment_hive(&ctx, d))?,
            Command::Forecast => per_hive(&datasets, |d| forecast_hive(&ctx, d))?,
            Command::Evaluate => evaluate(&ctx, &datasets)?,
            Command::Simulate => unreachable!(),
        };
        (hives, artifacts)
    };

    let summary_path = ctx.path("summary.json")?;
    artifacts.push(summary_path.clone());
    let summary = RunSummary {
        command,
        config_hash: ctx.hash.clone(),
        out_dir: out,
        hives,
        artifacts,
        warnings,
    };
    write_json(&summary_path, &ctx.hash, command.name(), &summary)?;
    Ok(summary)
}

/// Hive types from the config, falling back to those of the scenarios.
pub fn ingest_options(config: &RunConfig) -> IngestOptions {
    let mut hive_types: BTreeMap<String, HiveType> =
        config.scenarios.iter().map(|s| (s.hive_id.clone(), s.hive_type)).collect();
    hive_types.extend(config.hive_types.clone());
    IngestOptions {
        utc_offset_hours: config.utc_offset_hours,
        hive_types,
    }
}

fn per_hive(
    datasets: &[HiveDataset],
    f: impl Fn(&HiveDataset) -> Result<Vec<PathBuf>, IoError> + Sync + Send,
) -> Result<Vec<PathBuf>, IoError> {
    let results: Vec<Result<Vec<PathBuf>, IoError>> = datasets.par_iter().map(f).collect();
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct TruthRecord<'a> {
    hive_id: &'a str,
    hive_type: HiveType,
    regimes: &'a [Regime],
    cut_days: &'a [usize],
    cut_ticks: &'a [usize],
    cut_times: Vec<String>,
    noise_sigma: f64,
    seed: u64,
}

fn simulate(ctx: &Ctx, inputs: &PipelineInputs) -> Result<(Vec<String>, Vec<PathBuf>), IoError> {
    let mut specs: Vec<ScenarioSpec> = if ctx.config.scenarios.is_empty() {
        vec![ScenarioSpec::default()]
    } else {
        ctx.config.scenarios.clone()
    };
    if let Some(seed) = inputs.seed {
        for (i, s) in specs.iter_mut().enumerate() {
            s.seed = seed.wrapping_add(i as u64);
        }
    }
    specs.retain(|s| inputs.hive.as_deref().is_none_or(|h| h == s.hive_id));
    if specs.is_empty() {
        return Err(IoError::NoHives(" among the configured scenarios".into()));
    }
    let generated = specs
        .par_iter()
        .map(|s| generate(s, &ctx.config.model))
        .collect::<Result<Vec<_>, _>>()?;

    let mut artifacts = Vec::new();
    let datasets: Vec<HiveDataset> = generated.iter().map(|(d, _)| d.clone()).collect();
    let csv = ctx.path("sensors.csv")?;
    write_sensor_csv(&csv, &ctx.hash, &datasets)?;
    artifacts.push(csv);

    let truth: Vec<TruthRecord> = specs
        .iter()
        .zip(&generated)
        .map(|(s, (d, t))| TruthRecord {
            hive_id: d.hive_id(),
            hive_type: d.hive_type(),
            regimes: &t.regimes,
            cut_days: &t.cut_days,
            cut_ticks: &t.cut_ticks,
            cut_times: t.cut_ticks.iter().map(|&c| fmt_time(d.core().time_at(c))).collect(),
            noise_sigma: s.noise_sigma,
            seed: s.seed,
        })
        .collect();
    ctx.json("truth.json", &truth, &mut artifacts)?;
    for (d, t) in &generated {
        let svg = line_chart(
            &format!("{} simulated", d.hive_id()),
            &ctx.hash,
            &[
                Line { label: "external", color: "#999", values: d.ext().values() },
                Line { label: "core", color: "#1f5fbf", values: d.core().values() },
            ],
            &t.cut_ticks,
        );
        ctx.svg(&format!("simulate_{}.svg", file_stem(d.hive_id())), svg, &mut artifacts)?;
    }
    Ok((datasets.iter().map(|d| d.hive_id().to_string()).collect(), artifacts))
}

#[derive(Serialize)]
struct FitSummary {
    params: HiveParams,
    rmse: f64,
    n_used: usize,
    degenerate: Degeneracy,
}

impl From<&FitResult> for FitSummary {
    fn from(f: &FitResult) -> Self {
        Self {
            params: f.params,
            rmse: f.rmse,
            n_used: f.n_used,
            degenerate: f.degenerate,
        }
    }
}

#[derive(Serialize)]
struct DayRecord {
    day: usize,
    start_time: String,
    #[serde(flatten)]
    fit: Option<FitSummary>,
    error: Option<String>,
}

#[derive(Serialize)]
struct FitReport<'a> {
    hive_id: &'a str,
    hive_type: HiveType,
    whole_series: Option<FitSummary>,
    whole_series_error: Option<String>,
    days: Vec<DayRecord>,
    strength_summary: Option<StrengthSummary>,
}

fn fit_hive(ctx: &Ctx, d: &HiveDataset) -> Result<Vec<PathBuf>, IoError> {
    let space = ctx.config.search_space();
    let model = &ctx.config.model;
    let whole = fit_segment(d, 0..d.len(), &space, model);
    let days = fit_per_day(d, &space, model);
    let ranges = d.days();

    let mut recon = vec![None; d.len()];
    for (r, fit) in ranges.iter().zip(&days) {
        if let Ok(f) = fit {
            let v = reconstruct_range(d, r.clone(), &f.params, model)?;
            recon[r.clone()].copy_from_slice(&v);
        }
    }
    let ok: Vec<FitResult> = days.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let report = FitReport {
        hive_id: d.hive_id(),
        hive_type: d.hive_type(),
        whole_series: whole.as_ref().ok().map(FitSummary::from),
        whole_series_error: whole.as_ref().err().map(FitError::to_string),
        days: ranges
            .iter()
            .zip(&days)
            .enumerate()
            .map(|(i, (r, f))| DayRecord {
                day: i,
                start_time: fmt_time(d.core().time_at(r.start)),
                fit: f.as_ref().ok().map(FitSummary::from),
                error: f.as_ref().err().map(FitError::to_string),
            })
            .collect(),
        strength_summary: strength_summary(&ok),
    };

    let stem = file_stem(d.hive_id());
    let mut artifacts = Vec::new();
    ctx.json(&format!("fit_{stem}.json"), &report, &mut artifacts)?;
    let recon = TemperatureSeries::derived(d.start(), recon);
    let csv = ctx.path(&format!("fit_{stem}.csv"))?;
    write_model_csv(&csv, &ctx.hash, d.hive_id(), d.ext(), d.core(), &recon, "reconstructed_core")?;
    artifacts.push(csv);
    let svg = line_chart(
        &format!("{} per-day fit", d.hive_id()),
        &ctx.hash,
        &[
            Line { label: "observed core", color: "#1f5fbf", values: d.core().values() },
            Line { label: "reconstructed", color: "#d62728", values: recon.values() },
        ],
        &[],
    );
    ctx.svg(&format!("fit_{stem}.svg"), svg, &mut artifacts)?;
    Ok(artifacts)
}

#[derive(Serialize)]
struct SegmentRecord {
    start: usize,
    end: usize,
    start_time: String,
    end_time: String,
    #[serde(flatten)]
    fit: FitSummary,
}

#[derive(Serialize)]
struct SegmentReport<'a> {
    hive_id: &'a str,
    hive_type: HiveType,
    cut_points: &'a [usize],
    cut_days: Vec<usize>,
    cut_times: Vec<String>,
    segments: Vec<SegmentRecord>,
    aic: f64,
    log_likelihood: f64,
    sigma_mle: f64,
    zero_variance: bool,
    aic_trace: &'a [TraceEntry],
}

fn segment_hive(ctx: &Ctx, d: &HiveDataset) -> Result<Vec<PathBuf>, IoError> {
    let c = ctx.config;
    let r = segment_with(d, &c.search_space(), &c.model, &c.likelihood, &c.segmentation)?;
    let time = |t: usize| fmt_time(d.core().time_at(t));
    let report = SegmentReport {
        hive_id: d.hive_id(),
        hive_type: d.hive_type(),
        cut_points: &r.cut_points,
        cut_days: r.cut_points.iter().map(|&t| d.day_of(t)).collect(),
        cut_times: r.cut_points.iter().map(|&t| time(t)).collect(),
        segments: r
            .segments
            .iter()
            .zip(&r.fits)
            .map(|(s, f)| SegmentRecord {
                start: s.range.start,
                end: s.range.end,
                start_time: time(s.range.start),
                end_time: time(s.range.end),
                fit: f.into(),
            })
            .collect(),
        aic: r.aic,
        log_likelihood: r.log_likelihood,
        sigma_mle: r.sigma_mle,
        zero_variance: r.zero_variance,
        aic_trace: &r.aic_trace,
    };
    let stem = file_stem(d.hive_id());
    let mut artifacts = Vec::new();
    ctx.json(&format!("segment_{stem}.json"), &report, &mut artifacts)?;
    let csv = ctx.path(&format!("segment_{stem}.csv"))?;
    write_model_csv(&csv, &ctx.hash, d.hive_id(), d.ext(), d.core(), &r.reconstruction, "reconstructed_core")?;
    artifacts.push(csv);
    let svg = line_chart(
        &format!("{} segmentation ({} cuts)", d.hive_id(), r.cut_points.len()),
        &ctx.hash,
        &[
            Line { label: "observed core", color: "#1f5fbf", values: d.core().values() },
            Line { label: "reconstructed", color: "#d62728", values: r.reconstruction.values() },
        ],
        &r.cut_points,
    );
    ctx.svg(&format!("segment_{stem}.svg"), svg, &mut artifacts)?;
    Ok(artifacts)
}

#[derive(Serialize)]
struct ForecastReport<'a> {
    hive_id: &'a str,
    fit_window_start: String,
    forecast_start: String,
    horizon: usize,
    params_used: HiveParams,
    fit_rmse: f64,
    degenerate: Degeneracy,
    rmse: Option<f64>,
    per_day_rmse: Vec<Option<f64>>,
    degraded_adj: bool,
}

fn forecast_hive(ctx: &Ctx, d: &HiveDataset) -> Result<Vec<PathBuf>, IoError> {
    let w = &ctx.config.forecasting;
    let span = w.fit_days + w.horizon_days;
    if d.num_days() < span {
        return Err(ForecastError::InvalidWindow(format!(
            "hive {} has {} days, forecasting needs {span}",
            d.hive_id(),
            d.num_days()
        ))
        .into());
    }
    // hindcast over the last horizon of the record
    let bounds = d.day_boundaries();
    let origin = d.num_days() - span;
    let window = bounds[origin]..bounds[origin + w.fit_days];
    let horizon = d.len() - window.end;
    let request = ForecastRequest::from_dataset(d, window.clone(), horizon)?;
    let f = forecast(&request, &ctx.config.search_space(), &ctx.config.model)?;

    let report = ForecastReport {
        hive_id: d.hive_id(),
        fit_window_start: fmt_time(d.core().time_at(window.start)),
        forecast_start: fmt_time(d.core().time_at(window.end)),
        horizon,
        params_used: f.params_used,
        fit_rmse: f.fit.rmse,
        degenerate: f.fit.degenerate,
        rmse: f.rmse,
        per_day_rmse: f.per_day_rmse.clone(),
        degraded_adj: f.degraded_adj,
    };
    let stem = file_stem(d.hive_id());
    let mut artifacts = Vec::new();
    ctx.json(&format!("forecast_{stem}.json"), &report, &mut artifacts)?;
    let actual = request.actual.clone().expect("hindcast carries actuals");
    let csv = ctx.path(&format!("forecast_{stem}.csv"))?;
    write_model_csv(&csv, &ctx.hash, d.hive_id(), &request.future_ext, &actual, &f.forecast, "forecast_core")?;
    artifacts.push(csv);
    let svg = line_chart(
        &format!("{} forecast", d.hive_id()),
        &ctx.hash,
        &[
            Line { label: "observed core", color: "#1f5fbf", values: actual.values() },
            Line { label: "forecast", color: "#d62728", values: f.forecast.values() },
        ],
        &[],
    );
    ctx.svg(&format!("forecast_{stem}.svg"), svg, &mut artifacts)?;
    Ok(artifacts)
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    fit_days: usize,
    horizon_days: usize,
    methods: Vec<String>,
    summary: Vec<MethodSummary>,
    summary_by_hive: Vec<MethodSummary>,
    /// Share of origins where the model beats the best baseline by 20 %.
    fraction_origins_20pct_better: Option<f64>,
    table: &'a EvaluationTable,
}

#[derive(Serialize)]
struct EvalCsvRow<'a> {
    hive_id: &'a str,
    origin_day: usize,
    origin_time: String,
    method: &'a str,
    rmse: f64,
}

fn evaluate(ctx: &Ctx, datasets: &[HiveDataset]) -> Result<Vec<PathBuf>, IoError> {
    let c = ctx.config;
    let space = c.search_space();
    let baselines = c.baseline_models();
    let tables: Vec<EvaluationTable> = datasets
        .par_iter()
        .map(|d| rolling_evaluation(d, &space, &c.model, &baselines, &c.forecasting))
        .collect();
    let mut table = EvaluationTable::default();
    for t in tables {
        table.extend(t);
    }
    for s in &table.skipped {
        log::warn!("skipped origin day {} of {}: {}", s.origin_day, s.hive_id, s.reason);
    }
    let improvement = table.improvement_over_best_baseline();
    let report = EvaluationReport {
        fit_days: c.forecasting.fit_days,
        horizon_days: c.forecasting.horizon_days,
        methods: table.methods(),
        summary: table.summary(),
        summary_by_hive: table.summary_by_hive(),
        fraction_origins_20pct_better: (!improvement.is_empty())
            .then(|| improvement.iter().filter(|&&x| x >= 0.2).count() as f64 / improvement.len() as f64),
        table: &table,
    };
    let mut artifacts = Vec::new();
    ctx.json("evaluation.json", &report, &mut artifacts)?;

    let start_of: BTreeMap<&str, (&HiveDataset, DateTime<Utc>)> =
        datasets.iter().map(|d| (d.hive_id(), (d, d.start()))).collect();
    let rows: Vec<EvalCsvRow> = table
        .rows
        .iter()
        .map(|r| {
            let (d, _) = start_of[r.hive_id.as_str()];
            EvalCsvRow {
                hive_id: &r.hive_id,
                origin_day: r.origin_day,
                origin_time: fmt_time(d.core().time_at(d.day_boundaries()[r.origin_day])),
                method: &r.method,
                rmse: r.rmse,
            }
        })
        .collect();
    let csv = ctx.path("evaluation.csv")?;
    write_rows(&csv, &ctx.hash, &rows)?;
    artifacts.push(csv);
    let bars: Vec<(String, f64, f64)> = report
        .summary
        .iter()
        .map(|s| (s.method.clone(), s.mean_rmse, s.std_rmse))
        .collect();
    ctx.svg(
        "evaluation.svg",
        bar_chart(&format!("mean forecast RMSE (°C), {EBV_METHOD} vs baselines"), &ctx.hash, &bars),
        &mut artifacts,
    )?;
    Ok(artifacts)
}
