//! Ingestion, run configuration, artifact writers and the command
//! pipelines behind the `ebv` binary.

pub mod config;
pub mod ingest;
pub mod output;
pub mod pipeline;
pub mod plot;

use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::fitting::FitError;
use crate::forecasting::ForecastError;
use crate::model::ModelError;
use crate::segmentation::SegmentationError;
use crate::series::SeriesError;
use crate::synthgen::SynthError;

pub use config::RunConfig;
pub use ingest::{ingest, IngestOptions, IngestReport, SensorLocation};
pub use pipeline::{run_pipeline, Command, PipelineInputs, RunSummary};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: row {row}: {message}")]
    Parse { path: PathBuf, row: u64, message: String },
    #[error("hive {hive_id} has no {missing} readings")]
    MisalignedSensors { hive_id: String, missing: SensorLocation },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no hives to process{0}")]
    NoHives(String),
    #[error("refusing to overwrite input file {0}")]
    WouldOverwriteInput(PathBuf),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl IoError {
    pub fn kind(&self) -> &'static str {
        match self {
            IoError::Parse { .. } => "parse_error",
            IoError::MisalignedSensors { .. } => "misaligned_sensors",
            IoError::File { .. } => "file_error",
            IoError::Config(_) => "config_error",
            IoError::NoHives(_) => "no_hives",
            IoError::WouldOverwriteInput(_) => "would_overwrite_input",
            IoError::Json(_) => "json_error",
            IoError::Csv(_) => "csv_error",
            IoError::Series(_) => "series_error",
            IoError::Model(_) => "model_error",
            IoError::Fit(_) => "fit_error",
            IoError::Segmentation(_) => "segmentation_error",
            IoError::Forecast(_) => "forecast_error",
            IoError::Synth(_) => "synth_error",
        }
    }

    /// Machine-readable form written to stderr by the binary.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            error: &'a str,
            message: String,
        }
        serde_json::to_string(&Body {
            error: self.kind(),
            message: self.to_string(),
        })
        .expect("plain strings serialize")
    }
}

pub(crate) fn file_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> IoError {
    let path = path.into();
    move |source| IoError::File { path, source }
}
