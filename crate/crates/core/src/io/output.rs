//! Artifact writers. Every artifact records the hash of the configuration
//! that produced it.

use std::io::Write;
use std::path::Path;

use chrono::SecondsFormat;
use serde::Serialize;

use super::ingest::SensorLocation;
use super::{file_err, IoError};
use crate::series::{HiveDataset, TemperatureSeries};

#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub config_hash: &'a str,
    pub command: &'a str,
    pub version: &'a str,
    pub result: T,
}

pub fn write_json<T: Serialize>(path: &Path, config_hash: &str, command: &str, result: T) -> Result<(), IoError> {
    let env = Envelope {
        config_hash,
        command,
        version: env!("CARGO_PKG_VERSION"),
        result,
    };
    let file = std::fs::File::create(path).map_err(file_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &env)?;
    w.write_all(b"\n").map_err(file_err(path))?;
    w.flush().map_err(file_err(path))
}

fn csv_writer(path: &Path, config_hash: &str) -> Result<csv::Writer<std::fs::File>, IoError> {
    let mut file = std::fs::File::create(path).map_err(file_err(path))?;
    writeln!(file, "# config_hash: {config_hash}").map_err(file_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

pub(crate) fn fmt_value(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

pub(crate) fn fmt_time(t: chrono::DateTime<chrono::Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Hourly readings of every hive in the ingest format, one row per tick and
/// location (empty temperature where missing).
pub fn write_sensor_csv(path: &Path, config_hash: &str, datasets: &[HiveDataset]) -> Result<(), IoError> {
    let mut w = csv_writer(path, config_hash)?;
    w.write_record(["timestamp", "hive_id", "sensor_location", "temperature_c"])?;
    for d in datasets {
        for t in 0..d.len() {
            let ts = fmt_time(d.core().time_at(t));
            for loc in SensorLocation::ALL {
                let v = match loc {
                    SensorLocation::External => d.ext().get(t),
                    SensorLocation::Peripheral => d.peri().get(t),
                    SensorLocation::Core => d.core().get(t),
                };
                w.write_record([ts.as_str(), d.hive_id(), &loc.to_string(), &fmt_value(v)])?;
            }
        }
    }
    w.flush().map_err(file_err(path))
}

/// Observed and modelled core on a common grid.
pub fn write_model_csv(
    path: &Path,
    config_hash: &str,
    hive_id: &str,
    ext: &TemperatureSeries,
    observed: &TemperatureSeries,
    modelled: &TemperatureSeries,
    modelled_name: &str,
) -> Result<(), IoError> {
    let mut w = csv_writer(path, config_hash)?;
    w.write_record(["timestamp", "hive_id", "external", "observed_core", modelled_name])?;
    for t in 0..observed.len() {
        w.write_record([
            fmt_time(observed.time_at(t)).as_str(),
            hive_id,
            &fmt_value(ext.get(t)),
            &fmt_value(observed.get(t)),
            &fmt_value(modelled.get(t)),
        ])?;
    }
    w.flush().map_err(file_err(path))
}

pub fn write_rows<T: Serialize>(path: &Path, config_hash: &str, rows: &[T]) -> Result<(), IoError> {
    let mut w = csv_writer(path, config_hash)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(file_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(file_err(path))
}
