//! Sensor CSV ingestion.
//!
//! Rows are `timestamp,hive_id,sensor_location,temperature_c`. Readings are
//! averaged into hourly buckets per hive and location and laid on one grid
//! spanning whole local days; days start at local midnight of a fixed UTC
//! offset. Lines starting with `#` are ignored.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Duration, DurationRound, FixedOffset, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{file_err, IoError};
use crate::series::{HiveDataset, HiveType, TemperatureSeries, SANITY_MAX_C, SANITY_MIN_C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorLocation {
    Core,
    Peripheral,
    External,
}

impl SensorLocation {
    pub const ALL: [SensorLocation; 3] = [SensorLocation::External, SensorLocation::Peripheral, SensorLocation::Core];
}

impl fmt::Display for SensorLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensorLocation::Core => "core",
            SensorLocation::Peripheral => "peripheral",
            SensorLocation::External => "external",
        })
    }
}

impl FromStr for SensorLocation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "core" => Ok(SensorLocation::Core),
            "peripheral" | "peri" => Ok(SensorLocation::Peripheral),
            "external" | "ext" => Ok(SensorLocation::External),
            other => Err(format!("unknown sensor location {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestOptions {
    pub utc_offset_hours: i32,
    /// Hives not listed here are treated as controls.
    pub hive_types: BTreeMap<String, HiveType>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    /// Sorted by hive id.
    pub datasets: Vec<HiveDataset>,
    pub warnings: Vec<String>,
    /// Rows sharing hive, location and timestamp with an earlier row.
    pub duplicate_rows: usize,
    pub dropped_out_of_range: usize,
}

/// Per-hour running sum and count of readings.
type HourSums = BTreeMap<DateTime<Utc>, (f64, usize)>;

#[derive(Debug, Deserialize)]
struct RawRow {
    timestamp: String,
    hive_id: String,
    sensor_location: String,
    temperature_c: Option<String>,
}

pub(crate) fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, String> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    Err(format!("unparseable timestamp {s:?}"))
}

type Key = (String, SensorLocation, DateTime<Utc>);

fn read_file(
    path: &Path,
    readings: &mut HashMap<Key, Vec<f64>>,
    dropped: &mut usize,
    warnings: &mut Vec<String>,
) -> Result<(), IoError> {
    let file = std::fs::File::open(path).map_err(file_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let parse_err = |row: u64, message: String| IoError::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    for (i, rec) in rdr.deserialize::<RawRow>().enumerate() {
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| parse_err(e.position().map_or(row, |p| p.line()), e.to_string()))?;
        let ts = parse_timestamp(&rec.timestamp).map_err(|m| parse_err(row, m))?;
        let loc: SensorLocation = rec.sensor_location.parse().map_err(|m| parse_err(row, m))?;
        if rec.hive_id.is_empty() {
            return Err(parse_err(row, "empty hive_id".into()));
        }
        let Some(text) = rec.temperature_c.filter(|t| !t.is_empty()) else {
            continue;
        };
        let v: f64 = text
            .parse()
            .map_err(|_| parse_err(row, format!("unparseable temperature {text:?}")))?;
        if !v.is_finite() {
            return Err(parse_err(row, format!("non-finite temperature {text:?}")));
        }
        if !(SANITY_MIN_C..=SANITY_MAX_C).contains(&v) {
            *dropped += 1;
            warnings.push(format!(
                "{}: row {row}: dropped {v} °C outside [{SANITY_MIN_C}, {SANITY_MAX_C}]",
                path.display()
            ));
            continue;
        }
        readings.entry((rec.hive_id, loc, ts)).or_default().push(v);
    }
    Ok(())
}

/// Reads sensor CSV files into one dataset per hive.
pub fn ingest(paths: &[PathBuf], opts: &IngestOptions) -> Result<IngestReport, IoError> {
    let offset = FixedOffset::east_opt(opts.utc_offset_hours * 3600)
        .ok_or_else(|| IoError::Config(format!("bad UTC offset {}", opts.utc_offset_hours)))?;
    let mut readings: HashMap<Key, Vec<f64>> = HashMap::new();
    let mut warnings = Vec::new();
    let mut dropped = 0;
    for p in paths {
        read_file(p, &mut readings, &mut dropped, &mut warnings)?;
    }

    // duplicates collapse to their mean before hourly averaging
    let mut duplicates = 0;
    let mut hourly: BTreeMap<String, BTreeMap<SensorLocation, HourSums>> = BTreeMap::new();
    for ((hive, loc, ts), vals) in readings {
        duplicates += vals.len() - 1;
        let v = vals.iter().sum::<f64>() / vals.len() as f64;
        let hour = ts.duration_trunc(Duration::hours(1)).expect("hour truncation");
        let slot = hourly.entry(hive).or_default().entry(loc).or_default().entry(hour).or_insert((0.0, 0));
        slot.0 += v;
        slot.1 += 1;
    }
    if duplicates > 0 {
        warnings.push(format!("{duplicates} duplicate timestamp rows averaged"));
    }

    let mut datasets = Vec::with_capacity(hourly.len());
    for (hive, locs) in hourly {
        for needed in [SensorLocation::Core, SensorLocation::External] {
            if !locs.contains_key(&needed) {
                return Err(IoError::MisalignedSensors {
                    hive_id: hive,
                    missing: needed,
                });
            }
        }
        let first = locs.values().filter_map(|m| m.keys().next()).min().expect("non-empty");
        let last = locs.values().filter_map(|m| m.keys().next_back()).max().expect("non-empty");
        // pad out to whole local days
        let local_midnight = |t: DateTime<Utc>| {
            let local = t.with_timezone(&offset);
            let hours_into_day = i64::from(chrono::Timelike::hour(&local));
            t - Duration::hours(hours_into_day)
        };
        let start = local_midnight(*first);
        let end = local_midnight(*last) + Duration::hours(24);
        let n = ((end - start).num_hours()) as usize;
        let column = |loc: SensorLocation| -> Vec<Option<f64>> {
            let mut v = vec![None; n];
            if let Some(m) = locs.get(&loc) {
                for (t, (sum, count)) in m {
                    v[(*t - start).num_hours() as usize] = Some(sum / *count as f64);
                }
            }
            v
        };
        let hive_type = opts.hive_types.get(&hive).copied().unwrap_or(HiveType::Control);
        let ds = HiveDataset::with_daily_grid(
            &hive,
            hive_type,
            TemperatureSeries::new(start, column(SensorLocation::External))?,
            TemperatureSeries::new(start, column(SensorLocation::Peripheral))?,
            TemperatureSeries::new(start, column(SensorLocation::Core))?,
        )?;
        datasets.push(ds);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(IngestReport {
        datasets,
        warnings,
        duplicate_rows: duplicates,
        dropped_out_of_range: dropped,
    })
}
