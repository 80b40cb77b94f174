//! Hourly temperature series and the aligned per-hive dataset.

use std::ops::Range;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowest temperature accepted from a sensor, °C.
pub const SANITY_MIN_C: f64 = -50.0;
/// Highest temperature accepted from a sensor, °C.
pub const SANITY_MAX_C: f64 = 70.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("series must contain at least one tick")]
    Empty,
    #[error("non-finite temperature at tick {index}")]
    NonFinite { index: usize },
    #[error("temperature {value} °C at tick {index} is outside [{SANITY_MIN_C}, {SANITY_MAX_C}]")]
    OutOfRange { index: usize, value: f64 },
    #[error("ext, peri and core must share one grid: {0}")]
    Misaligned(String),
    #[error("invalid day boundaries: {0}")]
    DayBoundaries(String),
    #[error("treated hive {0} has no peripheral readings at all")]
    TreatedPeriFullyMissing(String),
}

/// Temperature sequence on a fixed one-hour grid. `None` marks a missing tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSeries {
    start: DateTime<Utc>,
    values: Vec<Option<f64>>,
}

impl TemperatureSeries {
    /// Builds a series of absolute sensor temperatures, rejecting empty input,
    /// non-finite values and readings outside the sensor sanity bound.
    pub fn new(start: DateTime<Utc>, values: Vec<Option<f64>>) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        for (index, v) in values.iter().enumerate() {
            if let Some(v) = *v {
                if !v.is_finite() {
                    return Err(SeriesError::NonFinite { index });
                }
                if !(SANITY_MIN_C..=SANITY_MAX_C).contains(&v) {
                    return Err(SeriesError::OutOfRange { index, value: v });
                }
            }
        }
        Ok(Self { start, values })
    }

    /// Builds a series without the sensor bound. Used for derived quantities
    /// such as temperatures relative to the ideal core temperature.
    pub fn derived(start: DateTime<Utc>, values: Vec<Option<f64>>) -> Self {
        Self { start, values }
    }

    pub fn from_present(start: DateTime<Utc>, values: &[f64]) -> Result<Self, SeriesError> {
        Self::new(start, values.iter().copied().map(Some).collect())
    }

    pub fn missing(start: DateTime<Utc>, len: usize) -> Self {
        Self { start, values: vec![None; len] }
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    /// Grid step, always one hour.
    pub fn step(&self) -> Duration {
        Duration::hours(1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.values.get(index).copied().flatten()
    }

    pub fn time_at(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::hours(index as i64)
    }

    pub fn end_time(&self) -> DateTime<Utc> {
        self.time_at(self.values.len())
    }

    pub fn present_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn has_present(&self) -> bool {
        self.values.iter().any(Option::is_some)
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            start: self.time_at(range.start),
            values: self.values[range].to_vec(),
        }
    }

    /// Present values paired with their tick index.
    pub fn present(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
    }

    pub fn map_present(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            start: self.start,
            values: self.values.iter().map(|v| v.map(&f)).collect(),
        }
    }
}

/// Expresses every present value relative to `theta_ideal`.
pub fn relative(series: &TemperatureSeries, theta_ideal: f64) -> TemperatureSeries {
    series.map_present(|v| v - theta_ideal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiveType {
    Control,
    Treated,
}

impl std::fmt::Display for HiveType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HiveType::Control => f.write_str("control"),
            HiveType::Treated => f.write_str("treated"),
        }
    }
}

/// External, peripheral and core series of one hive on a shared hourly grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiveDataset {
    hive_id: String,
    hive_type: HiveType,
    ext: TemperatureSeries,
    peri: TemperatureSeries,
    core: TemperatureSeries,
    day_boundaries: Vec<usize>,
}

impl HiveDataset {
    pub fn new(
        hive_id: impl Into<String>,
        hive_type: HiveType,
        ext: TemperatureSeries,
        peri: TemperatureSeries,
        core: TemperatureSeries,
        day_boundaries: Vec<usize>,
    ) -> Result<Self, SeriesError> {
        let hive_id = hive_id.into();
        let n = core.len();
        for (name, s) in [("ext", &ext), ("peri", &peri)] {
            if s.len() != n {
                return Err(SeriesError::Misaligned(format!(
                    "{name} has {} ticks, core has {n}",
                    s.len()
                )));
            }
            if s.start() != core.start() {
                return Err(SeriesError::Misaligned(format!(
                    "{name} starts at {}, core at {}",
                    s.start(),
                    core.start()
                )));
            }
        }
        if day_boundaries.first() != Some(&0) {
            return Err(SeriesError::DayBoundaries("must begin at 0".into()));
        }
        if day_boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SeriesError::DayBoundaries("must be strictly increasing".into()));
        }
        if day_boundaries.last().is_some_and(|&b| b >= n) {
            return Err(SeriesError::DayBoundaries(format!(
                "boundary beyond grid of {n} ticks"
            )));
        }
        Ok(Self {
            hive_id,
            hive_type,
            ext,
            peri,
            core,
            day_boundaries,
        })
    }

    /// Dataset with a day boundary every 24 ticks from the first tick.
    pub fn with_daily_grid(
        hive_id: impl Into<String>,
        hive_type: HiveType,
        ext: TemperatureSeries,
        peri: TemperatureSeries,
        core: TemperatureSeries,
    ) -> Result<Self, SeriesError> {
        let bounds = (0..core.len()).step_by(24).collect();
        Self::new(hive_id, hive_type, ext, peri, core, bounds)
    }

    pub fn hive_id(&self) -> &str {
        &self.hive_id
    }

    pub fn hive_type(&self) -> HiveType {
        self.hive_type
    }

    pub fn ext(&self) -> &TemperatureSeries {
        &self.ext
    }

    pub fn peri(&self) -> &TemperatureSeries {
        &self.peri
    }

    pub fn core(&self) -> &TemperatureSeries {
        &self.core
    }

    pub fn day_boundaries(&self) -> &[usize] {
        &self.day_boundaries
    }

    pub fn len(&self) -> usize {
        self.core.len()
    }

    pub fn is_empty(&self) -> bool {
        self.core.is_empty()
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.core.start()
    }

    pub fn num_days(&self) -> usize {
        self.day_boundaries.len()
    }

    /// Tick range of every daily sequence, in order.
    pub fn days(&self) -> Vec<Range<usize>> {
        let n = self.len();
        self.day_boundaries
            .iter()
            .enumerate()
            .map(|(i, &b)| b..self.day_boundaries.get(i + 1).copied().unwrap_or(n))
            .collect()
    }

    /// True for day boundaries and for the end of the grid.
    pub fn is_day_edge(&self, tick: usize) -> bool {
        tick == self.len() || self.day_boundaries.binary_search(&tick).is_ok()
    }

    /// Index of the day containing `tick`.
    pub fn day_of(&self, tick: usize) -> usize {
        match self.day_boundaries.binary_search(&tick) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    /// Copy restricted to `range`, with day boundaries re-based to the slice.
    pub fn slice(&self, range: Range<usize>) -> Result<Self, SeriesError> {
        let mut bounds: Vec<usize> = self
            .day_boundaries
            .iter()
            .filter(|&&b| range.contains(&b))
            .map(|&b| b - range.start)
            .collect();
        if bounds.first() != Some(&0) {
            bounds.insert(0, 0);
        }
        Self::new(
            self.hive_id.clone(),
            self.hive_type,
            self.ext.slice(range.clone()),
            self.peri.slice(range.clone()),
            self.core.slice(range),
            bounds,
        )
    }

    pub fn with_core(&self, core: TemperatureSeries) -> Result<Self, SeriesError> {
        Self::new(
            self.hive_id.clone(),
            self.hive_type,
            self.ext.clone(),
            self.peri.clone(),
            core,
            self.day_boundaries.clone(),
        )
    }

    pub fn with_ext(&self, ext: TemperatureSeries) -> Result<Self, SeriesError> {
        Self::new(
            self.hive_id.clone(),
            self.hive_type,
            ext,
            self.peri.clone(),
            self.core.clone(),
            self.day_boundaries.clone(),
        )
    }
}

/// Second-surface forcing: ext for control hives, peri for treated ones.
///
/// Treated ticks without a peripheral reading fall back to the external value.
pub fn adjunct_series(dataset: &HiveDataset) -> Result<TemperatureSeries, SeriesError> {
    match dataset.hive_type {
        HiveType::Control => Ok(dataset.ext.clone()),
        HiveType::Treated => {
            if !dataset.peri.has_present() {
                return Err(SeriesError::TreatedPeriFullyMissing(dataset.hive_id.clone()));
            }
            let values = dataset
                .peri
                .values()
                .iter()
                .zip(dataset.ext.values())
                .map(|(p, e)| p.or(*e))
                .collect();
            Ok(TemperatureSeries::derived(dataset.ext.start(), values))
        }
    }
}
