//! Outlier and missing-value screening over daily percent changes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{pct_change, DailySeries, PctChangeSeries, SeriesError};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("degenerate series (zero variance)")]
    ZeroVariance,
    #[error("insufficient history: {found} non-missing changes, need at least {required}")]
    InsufficientHistory { found: usize, required: usize },
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("unknown detector `{0}`")]
    UnknownDetector(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyKind {
    Outlier,
    Missing,
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Outlier => "outlier",
            Self::Missing => "missing",
        })
    }
}

/// A flagged date. Outliers carry the percent change and its z-score;
/// missing observations carry neither.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub date: NaiveDate,
    pub kind: AnomalyKind,
    #[serde(
        default,
        with = "rust_decimal::serde::arbitrary_precision_option",
        skip_serializing_if = "Option::is_none"
    )]
    pub observed_value: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_score: Option<f64>,
}

impl Anomaly {
    pub fn outlier(date: NaiveDate, value: Decimal, z_score: f64) -> Self {
        Self {
            date,
            kind: AnomalyKind::Outlier,
            observed_value: Some(value),
            z_score: Some(z_score),
        }
    }

    pub fn missing(date: NaiveDate) -> Self {
        Self {
            date,
            kind: AnomalyKind::Missing,
            observed_value: None,
            z_score: None,
        }
    }

    /// Whether the kind/value/z combination is internally consistent.
    pub fn is_well_formed(&self) -> bool {
        match self.kind {
            AnomalyKind::Outlier => self.observed_value.is_some() && self.z_score.is_some(),
            AnomalyKind::Missing => self.observed_value.is_none() && self.z_score.is_none(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdMode {
    /// n - 1 denominator.
    #[default]
    Sample,
    /// n denominator.
    Population,
}

impl FromStr for StdMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sample" => Ok(Self::Sample),
            "population" => Ok(Self::Population),
            other => Err(format!("unknown std mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub z_threshold: f64,
    pub min_changes: usize,
    pub std_mode: StdMode,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            z_threshold: 10.0,
            min_changes: 30,
            std_mode: StdMode::Sample,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.z_threshold.is_finite() && self.z_threshold > 0.0) {
            return Err(DetectError::InvalidConfig(format!(
                "z_threshold must be positive, got {}",
                self.z_threshold
            )));
        }
        if self.min_changes < 2 {
            return Err(DetectError::InvalidConfig(format!(
                "min_changes must be at least 2, got {}",
                self.min_changes
            )));
        }
        Ok(())
    }
}

/// Location and scale of the change distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
}

/// Single-pass (Welford) mean and standard deviation.
pub fn moments(values: impl IntoIterator<Item = f64>, mode: StdMode) -> Option<Moments> {
    let mut count = 0usize;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for x in values {
        count += 1;
        let delta = x - mean;
        mean += delta / count as f64;
        m2 += delta * (x - mean);
    }
    let denom = match mode {
        StdMode::Sample => count.checked_sub(1)?,
        StdMode::Population => count,
    };
    if denom == 0 {
        return None;
    }
    Some(Moments {
        count,
        mean,
        std_dev: (m2 / denom as f64).sqrt(),
    })
}

fn change_values(changes: &PctChangeSeries) -> Vec<(NaiveDate, Decimal, f64)> {
    changes
        .present()
        .map(|(date, v)| (date, v, v.to_f64().unwrap_or(f64::NAN)))
        .collect()
}

/// `(change - mean) / std_dev` for every present change; missing slots are skipped.
pub fn zscores(changes: &PctChangeSeries, mode: StdMode) -> Result<Vec<(NaiveDate, f64)>, DetectError> {
    let values = change_values(changes);
    let m = check_moments(&values, mode, 2)?;
    Ok(values
        .iter()
        .map(|(date, _, x)| (*date, (x - m.mean) / m.std_dev))
        .collect())
}

fn check_moments(
    values: &[(NaiveDate, Decimal, f64)],
    mode: StdMode,
    required: usize,
) -> Result<Moments, DetectError> {
    if values.len() < required.max(2) {
        return Err(DetectError::InsufficientHistory {
            found: values.len(),
            required: required.max(2),
        });
    }
    let m = moments(values.iter().map(|v| v.2), mode).ok_or(DetectError::InsufficientHistory {
        found: values.len(),
        required: 2,
    })?;
    if !m.std_dev.is_finite() || m.std_dev <= 0.0 {
        return Err(DetectError::ZeroVariance);
    }
    Ok(m)
}

/// Anything that turns a series into a date-ordered anomaly list.
pub trait AnomalyDetector: Send + Sync {
    fn name(&self) -> &str;
    fn detect(&self, series: &DailySeries) -> Result<Vec<Anomaly>, DetectError>;
}

/// Z-score screen over percent changes: one pass over the full change
/// series, flags inclusive of the threshold.
#[derive(Debug, Clone, Default)]
pub struct ZScoreDetector {
    pub config: DetectorConfig,
}

impl ZScoreDetector {
    pub fn new(config: DetectorConfig) -> Self {
        Self { config }
    }
}

impl AnomalyDetector for ZScoreDetector {
    fn name(&self) -> &str {
        "zscore"
    }

    fn detect(&self, series: &DailySeries) -> Result<Vec<Anomaly>, DetectError> {
        detect(series, &self.config)
    }
}

pub fn detect(series: &DailySeries, config: &DetectorConfig) -> Result<Vec<Anomaly>, DetectError> {
    config.validate()?;
    let changes = pct_change(series)?;
    let values = change_values(&changes);
    let m = check_moments(&values, config.std_mode, config.min_changes)?;

    let mut by_date: BTreeMap<NaiveDate, Anomaly> = BTreeMap::new();
    for (date, value, x) in &values {
        let z = (x - m.mean) / m.std_dev;
        if z.abs() >= config.z_threshold {
            by_date.insert(*date, Anomaly::outlier(*date, *value, z));
        }
    }
    for obs in series.observations() {
        if obs.value.is_none() {
            by_date.insert(obs.date, Anomaly::missing(obs.date));
        }
    }
    Ok(by_date.into_values().collect())
}

type DetectorFactory = Box<dyn Fn(&DetectorConfig) -> Box<dyn AnomalyDetector> + Send + Sync>;

/// Name-keyed constructors for detectors. Ships with `zscore`.
pub struct DetectorRegistry {
    factories: BTreeMap<String, DetectorFactory>,
}

impl Default for DetectorRegistry {
    fn default() -> Self {
        let mut registry = Self {
            factories: BTreeMap::new(),
        };
        registry.register("zscore", |config| Box::new(ZScoreDetector::new(*config)));
        registry
    }
}

impl DetectorRegistry {
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&DetectorConfig) -> Box<dyn AnomalyDetector> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn build(&self, name: &str, config: &DetectorConfig) -> Result<Box<dyn AnomalyDetector>, DetectError> {
        self.factories
            .get(name)
            .map(|f| f(config))
            .ok_or_else(|| DetectError::UnknownDetector(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}
