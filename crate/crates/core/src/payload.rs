//! The machine-readable validation payload handed to the agents.
//!
//! The rendered text has two labelled blocks:
//!
//! ```text
//! DATA:
//! {"<series id>":{"1987-10-19":-20.46692607,"1987-10-20":null}}
//! METADATA:
//! {"CURRENCY":"USD","TITLE":"S&P 500 INDEX"}
//! ```
//!
//! Both blocks are compact JSON with keys in ascending order, so rendering is
//! byte-deterministic.

use std::collections::BTreeMap;
use std::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use thiserror::Error;

use crate::detector::{Anomaly, AnomalyKind};
use crate::series::{parse_date, SeriesMetadata};

/// Significant digits kept for outlier values in the payload.
pub const PAYLOAD_SIGNIFICANT_DIGITS: u32 = 12;

const DATA_LABEL: &str = "DATA:";
const METADATA_LABEL: &str = "METADATA:";

#[derive(Debug, Error)]
pub enum PayloadError {
    #[error("nothing to validate: the anomaly list is empty")]
    NothingToValidate,
    #[error("outlier on {0} has no observed value")]
    OutlierWithoutValue(NaiveDate),
    #[error("malformed payload: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationPayload {
    pub series_id: String,
    /// Anomalous dates: outliers carry their percent change, missing dates `None`.
    pub data: BTreeMap<NaiveDate, Option<Decimal>>,
    pub metadata: SeriesMetadata,
}

pub fn round_for_payload(value: Decimal) -> Decimal {
    value
        .round_sf(PAYLOAD_SIGNIFICANT_DIGITS)
        .unwrap_or(value)
        .normalize()
}

pub fn build_payload(
    series_id: &str,
    anomalies: &[Anomaly],
    metadata: &SeriesMetadata,
) -> Result<ValidationPayload, PayloadError> {
    if anomalies.is_empty() {
        return Err(PayloadError::NothingToValidate);
    }
    let mut data = BTreeMap::new();
    for a in anomalies {
        let value = match a.kind {
            AnomalyKind::Outlier => Some(round_for_payload(
                a.observed_value
                    .ok_or(PayloadError::OutlierWithoutValue(a.date))?,
            )),
            AnomalyKind::Missing => None,
        };
        data.insert(a.date, value);
    }
    Ok(ValidationPayload {
        series_id: series_id.to_string(),
        data,
        metadata: metadata.clone(),
    })
}

fn decimal_number(value: Decimal) -> Number {
    Number::from_str(&value.to_string()).expect("decimal renders as a JSON number")
}

impl ValidationPayload {
    /// `{"<series id>": {"YYYY-MM-DD": number|null, ...}}`
    pub fn data_json(&self) -> Value {
        let mut inner = Map::new();
        for (date, value) in &self.data {
            let v = match value {
                Some(d) => Value::Number(decimal_number(*d)),
                None => Value::Null,
            };
            inner.insert(date.format("%Y-%m-%d").to_string(), v);
        }
        let mut outer = Map::new();
        outer.insert(self.series_id.clone(), Value::Object(inner));
        Value::Object(outer)
    }

    pub fn metadata_json(&self) -> Value {
        serde_json::to_value(&self.metadata).expect("metadata serializes")
    }

    pub fn render_data_text(&self) -> String {
        self.data_json().to_string()
    }

    pub fn render_metadata_text(&self) -> String {
        self.metadata_json().to_string()
    }

    pub fn outlier_count(&self) -> usize {
        self.data.values().filter(|v| v.is_some()).count()
    }

    pub fn missing_dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.data
            .iter()
            .filter(|(_, v)| v.is_none())
            .map(|(d, _)| *d)
    }
}

/// Canonical text used inside agent prompts.
pub fn render_payload_text(payload: &ValidationPayload) -> String {
    format!(
        "{DATA_LABEL}\n{}\n{METADATA_LABEL}\n{}\n",
        payload.render_data_text(),
        payload.render_metadata_text()
    )
}

fn data_from_json(value: &Value) -> Result<(String, BTreeMap<NaiveDate, Option<Decimal>>), PayloadError> {
    let outer = value
        .as_object()
        .ok_or_else(|| PayloadError::Malformed("data block must be an object".into()))?;
    if outer.len() != 1 {
        return Err(PayloadError::Malformed(format!(
            "data block must hold exactly one series, found {}",
            outer.len()
        )));
    }
    let (series_id, inner) = outer.iter().next().expect("one entry");
    let inner = inner
        .as_object()
        .ok_or_else(|| PayloadError::Malformed("series entry must be an object".into()))?;
    let mut data = BTreeMap::new();
    for (key, v) in inner {
        let date = parse_date(key)
            .ok_or_else(|| PayloadError::Malformed(format!("bad date key `{key}`")))?;
        let value = match v {
            Value::Null => None,
            Value::Number(n) => Some(
                Decimal::from_str_exact(&n.to_string())
                    .or_else(|_| Decimal::from_scientific(&n.to_string()))
                    .map_err(|e| PayloadError::Malformed(format!("value for {key}: {e}")))?,
            ),
            other => {
                return Err(PayloadError::Malformed(format!(
                    "value for {key} must be a number or null, found {other}"
                )))
            }
        };
        data.insert(date, value);
    }
    if data.is_empty() {
        return Err(PayloadError::NothingToValidate);
    }
    Ok((series_id.clone(), data))
}

/// Inverse of [`render_payload_text`].
pub fn parse_payload_text(text: &str) -> Result<ValidationPayload, PayloadError> {
    let rest = text
        .trim_start()
        .strip_prefix(DATA_LABEL)
        .ok_or_else(|| PayloadError::Malformed("missing DATA: label".into()))?;
    let split = rest
        .find(&format!("\n{METADATA_LABEL}"))
        .ok_or_else(|| PayloadError::Malformed("missing METADATA: label".into()))?;
    let data_text = &rest[..split];
    let meta_text = &rest[split + METADATA_LABEL.len() + 1..];
    let data_value: Value = serde_json::from_str(data_text.trim())
        .map_err(|e| PayloadError::Malformed(format!("data block: {e}")))?;
    let (series_id, data) = data_from_json(&data_value)?;
    let metadata = SeriesMetadata::from_json_str(meta_text.trim())
        .map_err(|e| PayloadError::Malformed(format!("metadata block: {e}")))?;
    Ok(ValidationPayload {
        series_id,
        data,
        metadata,
    })
}

/// On-disk form written by `detect`: `{"data": {...}, "metadata": {...}}`.
#[derive(Serialize, Deserialize)]
struct PayloadFile {
    data: Value,
    metadata: SeriesMetadata,
}

impl Serialize for ValidationPayload {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PayloadFile {
            data: self.data_json(),
            metadata: self.metadata.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ValidationPayload {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = PayloadFile::deserialize(deserializer)?;
        let (series_id, data) = data_from_json(&file.data).map_err(serde::de::Error::custom)?;
        Ok(Self {
            series_id,
            data,
            metadata: file.metadata,
        })
    }
}
