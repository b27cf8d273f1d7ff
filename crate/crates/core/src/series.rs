//! Daily price series, their metadata, and the percent-change transform.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty file: {0}")]
    EmptyFile(String),
    #[error("bad header at row 1: expected `date,value`, found `{0}`")]
    BadHeader(String),
    #[error("unparsable date `{value}` at row {row}")]
    BadDate { row: usize, value: String },
    #[error("unparsable value `{value}` at row {row}")]
    BadValue { row: usize, value: String },
    #[error("malformed row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("non-monotone dates at row {row}: {date} does not follow {previous}")]
    NonMonotoneDates {
        row: usize,
        date: NaiveDate,
        previous: NaiveDate,
    },
    #[error("series has no non-missing values")]
    AllMissing,
    #[error("series id must not be empty")]
    EmptyId,
    #[error("series needs at least 2 observations, found {0}")]
    TooShort(usize),
    #[error("zero price level on {0}")]
    ZeroPrice(NaiveDate),
    #[error("invalid json in {path}: {message}")]
    Json { path: String, message: String },
    #[error("metadata is missing the TITLE key")]
    MissingTitle,
    #[error("metadata key {key} must map to a string")]
    NonStringMetadata { key: String },
}

/// Input file format for [`load_series`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesFormat {
    Csv,
    Json,
}

impl FromStr for SeriesFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown series format `{other}` (expected csv or json)")),
        }
    }
}

impl SeriesFormat {
    /// Guess from the file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub date: NaiveDate,
    #[serde(with = "rust_decimal::serde::arbitrary_precision_option")]
    pub value: Option<Decimal>,
}

impl Observation {
    pub fn new(date: NaiveDate, value: Option<Decimal>) -> Self {
        Self { date, value }
    }
}

/// An ordered daily series with explicit missing values.
///
/// Construction validates that the id is non-empty, dates strictly increase,
/// and at least one value is present. The type is immutable afterwards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DailySeries {
    series_id: String,
    observations: Vec<Observation>,
}

impl DailySeries {
    pub fn new(
        series_id: impl Into<String>,
        observations: Vec<Observation>,
    ) -> Result<Self, SeriesError> {
        let series_id = series_id.into();
        if series_id.trim().is_empty() {
            return Err(SeriesError::EmptyId);
        }
        for (i, pair) in observations.windows(2).enumerate() {
            if pair[1].date <= pair[0].date {
                return Err(SeriesError::NonMonotoneDates {
                    // row numbers are 1-based data rows, offset by the header
                    row: i + 3,
                    date: pair[1].date,
                    previous: pair[0].date,
                });
            }
        }
        if observations.iter().all(|o| o.value.is_none()) {
            return Err(SeriesError::AllMissing);
        }
        Ok(Self {
            series_id,
            observations,
        })
    }

    pub fn series_id(&self) -> &str {
        &self.series_id
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Same observations under a different identifier.
    pub fn with_id(self, series_id: impl Into<String>) -> Result<Self, SeriesError> {
        Self::new(series_id, self.observations)
    }

    /// Multiply every present value by `factor`.
    pub fn scaled(&self, factor: Decimal) -> Self {
        let observations = self
            .observations
            .iter()
            .map(|o| Observation::new(o.date, o.value.map(|v| v * factor)))
            .collect();
        Self {
            series_id: self.series_id.clone(),
            observations,
        }
    }

    /// Serialize to the `date,value` CSV layout accepted by [`load_series`].
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.observations.len() * 20);
        out.push_str("date,value\n");
        for o in &self.observations {
            out.push_str(&o.date.format("%Y-%m-%d").to_string());
            out.push(',');
            if let Some(v) = o.value {
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("series serialization is infallible")
    }
}

#[derive(Deserialize)]
struct SeriesDocument {
    series_id: String,
    observations: Vec<Observation>,
}

pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").ok()
}

/// Load a series from a CSV (`date,value`) or JSON document.
///
/// CSV files do not carry an identifier; the file stem is used and callers
/// can rename with [`DailySeries::with_id`].
pub fn load_series(path: &Path, format: SeriesFormat) -> Result<DailySeries, SeriesError> {
    let text = fs::read_to_string(path).map_err(|source| SeriesError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        SeriesFormat::Csv => {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("series")
                .to_string();
            parse_series_csv(&id, &text, &path.display().to_string())
        }
        SeriesFormat::Json => {
            if text.trim().is_empty() {
                return Err(SeriesError::EmptyFile(path.display().to_string()));
            }
            let doc: SeriesDocument =
                serde_json::from_str(&text).map_err(|e| SeriesError::Json {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            DailySeries::new(doc.series_id, doc.observations)
        }
    }
}

/// Parse CSV text. `origin` only feeds error messages.
pub fn parse_series_csv(
    series_id: &str,
    text: &str,
    origin: &str,
) -> Result<DailySeries, SeriesError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l,
            None => return Err(SeriesError::EmptyFile(origin.to_string())),
        }
    };
    let normalized: Vec<String> = header
        .trim_start_matches('\u{feff}')
        .split(',')
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    if normalized != ["date", "value"] {
        return Err(SeriesError::BadHeader(header.to_string()));
    }

    let mut observations = Vec::new();
    let mut previous: Option<NaiveDate> = None;
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (raw_date, raw_value) = match (fields.next(), fields.next(), fields.next()) {
            (Some(d), Some(v), None) => (d, v),
            _ => {
                return Err(SeriesError::BadRow {
                    row,
                    reason: "expected exactly two fields".into(),
                })
            }
        };
        let date = parse_date(raw_date).ok_or_else(|| SeriesError::BadDate {
            row,
            value: raw_date.to_string(),
        })?;
        if let Some(prev) = previous {
            if date <= prev {
                return Err(SeriesError::NonMonotoneDates {
                    row,
                    date,
                    previous: prev,
                });
            }
        }
        previous = Some(date);
        let raw_value = raw_value.trim();
        let value = if raw_value.is_empty() {
            None
        } else {
            Some(
                Decimal::from_str_exact(raw_value)
                    .or_else(|_| Decimal::from_scientific(raw_value))
                    .map_err(|_| SeriesError::BadValue {
                        row,
                        value: raw_value.to_string(),
                    })?,
            )
        };
        observations.push(Observation::new(date, value));
    }
    if observations.is_empty() {
        return Err(SeriesError::EmptyFile(origin.to_string()));
    }
    DailySeries::new(series_id, observations)
}

/// Descriptive metadata attached to a series.
///
/// Known keys map onto named fields; anything else lands in `extra` with its
/// original casing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SeriesMetadata {
    pub title: String,
    pub description: Option<String>,
    pub currency: Option<String>,
    pub frequency_code: Option<String>,
    pub pricing_source: Option<String>,
    pub ref_area: Option<String>,
    pub extra: BTreeMap<String, String>,
}

const KEY_TITLE: &str = "TITLE";
const KEY_DESCRIPTION: &str = "DATA_DESCR";
const KEY_CURRENCY: &str = "CURRENCY";
const KEY_FREQUENCY: &str = "original_frequency_code";
const KEY_PRICING_SOURCE: &str = "PRICING_SOURCE";
const KEY_REF_AREA: &str = "REF_AREA";

impl SeriesMetadata {
    pub fn with_title(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Self::default()
        }
    }

    /// Build from a flat key/value map. Fails without a non-empty TITLE.
    pub fn from_map(mut map: BTreeMap<String, String>) -> Result<Self, SeriesError> {
        let title = map
            .remove(KEY_TITLE)
            .filter(|t| !t.trim().is_empty())
            .ok_or(SeriesError::MissingTitle)?;
        Ok(Self {
            title,
            description: map.remove(KEY_DESCRIPTION),
            currency: map.remove(KEY_CURRENCY),
            frequency_code: map.remove(KEY_FREQUENCY),
            pricing_source: map.remove(KEY_PRICING_SOURCE),
            ref_area: map.remove(KEY_REF_AREA),
            extra: map,
        })
    }

    /// Flatten back to the original key/value shape.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut map = self.extra.clone();
        map.insert(KEY_TITLE.into(), self.title.clone());
        let optional = [
            (KEY_DESCRIPTION, &self.description),
            (KEY_CURRENCY, &self.currency),
            (KEY_FREQUENCY, &self.frequency_code),
            (KEY_PRICING_SOURCE, &self.pricing_source),
            (KEY_REF_AREA, &self.ref_area),
        ];
        for (key, value) in optional {
            if let Some(v) = value {
                map.insert(key.into(), v.clone());
            }
        }
        map
    }

    pub fn from_json_str(text: &str) -> Result<Self, SeriesError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SeriesError::Json {
                path: "<metadata>".into(),
                message: e.to_string(),
            })?;
        let object = value.as_object().ok_or_else(|| SeriesError::Json {
            path: "<metadata>".into(),
            message: "expected a JSON object".into(),
        })?;
        let mut map = BTreeMap::new();
        for (k, v) in object {
            let s = v.as_str().ok_or_else(|| SeriesError::NonStringMetadata { key: k.clone() })?;
            map.insert(k.clone(), s.to_string());
        }
        Self::from_map(map)
    }
}

impl Serialize for SeriesMetadata {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_map().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SeriesMetadata {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, String>::deserialize(deserializer)?;
        Self::from_map(map).map_err(serde::de::Error::custom)
    }
}

pub fn load_metadata(path: &Path) -> Result<SeriesMetadata, SeriesError> {
    let text = fs::read_to_string(path).map_err(|source| SeriesError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SeriesMetadata::from_json_str(&text).map_err(|e| match e {
        SeriesError::Json { message, .. } => SeriesError::Json {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

/// Percent change between a row and the row immediately before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Change {
    pub date: NaiveDate,
    #[serde(with = "rust_decimal::serde::arbitrary_precision_option")]
    pub value: Option<Decimal>,
}

/// Percent changes (units: percent per observation interval).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PctChangeSeries {
    pub series_id: String,
    pub changes: Vec<Change>,
}

impl PctChangeSeries {
    pub fn present(&self) -> impl Iterator<Item = (NaiveDate, Decimal)> + '_ {
        self.changes
            .iter()
            .filter_map(|c| c.value.map(|v| (c.date, v)))
    }

    pub fn present_count(&self) -> usize {
        self.changes.iter().filter(|c| c.value.is_some()).count()
    }
}

impl fmt::Display for PctChangeSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.series_id)?;
        for c in &self.changes {
            match c.value {
                Some(v) => writeln!(f, "{}  {}", c.date, v)?,
                None => writeln!(f, "{}  NaN", c.date)?,
            }
        }
        Ok(())
    }
}

/// `100 * (p[t] - p[t-1]) / p[t-1]` for each row after the first.
///
/// A change is only defined when both the row and the row before it carry a
/// value; gap-adjacent changes stay missing.
pub fn pct_change(series: &DailySeries) -> Result<PctChangeSeries, SeriesError> {
    let obs = series.observations();
    if obs.len() < 2 {
        return Err(SeriesError::TooShort(obs.len()));
    }
    let hundred = Decimal::ONE_HUNDRED;
    let mut changes = Vec::with_capacity(obs.len() - 1);
    for pair in obs.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let value = match (prev.value, cur.value) {
            (Some(p0), Some(p1)) => {
                if p0.is_zero() {
                    return Err(SeriesError::ZeroPrice(prev.date));
                }
                Some((p1 - p0) * hundred / p0)
            }
            _ => None,
        };
        changes.push(Change {
            date: cur.date,
            value,
        });
    }
    Ok(PctChangeSeries {
        series_id: series.series_id().to_string(),
        changes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(s: &str) -> Decimal {
        Decimal::from_str_exact(s).unwrap()
    }

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    #[test]
    fn csv_two_rows_none_missing() {
        let s = parse_series_csv("x", "date,value\n1987-10-16,282.70\n1987-10-19,224.84\n", "t")
            .unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.observations().iter().all(|o| o.value.is_some()));
    }

    #[test]
    fn csv_empty_cell_is_missing() {
        let s = parse_series_csv("x", "date,value\n2020-03-12,\n2020-03-13,2711.02\n", "t")
            .unwrap();
        assert_eq!(s.observations()[0].value, None);
        assert_eq!(s.observations()[1].value, Some(dec("2711.02")));
    }

    #[test]
    fn csv_out_of_order_rejected_with_row() {
        let err = parse_series_csv("x", "date,value\n2020-03-13,1\n2020-03-12,2\n", "t")
            .unwrap_err();
        assert!(err.to_string().contains("non-monotone dates"), "{err}");
        assert!(matches!(err, SeriesError::NonMonotoneDates { row: 3, .. }));
    }

    #[test]
    fn csv_duplicate_date_rejected() {
        let err = parse_series_csv("x", "date,value\n2020-03-13,1\n2020-03-13,2\n", "t")
            .unwrap_err();
        assert!(matches!(err, SeriesError::NonMonotoneDates { .. }));
    }

    #[test]
    fn csv_bad_date_names_row() {
        let err = parse_series_csv("x", "date,value\n2020-03-13,1\n13/03/2020,2\n", "t")
            .unwrap_err();
        assert!(matches!(err, SeriesError::BadDate { row: 3, .. }), "{err}");
    }

    #[test]
    fn csv_empty_file() {
        assert!(matches!(
            parse_series_csv("x", "", "t"),
            Err(SeriesError::EmptyFile(_))
        ));
        assert!(matches!(
            parse_series_csv("x", "date,value\n", "t"),
            Err(SeriesError::EmptyFile(_))
        ));
    }

    #[test]
    fn all_missing_rejected() {
        let err = parse_series_csv("x", "date,value\n2020-03-13,\n", "t").unwrap_err();
        assert!(matches!(err, SeriesError::AllMissing));
    }

    #[test]
    fn empty_id_rejected() {
        let obs = vec![Observation::new(d("2020-01-01"), Some(Decimal::ONE))];
        assert!(matches!(DailySeries::new(" ", obs), Err(SeriesError::EmptyId)));
    }

    #[test]
    fn metadata_minimal_and_missing_title() {
        let m = SeriesMetadata::from_json_str(r#"{"TITLE":"X"}"#).unwrap();
        assert_eq!(m, SeriesMetadata::with_title("X"));
        let err = SeriesMetadata::from_json_str(r#"{"CURRENCY":"USD"}"#).unwrap_err();
        assert!(matches!(err, SeriesError::MissingTitle));
    }

    #[test]
    fn metadata_preserves_unknown_key_casing() {
        let m = SeriesMetadata::from_json_str(r#"{"TITLE":"X","Coverage_Note":"a","lower":"b"}"#)
            .unwrap();
        assert_eq!(m.extra.get("Coverage_Note").map(String::as_str), Some("a"));
        let back = m.to_map();
        assert!(back.contains_key("Coverage_Note"));
        assert!(back.contains_key("lower"));
    }

    #[test]
    fn pct_change_basic() {
        let s = parse_series_csv("x", "date,value\n2000-01-03,100\n2000-01-04,110\n", "t").unwrap();
        let c = pct_change(&s).unwrap();
        assert_eq!(c.changes.len(), 1);
        assert_eq!(c.changes[0].value, Some(dec("10")));
    }

    #[test]
    fn pct_change_black_monday() {
        let s = parse_series_csv("x", "date,value\n1987-10-16,282.70\n1987-10-19,224.84\n", "t")
            .unwrap();
        let v = pct_change(&s).unwrap().changes[0].value.unwrap();
        let expected = dec("-20.46692607");
        assert!((v - expected).abs() < dec("0.00000001"), "{v}");
    }

    #[test]
    fn pct_change_gap_adjacent_missing() {
        let s = parse_series_csv(
            "x",
            "date,value\n2000-01-03,100\n2000-01-04,\n2000-01-05,120\n",
            "t",
        )
        .unwrap();
        let c = pct_change(&s).unwrap();
        assert_eq!(c.changes.len(), 2);
        assert!(c.changes.iter().all(|c| c.value.is_none()));
    }

    #[test]
    fn pct_change_zero_price() {
        let s = parse_series_csv("x", "date,value\n2000-01-03,0\n2000-01-04,1\n", "t").unwrap();
        let err = pct_change(&s).unwrap_err();
        assert!(err.to_string().contains("zero price level"), "{err}");
        assert!(err.to_string().contains("2000-01-03"));
    }

    #[test]
    fn pct_change_needs_two_rows() {
        let s = parse_series_csv("x", "date,value\n2000-01-03,1\n", "t").unwrap();
        assert!(matches!(pct_change(&s), Err(SeriesError::TooShort(1))));
    }
}
