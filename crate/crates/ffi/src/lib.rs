//! C ABI over the detection, payload and verdict-parsing parts of `finval`.
//!
//! Conventions:
//! - every fallible call returns an [`FvStatus`]; on failure the message is
//!   available from [`fv_last_error_message`] on the same thread;
//! - handles are opaque and owned by the caller until passed to their
//!   `*_free` function; strings returned through out-pointers must be
//!   released with [`fv_string_free`];
//! - panics never cross the boundary and are reported as `FV_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use chrono::Datelike;
use finval::detector::{detect, Anomaly, AnomalyKind, DetectorConfig};
use finval::experts::parse_verdicts;
use finval::payload::build_payload;
use finval::series::{load_metadata, load_series, DailySeries, SeriesFormat, SeriesMetadata};
use rust_decimal::prelude::ToPrimitive;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FvStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    DetectFailed = 4,
    PayloadFailed = 5,
    VerdictFailed = 6,
    OutOfRange = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FvAnomalyKind {
    Outlier = 0,
    Missing = 1,
}

/// One flagged date. `value` and `z_score` are only meaningful when the
/// matching `has_*` flag is set.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FvAnomaly {
    pub year: i32,
    pub month: u32,
    pub day: u32,
    pub kind: FvAnomalyKind,
    pub has_value: bool,
    pub value: f64,
    pub has_z_score: bool,
    pub z_score: f64,
}

/// A loaded daily series with optional metadata.
pub struct FvSeries {
    series: DailySeries,
    metadata: Option<SeriesMetadata>,
}

/// Result of a detection run.
pub struct FvAnomalies {
    items: Vec<Anomaly>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

type FfiResult<T> = Result<T, (FvStatus, String)>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> FvStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FvStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FvStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err((FvStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (FvStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| (FvStatus::NullArgument, format!("{name} is null")))
}

fn out_check<T>(out: *mut T) -> FfiResult<()> {
    if out.is_null() {
        Err((FvStatus::NullArgument, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

fn into_c_string(text: String) -> FfiResult<*mut c_char> {
    CString::new(text)
        .map(CString::into_raw)
        .map_err(|_| (FvStatus::InvalidInput, "result contains a NUL byte".into()))
}

/// Loads a `date,value` CSV (or JSON) series. `metadata_path` may be null;
/// payloads can only be built from series loaded with metadata.
///
/// # Safety
/// Path arguments must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fv_series_load(
    series_path: *const c_char,
    metadata_path: *const c_char,
    out: *mut *mut FvSeries,
) -> FvStatus {
    guard(|| {
        out_check(out)?;
        *out = ptr::null_mut();
        let path = Path::new(str_arg(series_path, "series_path")?);
        let series =
            load_series(path, SeriesFormat::from_path(path)).map_err(|e| (FvStatus::InvalidInput, e.to_string()))?;
        let metadata = if metadata_path.is_null() {
            None
        } else {
            let p = Path::new(str_arg(metadata_path, "metadata_path")?);
            Some(load_metadata(p).map_err(|e| (FvStatus::InvalidInput, e.to_string()))?)
        };
        *out = Box::into_raw(Box::new(FvSeries { series, metadata }));
        Ok(())
    })
}

/// Number of observations, or 0 for a null handle.
///
/// # Safety
/// `series` must be null or a live handle from [`fv_series_load`].
#[no_mangle]
pub unsafe extern "C" fn fv_series_len(series: *const FvSeries) -> usize {
    series.as_ref().map_or(0, |s| s.series.len())
}

/// # Safety
/// `series` must be null or a handle from [`fv_series_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fv_series_free(series: *mut FvSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Z-score screen with the given threshold and minimum history; writes a new
/// anomaly list to `out`. `min_changes` of 0 selects the default.
///
/// # Safety
/// `series` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fv_detect(
    series: *const FvSeries,
    z_threshold: f64,
    min_changes: usize,
    out: *mut *mut FvAnomalies,
) -> FvStatus {
    guard(|| {
        out_check(out)?;
        *out = ptr::null_mut();
        let series = ref_arg(series, "series")?;
        let mut config = DetectorConfig {
            z_threshold,
            ..DetectorConfig::default()
        };
        if min_changes > 0 {
            config.min_changes = min_changes;
        }
        let items = detect(&series.series, &config).map_err(|e| (FvStatus::DetectFailed, e.to_string()))?;
        *out = Box::into_raw(Box::new(FvAnomalies { items }));
        Ok(())
    })
}

/// # Safety
/// `anomalies` must be null or a live handle from [`fv_detect`].
#[no_mangle]
pub unsafe extern "C" fn fv_anomalies_len(anomalies: *const FvAnomalies) -> usize {
    anomalies.as_ref().map_or(0, |a| a.items.len())
}

/// Copies entry `index` (date order) into `out`.
///
/// # Safety
/// `anomalies` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fv_anomalies_get(
    anomalies: *const FvAnomalies,
    index: usize,
    out: *mut FvAnomaly,
) -> FvStatus {
    guard(|| {
        out_check(out)?;
        let anomalies = ref_arg(anomalies, "anomalies")?;
        let a = anomalies.items.get(index).ok_or_else(|| {
            (
                FvStatus::OutOfRange,
                format!("index {index} out of range for {} anomalies", anomalies.items.len()),
            )
        })?;
        let value = a.observed_value.and_then(|v| v.to_f64());
        *out = FvAnomaly {
            year: a.date.year(),
            month: a.date.month(),
            day: a.date.day(),
            kind: match a.kind {
                AnomalyKind::Outlier => FvAnomalyKind::Outlier,
                AnomalyKind::Missing => FvAnomalyKind::Missing,
            },
            has_value: value.is_some(),
            value: value.unwrap_or(f64::NAN),
            has_z_score: a.z_score.is_some(),
            z_score: a.z_score.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// # Safety
/// `anomalies` must be null or a handle from [`fv_detect`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fv_anomalies_free(anomalies: *mut FvAnomalies) {
    if !anomalies.is_null() {
        drop(Box::from_raw(anomalies));
    }
}

/// Builds the validation payload as JSON:
/// `{"data": {"<series id>": {"<date>": value or null}}, "metadata": {...}}`.
///
/// # Safety
/// Handles must be live; `out_json` must be writable. Free the result with
/// [`fv_string_free`].
#[no_mangle]
pub unsafe extern "C" fn fv_payload_build(
    series: *const FvSeries,
    anomalies: *const FvAnomalies,
    out_json: *mut *mut c_char,
) -> FvStatus {
    guard(|| {
        out_check(out_json)?;
        *out_json = ptr::null_mut();
        let series = ref_arg(series, "series")?;
        let anomalies = ref_arg(anomalies, "anomalies")?;
        let metadata = series
            .metadata
            .as_ref()
            .ok_or_else(|| (FvStatus::InvalidInput, "series was loaded without metadata".to_string()))?;
        let payload = build_payload(series.series.series_id(), &anomalies.items, metadata)
            .map_err(|e| (FvStatus::PayloadFailed, e.to_string()))?;
        let json = serde_json::to_string(&payload).map_err(|e| (FvStatus::PayloadFailed, e.to_string()))?;
        *out_json = into_c_string(json)?;
        Ok(())
    })
}

/// Parses an expert reply for `question_count` questions. Writes JSON
/// `{"shape": "per_item" or "global", "entries": {"1": {"verdict": "Correct", ...}}}`.
///
/// # Safety
/// `raw` must be a NUL-terminated string; `out_json` must be writable. Free
/// the result with [`fv_string_free`].
#[no_mangle]
pub unsafe extern "C" fn fv_parse_verdicts(
    raw: *const c_char,
    question_count: usize,
    out_json: *mut *mut c_char,
) -> FvStatus {
    guard(|| {
        out_check(out_json)?;
        *out_json = ptr::null_mut();
        let raw = str_arg(raw, "raw")?;
        let parsed = parse_verdicts(raw, question_count).map_err(|e| (FvStatus::VerdictFailed, e.to_string()))?;
        let json = serde_json::to_string(&parsed).map_err(|e| (FvStatus::VerdictFailed, e.to_string()))?;
        *out_json = into_c_string(json)?;
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next `fv_*` call on the same thread.
#[no_mangle]
pub extern "C" fn fv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn fv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
