use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use finval_ffi::*;
use serde_json::Value;

fn fixture(rel: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = fv_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

unsafe fn take_string(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    fv_string_free(p);
    s
}

fn load_spx(with_metadata: bool) -> *mut FvSeries {
    let series = fixture("spx/spx_daily.csv");
    let meta = fixture("spx/metadata.json");
    let mut out = ptr::null_mut();
    let meta_ptr = if with_metadata { meta.as_ptr() } else { ptr::null() };
    let status = unsafe { fv_series_load(series.as_ptr(), meta_ptr, &mut out) };
    assert_eq!(status, FvStatus::Ok, "{}", if status == FvStatus::Ok { String::new() } else { last_error() });
    assert!(!out.is_null());
    out
}

#[test]
fn detect_and_build_payload() {
    let series = load_spx(true);
    unsafe {
        assert!(fv_series_len(series) > 1000);
        let mut anomalies = ptr::null_mut();
        assert_eq!(fv_detect(series, 10.0, 30, &mut anomalies), FvStatus::Ok);
        let n = fv_anomalies_len(anomalies);
        assert!(n > 0);

        let mut first = std::mem::zeroed::<FvAnomaly>();
        assert_eq!(fv_anomalies_get(anomalies, 0, &mut first), FvStatus::Ok);
        assert!(first.year >= 1900 && (1..=12).contains(&first.month));
        if first.kind == FvAnomalyKind::Outlier {
            assert!(first.has_z_score && first.z_score.abs() >= 10.0);
        }

        let mut bad = std::mem::zeroed::<FvAnomaly>();
        assert_eq!(fv_anomalies_get(anomalies, n, &mut bad), FvStatus::OutOfRange);
        assert!(last_error().contains("out of range"));

        let mut json = ptr::null_mut();
        assert_eq!(fv_payload_build(series, anomalies, &mut json), FvStatus::Ok);
        let payload: Value = serde_json::from_str(&take_string(json)).unwrap();
        let data = payload["data"].as_object().unwrap();
        assert_eq!(data.len(), 1);
        let (_, points) = data.iter().next().unwrap();
        assert_eq!(points.as_object().unwrap().len(), n);
        assert!(payload["metadata"]["TITLE"].is_string());

        fv_anomalies_free(anomalies);
        fv_series_free(series);
    }
}

#[test]
fn payload_requires_metadata() {
    let series = load_spx(false);
    unsafe {
        let mut anomalies = ptr::null_mut();
        assert_eq!(fv_detect(series, 10.0, 0, &mut anomalies), FvStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(fv_payload_build(series, anomalies, &mut json), FvStatus::InvalidInput);
        assert!(json.is_null());
        assert!(last_error().contains("metadata"));
        fv_anomalies_free(anomalies);
        fv_series_free(series);
    }
}

#[test]
fn null_and_bad_arguments() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(fv_series_load(ptr::null(), ptr::null(), &mut out), FvStatus::NullArgument);
        assert!(out.is_null());
        assert_eq!(fv_detect(ptr::null(), 3.0, 0, ptr::null_mut()), FvStatus::NullArgument);

        let missing = CString::new("/nonexistent/series.csv").unwrap();
        assert_eq!(fv_series_load(missing.as_ptr(), ptr::null(), &mut out), FvStatus::InvalidInput);
        assert!(!last_error().is_empty());

        let bytes = [0xffu8, 0xfe, 0];
        assert_eq!(fv_series_load(bytes.as_ptr().cast(), ptr::null(), &mut out), FvStatus::InvalidUtf8);

        // freeing null is a no-op
        fv_series_free(ptr::null_mut());
        fv_anomalies_free(ptr::null_mut());
        fv_string_free(ptr::null_mut());
        assert_eq!(fv_series_len(ptr::null()), 0);
    }
}

#[test]
fn error_message_clears_on_success() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(fv_series_load(ptr::null(), ptr::null(), &mut out), FvStatus::NullArgument);
        assert!(!fv_last_error_message().is_null());
        let series = load_spx(false);
        assert!(fv_last_error_message().is_null());
        fv_series_free(series);
    }
}

#[test]
fn parse_verdicts_to_json() {
    let raw = CString::new("1. Correct: matches the record\n2. Incorrect: wrong sign").unwrap();
    unsafe {
        let mut json = ptr::null_mut();
        assert_eq!(fv_parse_verdicts(raw.as_ptr(), 2, &mut json), FvStatus::Ok);
        let parsed: Value = serde_json::from_str(&take_string(json)).unwrap();
        assert_eq!(parsed["shape"], "per_item");
        assert_eq!(parsed["entries"]["1"]["verdict"], "Correct");
        assert_eq!(parsed["entries"]["2"]["verdict"], "Incorrect");

        let mut none = ptr::null_mut();
        assert_eq!(fv_parse_verdicts(raw.as_ptr(), 0, &mut none), FvStatus::VerdictFailed);
        assert!(none.is_null());
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(fv_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/finval.h");
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn header_declares_the_api() {
    let h = header();
    for name in [
        "fv_series_load",
        "fv_series_len",
        "fv_series_free",
        "fv_detect",
        "fv_anomalies_len",
        "fv_anomalies_get",
        "fv_anomalies_free",
        "fv_payload_build",
        "fv_parse_verdicts",
        "fv_last_error_message",
        "fv_string_free",
        "fv_version",
    ] {
        assert!(h.contains(&format!("{name}(")), "missing {name}");
    }
    assert!(h.contains("typedef struct FvSeries FvSeries;"));
    assert!(h.contains("FV_STATUS_OK = 0"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(cc.status.success());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/finval.h");
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&include)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
