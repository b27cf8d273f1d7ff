use std::path::PathBuf;
use std::process::Command;

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn finval(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_finval"))
        .args(args)
        .env_remove("FINVAL_CONFIG")
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn detect_prints_payload_json() {
    let series = fixture("spx/spx_daily.csv");
    let metadata = fixture("spx/metadata.json");
    let (code, out, err) = finval(&[
        "detect",
        "--series",
        series.to_str().unwrap(),
        "--metadata",
        metadata.to_str().unwrap(),
        "--threshold",
        "10",
    ]);
    assert_eq!(code, 0, "{err}");
    let payload: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(payload["data"].is_object());
}

#[test]
fn process_exit_codes() {
    // gap-free and smooth, so nothing is flagged
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("flat.csv");
    let mut csv = String::from("date,value\n");
    for i in 0..60 {
        csv.push_str(&format!("2001-{:02}-{:02},{}\n", 1 + i / 28, 1 + i % 28, 100 + i % 3));
    }
    std::fs::write(&series, csv).unwrap();
    let metadata = fixture("spx/metadata.json");
    let (code, out, _) = finval(&[
        "detect",
        "--series",
        series.to_str().unwrap(),
        "--metadata",
        metadata.to_str().unwrap(),
        "--threshold",
        "1000",
    ]);
    assert_eq!(code, 3);
    assert!(out.contains("no anomalies"));

    let (code, _, err) = finval(&["detect", "--series", "/nonexistent.csv", "--metadata", "/nonexistent.json"]);
    assert_eq!(code, 2, "{err}");

    let (code, _, _) = finval(&["no-such-command"]);
    assert_eq!(code, 2);
}
