#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use chrono::{Duration, NaiveDate};
use finval::config::AppConfig;
use finval::series::{DailySeries, Observation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::prelude::{FromPrimitive, ToPrimitive};
use rust_decimal::Decimal;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn demo_config() -> PathBuf {
    fixture("demo/config.json")
}

pub fn script(name: &str) -> PathBuf {
    fixture(&format!("demo/{name}_script.json"))
}

/// Demo config with the run root moved under `run_root` and the given mock script.
pub fn demo_app_config(run_root: &Path, script_name: &str) -> AppConfig {
    let mut config = AppConfig::load(&demo_config()).expect("demo config loads");
    config.output.run_root = run_root.to_path_buf();
    config.gateway.mock_script = Some(script(script_name));
    config
}

/// Runs the CLI in-process; returns (exit code, stdout, stderr).
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("finval").chain(args.iter().copied());
    let code = finval::cli::run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn only_run_dir(root: &Path) -> PathBuf {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    assert_eq!(dirs.len(), 1, "expected exactly one run under {}", root.display());
    dirs.pop().unwrap()
}

/// A random walk of two-decimal prices with injected spikes and gaps.
pub struct GeneratedSeries {
    pub series: DailySeries,
    pub spikes: Vec<NaiveDate>,
}

pub fn random_series(seed: u64) -> GeneratedSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.gen_range(50..=500);
    let start = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
    let spike_count = rng.gen_range(1..=3);
    let spike_at: Vec<usize> = (0..spike_count).map(|_| rng.gen_range(5..len)).collect();
    let gap_count = rng.gen_range(0..=2);
    let gap_at: Vec<usize> = (0..gap_count).map(|_| rng.gen_range(1..len)).collect();

    let mut price = rng.gen_range(20.0..2000.0_f64);
    let mut observations = Vec::with_capacity(len);
    let mut spikes = Vec::new();
    for i in 0..len {
        let date = start + Duration::days(i as i64);
        if i > 0 {
            let mut step: f64 = (0..4).map(|_| rng.gen_range(-0.01..0.01)).sum();
            if spike_at.contains(&i) {
                let size = rng.gen_range(0.15..0.30);
                step = if rng.gen_bool(0.5) { size } else { -size };
                spikes.push(date);
            }
            price *= 1.0 + step;
        }
        let value = Decimal::from_f64(price).unwrap().round_dp(2).max(Decimal::new(1, 2));
        let value = (!gap_at.contains(&i)).then_some(value);
        observations.push(Observation::new(date, value));
    }
    GeneratedSeries {
        series: DailySeries::new(format!("gen{seed}"), observations).unwrap(),
        spikes,
    }
}

/// Brute-force reference: changes in f64 straight from the prices, two-pass
/// mean and sample standard deviation, inclusive threshold.
pub fn oracle_zscores(series: &DailySeries) -> BTreeMap<NaiveDate, f64> {
    let obs = series.observations();
    let mut changes = Vec::new();
    for w in obs.windows(2) {
        if let (Some(a), Some(b)) = (w[0].value, w[1].value) {
            let (a, b) = (a.to_f64().unwrap(), b.to_f64().unwrap());
            changes.push((w[1].date, 100.0 * (b - a) / a));
        }
    }
    let n = changes.len() as f64;
    let mean = changes.iter().map(|c| c.1).sum::<f64>() / n;
    let var = changes.iter().map(|c| (c.1 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    changes.into_iter().map(|(d, x)| (d, (x - mean) / sd)).collect()
}

pub fn oracle_flags(series: &DailySeries, threshold: f64) -> BTreeMap<NaiveDate, f64> {
    oracle_zscores(series)
        .into_iter()
        .filter(|(_, z)| z.abs() >= threshold)
        .collect()
}

#[derive(Debug, Clone)]
pub struct StubRequest {
    pub method: String,
    pub path: String,
    pub headers: BTreeMap<String, String>,
    pub body: String,
}

/// Minimal HTTP/1.1 server answering queued responses, one per connection.
pub struct StubServer {
    pub base_url: String,
    requests: Arc<Mutex<Vec<StubRequest>>>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(responses: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = requests.clone();
        let mut queue: VecDeque<(u16, String)> = responses.into();
        let handle = std::thread::spawn(move || {
            while let Some((status, body)) = queue.pop_front() {
                let Ok((stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let mut parts = line.split_whitespace();
                let method = parts.next().unwrap_or_default().to_string();
                let path = parts.next().unwrap_or_default().to_string();
                let mut headers = BTreeMap::new();
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    let h = h.trim_end();
                    if h.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
                    }
                }
                let len: usize = headers.get("content-length").and_then(|v| v.parse().ok()).unwrap_or(0);
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                seen.lock().unwrap().push(StubRequest {
                    method,
                    path,
                    headers,
                    body: String::from_utf8_lossy(&buf).into_owned(),
                });
                let mut stream = stream;
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        Self {
            base_url,
            requests,
            handle: Some(handle),
        }
    }

    pub fn requests(&self) -> Vec<StubRequest> {
        self.requests.lock().unwrap().clone()
    }

    /// Waits until every queued response has been served.
    pub fn finish(mut self) -> Vec<StubRequest> {
        if let Some(h) = self.handle.take() {
            h.join().unwrap();
        }
        self.requests()
    }
}

const TOKENS: [&str; 3] = ["Correct", "Incorrect", "Uncertain"];

fn token_variant(rng: &mut ChaCha8Rng) -> String {
    let t = TOKENS[rng.gen_range(0..3)];
    let t = match rng.gen_range(0..3) {
        0 => t.to_string(),
        1 => t.to_lowercase(),
        _ => t.to_uppercase(),
    };
    match rng.gen_range(0..4) {
        0 => format!("**{t}**:"),
        1 => format!("{t}:"),
        2 => format!("{t} -"),
        _ => format!("{t}."),
    }
}

const FILLER: [&str; 6] = [
    "the value matches the archive",
    "no source found for this date",
    "see the exchange notice",
    "possibly a vendor error",
    "",
    "1987-10-19 was a Monday",
];

/// A reply in one of the two declared shapes, with some items malformed or
/// omitted. Returns the reply and the question count it answers.
pub fn random_verdict_reply(seed: u64) -> (String, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=8);
    let global = rng.gen_bool(0.4);
    let mut lines = Vec::new();
    if global {
        lines.push(format!("{} the provided data confirms the following:", token_variant(&mut rng)));
    } else if rng.gen_bool(0.3) {
        lines.push("Here are my findings.".to_string());
    }
    let forced = rng.gen_range(1..=n);
    for i in 1..=n {
        let filler = FILLER[rng.gen_range(0..FILLER.len())];
        let roll = rng.gen_range(0..10);
        if !global && i == forced {
            lines.push(format!("{i}. {} {filler}", token_variant(&mut rng)));
            continue;
        }
        match roll {
            0 => {}
            1 | 2 => lines.push(format!("{i}. {filler}")),
            3 => lines.push(format!("{i}) maybe? {filler}")),
            _ => lines.push(format!("{i}. {} {filler}", token_variant(&mut rng))),
        }
        if rng.gen_bool(0.2) {
            lines.push(format!("   - supporting note for item {i}"));
        }
    }
    if rng.gen_bool(0.2) {
        lines.push(String::new());
        lines.push("Overall the data looks plausible.".to_string());
    }
    (lines.join("\n"), n)
}
