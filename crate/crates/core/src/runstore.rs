//! On-disk audit trail: one directory per run holding `manifest.json` and one
//! JSON file per event, named by zero-padded sequence number.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use chrono::{DateTime, SecondsFormat, Utc};
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::audit::{AuditError, AuditSink};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REDACTED: &str = "[REDACTED]";
const SEQ_WIDTH: usize = 6;

#[derive(Debug, Error)]
pub enum RunStoreError {
    #[error("run `{0}` not found")]
    UnknownRun(String),
    #[error("run `{0}` already exists")]
    RunExists(String),
    #[error("run `{0}` is not sealed")]
    NotSealed(String),
    #[error("run sealed")]
    Sealed,
    #[error("sequence gap at {0}")]
    SequenceGap(u64),
    #[error("corrupt event {sequence}: {message}")]
    CorruptEvent { sequence: u64, message: String },
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("invalid run id `{0}`")]
    InvalidRunId(String),
    #[error("run store i/o at {path}: {message}")]
    Io { path: String, message: String },
}

impl RunStoreError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Source of timestamps. `Fixed` makes run ids and event times reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    pub fn deterministic() -> Self {
        Self::Fixed(DateTime::UNIX_EPOCH)
    }

    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Self::System => Utc::now(),
            Self::Fixed(t) => *t,
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Self::Fixed(_))
    }
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// `<UTC timestamp>-<suffix>`. The suffix is random unless the clock is
/// fixed, in which case it is taken from the config digest.
pub fn new_run_id(clock: &Clock, config_digest: &str) -> String {
    let stamp = clock.now().format("%Y%m%dT%H%M%SZ");
    let suffix = if clock.is_fixed() {
        config_digest.chars().take(8).collect::<String>()
    } else {
        format!("{:08x}", rand::thread_rng().gen::<u32>())
    };
    format!("{stamp}-{suffix}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub config_digest: String,
    pub started_at: String,
    #[serde(default)]
    pub ended_at: Option<String>,
    #[serde(default)]
    pub outcome: Option<String>,
    pub sealed: bool,
    pub event_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEvent {
    pub sequence: u64,
    pub stage: String,
    pub recorded_at: String,
    pub payload: Value,
}

/// Replaces registered secret values, bearer tokens and `sk-` style keys.
#[derive(Debug, Clone, Default)]
pub struct Redactor {
    secrets: Vec<String>,
}

fn token_patterns() -> &'static [(Regex, &'static str)] {
    static PATTERNS: OnceLock<Vec<(Regex, &'static str)>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        vec![
            (Regex::new(r"(?i)bearer\s+[A-Za-z0-9._~+/=\-]+").expect("valid regex"), "Bearer [REDACTED]"),
            (Regex::new(r"\bsk-[A-Za-z0-9_\-]{8,}").expect("valid regex"), REDACTED),
        ]
    })
}

impl Redactor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Values shorter than four characters are ignored.
    pub fn with_secret(mut self, secret: &str) -> Self {
        if secret.len() >= 4 && !self.secrets.iter().any(|s| s == secret) {
            self.secrets.push(secret.to_string());
            // longest first so overlapping secrets are fully covered
            self.secrets.sort_by_key(|s| std::cmp::Reverse(s.len()));
        }
        self
    }

    pub fn redact_str(&self, text: &str) -> String {
        let mut out = text.to_string();
        for secret in &self.secrets {
            if out.contains(secret.as_str()) {
                out = out.replace(secret.as_str(), REDACTED);
            }
        }
        for (re, replacement) in token_patterns() {
            if re.is_match(&out) {
                out = re.replace_all(&out, *replacement).into_owned();
            }
        }
        out
    }

    pub fn redact(&self, value: Value) -> Value {
        match value {
            Value::String(s) => Value::String(self.redact_str(&s)),
            Value::Array(items) => Value::Array(items.into_iter().map(|v| self.redact(v)).collect()),
            Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, self.redact(v))).collect()),
            other => other,
        }
    }
}

fn write_durably(path: &Path, bytes: &[u8]) -> Result<(), RunStoreError> {
    let tmp = path.with_extension("tmp");
    let mut file = File::create(&tmp).map_err(|e| RunStoreError::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| RunStoreError::io(&tmp, e))?;
    file.sync_all().map_err(|e| RunStoreError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| RunStoreError::io(path, e))?;
    if let Some(parent) = path.parent() {
        // directory fsync is not supported everywhere; the rename is what matters
        if let Ok(dir) = File::open(parent) {
            let _ = dir.sync_all();
        }
    }
    Ok(())
}

fn to_pretty(value: &impl Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

fn event_file_name(sequence: u64) -> String {
    format!("{sequence:0SEQ_WIDTH$}.json")
}

fn validate_run_id(run_id: &str) -> Result<(), RunStoreError> {
    let ok = !run_id.is_empty()
        && run_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !run_id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(RunStoreError::InvalidRunId(run_id.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    pub fn create_run(
        &self,
        run_id: &str,
        config_digest: &str,
        clock: Clock,
        redactor: Redactor,
    ) -> Result<RunHandle, RunStoreError> {
        validate_run_id(run_id)?;
        fs::create_dir_all(&self.root).map_err(|e| RunStoreError::io(&self.root, e))?;
        let dir = self.run_dir(run_id);
        match fs::create_dir(&dir) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(RunStoreError::RunExists(run_id.to_string()))
            }
            Err(e) => return Err(RunStoreError::io(&dir, e)),
        }
        let manifest = Manifest {
            run_id: run_id.to_string(),
            config_digest: config_digest.to_string(),
            started_at: timestamp(clock.now()),
            ended_at: None,
            outcome: None,
            sealed: false,
            event_count: 0,
        };
        write_durably(&dir.join(MANIFEST_FILE), &to_pretty(&manifest))?;
        Ok(RunHandle {
            dir,
            clock,
            redactor,
            state: Mutex::new(manifest),
        })
    }

    pub fn load_manifest(&self, run_id: &str) -> Result<Manifest, RunStoreError> {
        validate_run_id(run_id).map_err(|_| RunStoreError::UnknownRun(run_id.to_string()))?;
        let path = self.run_dir(run_id).join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(RunStoreError::UnknownRun(run_id.to_string()));
        }
        let text = fs::read_to_string(&path).map_err(|e| RunStoreError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| RunStoreError::CorruptManifest(e.to_string()))
    }

    /// Manifest plus all events of a sealed run, checked for gaps.
    pub fn load_sealed(&self, run_id: &str) -> Result<(Manifest, Vec<StoredEvent>), RunStoreError> {
        let manifest = self.load_manifest(run_id)?;
        if !manifest.sealed {
            return Err(RunStoreError::NotSealed(run_id.to_string()));
        }
        let dir = self.run_dir(run_id);
        let mut present = std::collections::BTreeSet::new();
        for entry in fs::read_dir(&dir).map_err(|e| RunStoreError::io(&dir, e))? {
            let entry = entry.map_err(|e| RunStoreError::io(&dir, e))?;
            let name = entry.file_name();
            let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".json")) else { continue };
            if let Ok(seq) = stem.parse::<u64>() {
                present.insert(seq);
            }
        }
        let last = present.iter().next_back().copied().unwrap_or(0).max(manifest.event_count);
        let mut events = Vec::with_capacity(last as usize);
        for sequence in 1..=last {
            if !present.contains(&sequence) {
                return Err(RunStoreError::SequenceGap(sequence));
            }
            let path = dir.join(event_file_name(sequence));
            let text = fs::read_to_string(&path).map_err(|e| RunStoreError::io(&path, e))?;
            let event: StoredEvent = serde_json::from_str(&text).map_err(|e| RunStoreError::CorruptEvent {
                sequence,
                message: e.to_string(),
            })?;
            if event.sequence != sequence {
                return Err(RunStoreError::CorruptEvent {
                    sequence,
                    message: format!("file holds sequence {}", event.sequence),
                });
            }
            events.push(event);
        }
        Ok((manifest, events))
    }
}

/// An open run. Implements [`AuditSink`]; safe to share across threads.
#[derive(Debug)]
pub struct RunHandle {
    dir: PathBuf,
    clock: Clock,
    redactor: Redactor,
    state: Mutex<Manifest>,
}

impl RunHandle {
    pub fn run_id(&self) -> String {
        self.state.lock().expect("run lock").run_id.clone()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    pub fn record_event(&self, stage: &str, payload: Value) -> Result<u64, RunStoreError> {
        let mut state = self.state.lock().expect("run lock");
        if state.sealed {
            return Err(RunStoreError::Sealed);
        }
        let sequence = state.event_count + 1;
        let event = StoredEvent {
            sequence,
            stage: stage.to_string(),
            recorded_at: timestamp(self.clock.now()),
            payload: self.redactor.redact(payload),
        };
        write_durably(&self.dir.join(event_file_name(sequence)), &to_pretty(&event))?;
        state.event_count = sequence;
        Ok(sequence)
    }

    /// Closes the run. Later `record_event` calls fail with "run sealed".
    pub fn seal(&self, outcome: &str) -> Result<Manifest, RunStoreError> {
        let mut state = self.state.lock().expect("run lock");
        if state.sealed {
            return Err(RunStoreError::Sealed);
        }
        let mut next = state.clone();
        next.sealed = true;
        next.outcome = Some(outcome.to_string());
        next.ended_at = Some(timestamp(self.clock.now()));
        write_durably(&self.dir.join(MANIFEST_FILE), &to_pretty(&next))?;
        *state = next.clone();
        Ok(next)
    }
}

impl AuditSink for RunHandle {
    fn record(&self, stage: &str, payload: Value) -> Result<u64, AuditError> {
        self.record_event(stage, payload).map_err(|e| match e {
            RunStoreError::Sealed => AuditError::Sealed,
            other => AuditError::Write(other.to_string()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::Arc;

    fn open(root: &Path, id: &str) -> RunHandle {
        RunStore::new(root)
            .create_run(id, "digest", Clock::deterministic(), Redactor::new())
            .unwrap()
    }

    #[test]
    fn first_event_is_one_and_sealing_blocks_writes() {
        let dir = tempfile::tempdir().unwrap();
        let run = open(dir.path(), "r1");
        assert_eq!(run.record_event("stage.detect", json!({"n": 1})).unwrap(), 1);
        assert_eq!(run.record_event("stage.payload", json!({})).unwrap(), 2);
        run.seal("endorsed").unwrap();
        let err = run.record_event("stage.report", json!({})).unwrap_err();
        assert_eq!(err.to_string(), "run sealed");
        assert!(dir.path().join("r1/000001.json").is_file());
    }

    #[test]
    fn concurrent_writers_get_distinct_sequences() {
        let dir = tempfile::tempdir().unwrap();
        let run = Arc::new(open(dir.path(), "r2"));
        let mut seqs: Vec<u64> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|i| {
                    let run = run.clone();
                    s.spawn(move || run.record_event("provider.search", json!({ "i": i })).unwrap())
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        seqs.sort();
        assert_eq!(seqs, (1..=8).collect::<Vec<_>>());
        run.seal("endorsed").unwrap();
        let (_, events) = RunStore::new(dir.path()).load_sealed("r2").unwrap();
        assert_eq!(events.len(), 8);
    }

    #[test]
    fn gap_detected() {
        let dir = tempfile::tempdir().unwrap();
        let run = open(dir.path(), "r3");
        for _ in 0..4 {
            run.record_event("stage.detect", json!({})).unwrap();
        }
        run.seal("endorsed").unwrap();
        fs::remove_file(dir.path().join("r3/000003.json")).unwrap();
        let err = RunStore::new(dir.path()).load_sealed("r3").unwrap_err();
        assert_eq!(err.to_string(), "sequence gap at 3");
    }

    #[test]
    fn missing_final_event_detected_via_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let run = open(dir.path(), "r4");
        run.record_event("a", json!({})).unwrap();
        run.record_event("b", json!({})).unwrap();
        run.seal("endorsed").unwrap();
        fs::remove_file(dir.path().join("r4/000002.json")).unwrap();
        assert!(matches!(
            RunStore::new(dir.path()).load_sealed("r4"),
            Err(RunStoreError::SequenceGap(2))
        ));
    }

    #[test]
    fn unknown_and_unsealed_runs() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        assert!(matches!(store.load_sealed("nope"), Err(RunStoreError::UnknownRun(_))));
        assert!(matches!(store.load_sealed("../etc"), Err(RunStoreError::UnknownRun(_))));
        let _run = open(dir.path(), "open");
        assert!(matches!(store.load_sealed("open"), Err(RunStoreError::NotSealed(_))));
        assert!(matches!(
            store.create_run("open", "d", Clock::System, Redactor::new()),
            Err(RunStoreError::RunExists(_))
        ));
    }

    #[test]
    fn secrets_redacted() {
        let r = Redactor::new().with_secret("hunter2-key");
        let v = r.redact(json!({
            "headers": ["Authorization: Bearer abc.def-123"],
            "note": "key hunter2-key and sk-ABCDEFGH12345678 used",
            "n": 3
        }));
        let text = v.to_string();
        assert!(!text.contains("hunter2-key"));
        assert!(!text.contains("abc.def-123"));
        assert!(!text.contains("sk-ABCDEFGH"));
        assert!(text.contains(REDACTED));
        assert_eq!(v["n"], 3);
    }

    #[test]
    fn deterministic_run_id() {
        let clock = Clock::deterministic();
        assert_eq!(new_run_id(&clock, "0123456789abcdef"), "19700101T000000Z-01234567");
        let live = new_run_id(&Clock::System, "x");
        assert_eq!(live.len(), "19700101T000000Z-".len() + 8);
    }
}
