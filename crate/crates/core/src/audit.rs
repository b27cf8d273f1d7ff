//! Where agent exchanges, tool calls and stage outputs are reported.

use std::sync::Mutex;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("run sealed")]
    Sealed,
    #[error("audit write failed: {0}")]
    Write(String),
}

/// Stage tags used on audit events.
pub mod tags {
    pub const GATEWAY_PREFIX: &str = "gateway.";
    pub const PROVIDER_PREFIX: &str = "provider.";
    pub const STAGE_PREFIX: &str = "stage.";

    pub const PROVIDER_SEARCH: &str = "provider.search";
    pub const PROVIDER_FETCH_CLOSES: &str = "provider.fetch_closes";
    pub const PROVIDER_KNOWLEDGE: &str = "provider.retrieve_knowledge";

    pub const STAGE_RUN_START: &str = "stage.run_start";
    pub const STAGE_DETECT: &str = "stage.detect";
    pub const STAGE_PAYLOAD: &str = "stage.payload";
    pub const STAGE_QUESTIONS: &str = "stage.questions";
    pub const STAGE_FINDINGS: &str = "stage.findings";
    pub const STAGE_SUMMARY: &str = "stage.summary";
    pub const STAGE_DELIBERATION: &str = "stage.deliberation";
    pub const STAGE_REPORT: &str = "stage.report";
    pub const STAGE_ERROR: &str = "stage.error";

    pub fn gateway(role_tag: &str) -> String {
        format!("{GATEWAY_PREFIX}{role_tag}")
    }
}

/// Append-only event sink. Implementations assign sequence numbers.
pub trait AuditSink: Send + Sync {
    fn record(&self, stage: &str, payload: Value) -> Result<u64, AuditError>;
}

/// Discards everything; sequence numbers still advance.
#[derive(Debug, Default)]
pub struct NullSink {
    next: Mutex<u64>,
}

impl AuditSink for NullSink {
    fn record(&self, _stage: &str, _payload: Value) -> Result<u64, AuditError> {
        let mut next = self.next.lock().expect("null sink lock");
        *next += 1;
        Ok(*next)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEvent {
    pub sequence: u64,
    pub stage: String,
    pub payload: Value,
}

/// Keeps events in memory. Mostly for tests.
#[derive(Debug, Default)]
pub struct MemorySink {
    events: Mutex<Vec<MemoryEvent>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<MemoryEvent> {
        self.events.lock().expect("memory sink lock").clone()
    }

    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.events
            .lock()
            .expect("memory sink lock")
            .iter()
            .filter(|e| e.stage.starts_with(prefix))
            .count()
    }
}

impl AuditSink for MemorySink {
    fn record(&self, stage: &str, payload: Value) -> Result<u64, AuditError> {
        let mut events = self.events.lock().expect("memory sink lock");
        let sequence = events.len() as u64 + 1;
        events.push(MemoryEvent {
            sequence,
            stage: stage.to_string(),
            payload,
        });
        Ok(sequence)
    }
}

/// Holds events back until [`BufferedSink::flush_into`] forwards them in
/// recording order. Lets concurrent workers each keep a private log that is
/// merged deterministically afterwards. Returned sequence numbers are local.
#[derive(Debug, Default)]
pub struct BufferedSink {
    events: Mutex<Vec<(String, Value)>>,
}

impl BufferedSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.lock().expect("buffered sink lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flush_into(&self, sink: &dyn AuditSink) -> Result<(), AuditError> {
        let events = std::mem::take(&mut *self.events.lock().expect("buffered sink lock"));
        for (stage, payload) in events {
            sink.record(&stage, payload)?;
        }
        Ok(())
    }
}

impl AuditSink for BufferedSink {
    fn record(&self, stage: &str, payload: Value) -> Result<u64, AuditError> {
        let mut events = self.events.lock().expect("buffered sink lock");
        events.push((stage.to_string(), payload));
        Ok(events.len() as u64)
    }
}
