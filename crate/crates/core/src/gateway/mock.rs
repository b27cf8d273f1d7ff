use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatMessage, GatewayError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEntry {
    pub role_tag: String,
    pub response_text: String,
}

/// Scripted replies, consumed in order per role tag.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockScript {
    pub entries: Vec<MockEntry>,
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, role_tag: &str, response_text: &str) -> Self {
        self.entries.push(MockEntry {
            role_tag: role_tag.to_string(),
            response_text: response_text.to_string(),
        });
        self
    }

    pub fn from_json_str(text: &str) -> Result<Self, GatewayError> {
        serde_json::from_str(text).map_err(|e| GatewayError::Script(e.to_string()))
    }

    pub fn count_for(&self, role_tag: &str) -> usize {
        self.entries.iter().filter(|e| e.role_tag == role_tag).count()
    }
}

/// Replays a [`MockScript`]. Running past the end of a role's entries is an
/// error; entries are never reused.
#[derive(Debug)]
pub struct MockBackend {
    label: String,
    queues: Mutex<BTreeMap<String, VecDeque<String>>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self::with_label(script, "inline")
    }

    pub fn with_label(script: MockScript, label: &str) -> Self {
        let mut queues: BTreeMap<String, VecDeque<String>> = BTreeMap::new();
        for entry in script.entries {
            queues
                .entry(entry.role_tag)
                .or_default()
                .push_back(entry.response_text);
        }
        Self {
            label: label.to_string(),
            queues: Mutex::new(queues),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path)
            .map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))?;
        let script = MockScript::from_json_str(&text)
            .map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))?;
        let label = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("script");
        Ok(Self::with_label(script, label))
    }

    pub fn remaining(&self, role_tag: &str) -> usize {
        self.queues
            .lock()
            .expect("mock lock")
            .get(role_tag)
            .map_or(0, VecDeque::len)
    }
}

impl ChatBackend for MockBackend {
    fn identity(&self) -> String {
        format!("mock:{}", self.label)
    }

    fn send(&self, _messages: &[ChatMessage], role_tag: &str, _temperature: f64) -> Result<String, BackendError> {
        self.queues
            .lock()
            .expect("mock lock")
            .get_mut(role_tag)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| BackendError::fatal(GatewayError::ScriptExhausted(role_tag.to_string())))
    }
}
