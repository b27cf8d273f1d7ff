//! Chat-completion gateway shared by every agent.
//!
//! A [`Gateway`] wraps one [`ChatBackend`] (OpenAI-compatible HTTP or a
//! scripted mock), validates conversations, retries transient failures and
//! writes exactly one audit event per logical call.

mod http;
mod mock;
pub mod template;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::audit::{tags, AuditError, AuditSink};

pub use http::HttpBackend;
pub use mock::{MockBackend, MockEntry, MockScript};
pub use template::{TemplateError, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "http" => Ok(Self::Http),
            "mock" => Ok(Self::Mock),
            other => Err(format!("unknown backend `{other}` (expected http or mock)")),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Http => "http",
            Self::Mock => "mock",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub backend: BackendKind,
    pub base_url: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Delay before the first retry; doubles per attempt.
    pub retry_backoff_ms: u64,
    pub mock_script: Option<PathBuf>,
    pub prompt_dir: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            base_url: None,
            model: "gpt-4o".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            temperature: 0.0,
            timeout_secs: 120,
            max_retries: 2,
            retry_backoff_ms: 500,
            mock_script: None,
            prompt_dir: None,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.timeout_secs == 0 {
            return Err(GatewayError::Config("timeout must be > 0".into()));
        }
        match self.backend {
            BackendKind::Http if self.base_url.is_none() => {
                Err(GatewayError::Config("http backend needs base_url".into()))
            }
            BackendKind::Mock if self.mock_script.is_none() => {
                Err(GatewayError::Config("mock backend needs mock_script".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid conversation: {0}")]
    Precondition(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response shape: {0}")]
    BadResponse(String),
    #[error("mock script exhausted for role `{0}`")]
    ScriptExhausted(String),
    #[error("invalid mock script: {0}")]
    Script(String),
    #[error("gateway config: {0}")]
    Config(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("audit failure: {0}")]
    Audit(#[from] AuditError),
}

/// Error from one backend attempt.
#[derive(Debug)]
pub struct BackendError {
    pub error: GatewayError,
    pub retryable: bool,
}

impl BackendError {
    pub fn fatal(error: GatewayError) -> Self {
        Self {
            error,
            retryable: false,
        }
    }

    pub fn transient(error: GatewayError) -> Self {
        Self {
            error,
            retryable: true,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    /// Short description for provenance, e.g. `mock:script.json`.
    fn identity(&self) -> String;
    fn send(
        &self,
        messages: &[ChatMessage],
        role_tag: &str,
        temperature: f64,
    ) -> Result<String, BackendError>;
}

#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    audit: Arc<dyn AuditSink>,
    templates: Arc<TemplateSet>,
    temperature: f64,
    max_retries: u32,
    retry_backoff: Duration,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.identity())
            .field("temperature", &self.temperature)
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, audit: Arc<dyn AuditSink>) -> Self {
        Self {
            backend,
            audit,
            templates: Arc::new(TemplateSet::builtin()),
            temperature: 0.0,
            max_retries: 0,
            retry_backoff: Duration::from_millis(0),
        }
    }

    pub fn from_config(config: &GatewayConfig, audit: Arc<dyn AuditSink>) -> Result<Self, GatewayError> {
        let backend = Self::backend_from_config(config)?;
        let templates = Self::templates_from_config(config)?;
        Ok(Self::from_parts(config, backend, templates, audit))
    }

    pub fn backend_from_config(config: &GatewayConfig) -> Result<Arc<dyn ChatBackend>, GatewayError> {
        config.validate()?;
        Ok(match config.backend {
            BackendKind::Mock => {
                let path = config.mock_script.as_ref().expect("validated");
                Arc::new(MockBackend::from_file(path)?)
            }
            BackendKind::Http => Arc::new(HttpBackend::from_config(config)?),
        })
    }

    pub fn templates_from_config(config: &GatewayConfig) -> Result<TemplateSet, GatewayError> {
        Ok(match &config.prompt_dir {
            Some(dir) => TemplateSet::with_override_dir(dir)?,
            None => TemplateSet::builtin(),
        })
    }

    /// Assembles a gateway from an already built backend and templates.
    pub fn from_parts(
        config: &GatewayConfig,
        backend: Arc<dyn ChatBackend>,
        templates: TemplateSet,
        audit: Arc<dyn AuditSink>,
    ) -> Self {
        Self::new(backend, audit)
            .with_templates(templates)
            .with_temperature(config.temperature)
            .with_retries(config.max_retries, Duration::from_millis(config.retry_backoff_ms))
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = Arc::new(templates);
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_retries(mut self, max_retries: u32, backoff: Duration) -> Self {
        self.max_retries = max_retries;
        self.retry_backoff = backoff;
        self
    }

    /// Same gateway, recording to a different sink.
    pub fn with_audit(mut self, audit: Arc<dyn AuditSink>) -> Self {
        self.audit = audit;
        self
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn audit(&self) -> &Arc<dyn AuditSink> {
        &self.audit
    }

    pub fn backend_identity(&self) -> String {
        self.backend.identity()
    }

    fn check_conversation(conversation: &[ChatMessage]) -> Result<(), GatewayError> {
        let first = conversation
            .first()
            .ok_or_else(|| GatewayError::Precondition("empty conversation".into()))?;
        if first.role != Role::System {
            return Err(GatewayError::Precondition(
                "conversation must start with a system message".into(),
            ));
        }
        if conversation.iter().filter(|m| m.role == Role::System).count() != 1 {
            return Err(GatewayError::Precondition(
                "conversation must contain exactly one system message".into(),
            ));
        }
        if let Some(m) = conversation
            .iter()
            .find(|m| m.role != Role::Assistant && m.content.trim().is_empty())
        {
            return Err(GatewayError::Precondition(format!(
                "{:?} message has empty content",
                m.role
            )));
        }
        Ok(())
    }

    /// One logical chat completion: validated, retried, audited once.
    pub fn complete(&self, conversation: &[ChatMessage], role_tag: &str) -> Result<ChatMessage, GatewayError> {
        let mut attempts = 0u32;
        let result = match Self::check_conversation(conversation) {
            Err(e) => Err(e),
            Ok(()) => loop {
                attempts += 1;
                match self.backend.send(conversation, role_tag, self.temperature) {
                    Ok(text) => break Ok(text),
                    Err(e) if e.retryable && attempts <= self.max_retries => {
                        log::warn!("{role_tag}: attempt {attempts} failed: {}", e.error);
                        let delay = self.retry_backoff * 2u32.saturating_pow(attempts - 1);
                        if !delay.is_zero() {
                            std::thread::sleep(delay);
                        }
                    }
                    Err(e) => {
                        break Err(match e.error {
                            GatewayError::Transport { message, .. } => {
                                GatewayError::Transport { attempts, message }
                            }
                            other => other,
                        })
                    }
                }
            },
        };

        let event = json!({
            "role_tag": role_tag,
            "backend": self.backend.identity(),
            "temperature": self.temperature,
            "attempts": attempts,
            "request": conversation,
            "response": result.as_ref().ok(),
            "error": result.as_ref().err().map(|e| e.to_string()),
        });
        self.audit.record(&tags::gateway(role_tag), event)?;
        result.map(ChatMessage::assistant)
    }

    /// Convenience: system + single user message.
    pub fn ask(&self, system: &str, user: &str, role_tag: &str) -> Result<String, GatewayError> {
        let conversation = [ChatMessage::system(system), ChatMessage::user(user)];
        self.complete(&conversation, role_tag).map(|m| m.content)
    }
}
