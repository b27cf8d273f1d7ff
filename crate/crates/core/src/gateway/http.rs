//! OpenAI-compatible `POST {base_url}/chat/completions` client.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatMessage, GatewayConfig, GatewayError};

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpBackend {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self {
            agent,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
        }
    }

    pub fn from_config(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let base_url = config
            .base_url
            .as_deref()
            .ok_or_else(|| GatewayError::Config("http backend needs base_url".into()))?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        Ok(Self::new(
            base_url,
            &config.model,
            api_key,
            Duration::from_secs(config.timeout_secs),
        ))
    }
}

fn classify_status(status: u16) -> bool {
    status == 429 || status >= 500
}

impl ChatBackend for HttpBackend {
    fn identity(&self) -> String {
        format!("http:{} model={}", self.endpoint, self.model)
    }

    fn send(&self, messages: &[ChatMessage], _role_tag: &str, temperature: f64) -> Result<String, BackendError> {
        let body = CompletionRequest {
            model: &self.model,
            messages,
            temperature,
        };
        let mut request = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let response = match request.send_json(&body) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, response)) => {
                let body = response.into_string().unwrap_or_default();
                let error = GatewayError::Status { status, body };
                return Err(if classify_status(status) {
                    BackendError::transient(error)
                } else {
                    BackendError::fatal(error)
                });
            }
            Err(ureq::Error::Transport(t)) => {
                return Err(BackendError::transient(GatewayError::Transport {
                    attempts: 1,
                    message: t.to_string(),
                }))
            }
        };
        let parsed: CompletionResponse = response
            .into_json()
            .map_err(|e| BackendError::fatal(GatewayError::BadResponse(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::fatal(GatewayError::BadResponse("no message content in choices".into())))
    }
}
