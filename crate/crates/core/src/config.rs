//! Application configuration: one JSON document with `${VAR}` interpolation.
//!
//! Relative paths in the file are resolved against the file's directory.
//! Command-line flags (and their `FINVAL_*` environment fallbacks) are applied
//! on top by the CLI.

use std::path::{Component, Path, PathBuf};
use std::sync::OnceLock;
use std::{env, fs};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::deliberation::PanelConfig;
use crate::detector::DetectorConfig;
use crate::experts::ExpertSettings;
use crate::gateway::{BackendKind, GatewayConfig};
use crate::providers::{ProviderBackend, DEFAULT_EXCERPT_CHARS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("environment variable {0} referenced in config is not set")]
    MissingEnv(String),
    #[error("{field}: path {path} does not exist")]
    MissingPath { field: String, path: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputsConfig {
    pub series: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub series_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProvidersConfig {
    pub backend: ProviderBackend,
    pub search_corpus: Option<PathBuf>,
    pub closes: Option<PathBuf>,
    pub knowledge_dir: Option<PathBuf>,
    pub knowledge_excerpt_chars: usize,
    pub search_url: Option<String>,
    pub search_api_key_env: Option<String>,
    pub market_url: String,
    pub timeout_secs: u64,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        Self {
            backend: ProviderBackend::Fixture,
            search_corpus: None,
            closes: None,
            knowledge_dir: None,
            knowledge_excerpt_chars: DEFAULT_EXCERPT_CHARS,
            search_url: None,
            search_api_key_env: None,
            market_url: "https://query1.finance.yahoo.com".into(),
            timeout_secs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeliberationConfig {
    pub max_rounds: u32,
    pub panel: PanelConfig,
}

impl Default for DeliberationConfig {
    fn default() -> Self {
        Self {
            max_rounds: 3,
            panel: PanelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub run_root: PathBuf,
    /// Where the final report is written; defaults to `report.md` in the run directory.
    pub report_path: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            run_root: PathBuf::from("runs"),
            report_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub inputs: InputsConfig,
    pub detection: DetectorConfig,
    pub gateway: GatewayConfig,
    pub providers: ProvidersConfig,
    pub experts: ExpertSettings,
    pub deliberation: DeliberationConfig,
    pub output: OutputConfig,
    /// Directory relative paths were resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// Values substituted from the environment; redacted from audit events.
    #[serde(skip)]
    pub interpolated: Vec<String>,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            inputs: InputsConfig::default(),
            detection: DetectorConfig::default(),
            gateway: GatewayConfig::default(),
            providers: ProvidersConfig::default(),
            experts: ExpertSettings::default(),
            deliberation: DeliberationConfig::default(),
            output: OutputConfig::default(),
            base_dir: env::current_dir().unwrap_or_default(),
            interpolated: Vec::new(),
        }
    }
}

fn env_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("valid regex"))
}

/// Replaces `${VAR}` in every string value. Unset variables are an error.
pub fn interpolate_env(value: Value, lookup: &dyn Fn(&str) -> Option<String>) -> Result<Value, ConfigError> {
    Ok(match value {
        Value::String(s) => {
            let mut missing = None;
            let replaced = env_pattern().replace_all(&s, |caps: &regex::Captures<'_>| match lookup(&caps[1]) {
                Some(v) => v,
                None => {
                    missing.get_or_insert_with(|| caps[1].to_string());
                    String::new()
                }
            });
            if let Some(var) = missing {
                return Err(ConfigError::MissingEnv(var));
            }
            Value::String(replaced.into_owned())
        }
        Value::Array(items) => Value::Array(
            items
                .into_iter()
                .map(|v| interpolate_env(v, lookup))
                .collect::<Result<_, _>>()?,
        ),
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| interpolate_env(v, lookup).map(|v| (k, v)))
                .collect::<Result<_, _>>()?,
        ),
        other => other,
    })
}

/// Lexical relative path from `base` to `path`; both should be absolute.
fn relative_to(path: &Path, base: &Path) -> PathBuf {
    let path: Vec<Component<'_>> = path.components().collect();
    let base: Vec<Component<'_>> = base.components().collect();
    let common = path.iter().zip(&base).take_while(|(a, b)| a == b).count();
    if common == 0 {
        return path.iter().collect();
    }
    let mut out = PathBuf::new();
    for _ in common..base.len() {
        out.push("..");
    }
    for c in &path[common..] {
        out.push(c);
    }
    out
}

fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other),
        }
    }
    out
}

fn absolutize(path: &Path, base: &Path) -> PathBuf {
    if path.is_absolute() {
        normalize(path)
    } else {
        normalize(&base.join(path))
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
        let base = absolutize(&base, &env::current_dir().unwrap_or_default());
        Self::from_json_str(&text, &base, &|var| env::var(var).ok())
    }

    pub fn from_json_str(
        text: &str,
        base_dir: &Path,
        lookup: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let raw: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let seen = std::cell::RefCell::new(Vec::new());
        let recording = |var: &str| {
            let v = lookup(var);
            if let Some(v) = &v {
                seen.borrow_mut().push(v.clone());
            }
            v
        };
        let value = interpolate_env(raw, &recording)?;
        let mut config: AppConfig = serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        config.interpolated = seen.into_inner();
        config.resolve_paths();
        Ok(config)
    }

    fn path_fields(&mut self) -> Vec<&mut PathBuf> {
        let mut out: Vec<&mut PathBuf> = Vec::new();
        out.extend(self.inputs.series.as_mut());
        out.extend(self.inputs.metadata.as_mut());
        out.extend(self.gateway.mock_script.as_mut());
        out.extend(self.gateway.prompt_dir.as_mut());
        out.extend(self.providers.search_corpus.as_mut());
        out.extend(self.providers.closes.as_mut());
        out.extend(self.providers.knowledge_dir.as_mut());
        out.extend(self.deliberation.panel.persona_dir.as_mut());
        out.push(&mut self.output.run_root);
        out.extend(self.output.report_path.as_mut());
        out
    }

    fn resolve_paths(&mut self) {
        let base = self.base_dir.clone();
        for p in self.path_fields() {
            *p = absolutize(p, &base);
        }
    }

    /// Resolve a path given on the command line (relative to the working directory).
    pub fn cli_path(path: &Path) -> PathBuf {
        absolutize(path, &env::current_dir().unwrap_or_default())
    }

    /// Checks backend selections and that every referenced path exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.detection
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.gateway
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.deliberation.max_rounds == 0 {
            return Err(ConfigError::Invalid("deliberation.max_rounds must be at least 1".into()));
        }
        if self.experts.prompt_cap_chars == 0 {
            return Err(ConfigError::Invalid("experts.prompt_cap_chars must be positive".into()));
        }
        let must_exist = |field: &str, path: &Option<PathBuf>| -> Result<(), ConfigError> {
            match path {
                Some(p) if !p.exists() => Err(ConfigError::MissingPath {
                    field: field.into(),
                    path: p.display().to_string(),
                }),
                _ => Ok(()),
            }
        };
        let required = |field: &str, path: &Option<PathBuf>| -> Result<(), ConfigError> {
            if path.is_none() {
                return Err(ConfigError::Invalid(format!("{field} is required")));
            }
            must_exist(field, path)
        };
        must_exist("inputs.series", &self.inputs.series)?;
        must_exist("inputs.metadata", &self.inputs.metadata)?;
        if self.gateway.backend == BackendKind::Mock {
            required("gateway.mock_script", &self.gateway.mock_script)?;
        }
        must_exist("gateway.prompt_dir", &self.gateway.prompt_dir)?;
        must_exist("deliberation.panel.persona_dir", &self.deliberation.panel.persona_dir)?;
        required("providers.knowledge_dir", &self.providers.knowledge_dir)?;
        match self.providers.backend {
            ProviderBackend::Fixture => {
                required("providers.search_corpus", &self.providers.search_corpus)?;
                required("providers.closes", &self.providers.closes)?;
            }
            ProviderBackend::Live => {
                if self.providers.search_url.is_none() {
                    return Err(ConfigError::Invalid("providers.search_url is required for live providers".into()));
                }
            }
        }
        Ok(())
    }

    /// Effective configuration as recorded in the audit trail: output
    /// locations dropped, paths relative to the config directory.
    pub fn audit_view(&self) -> Value {
        let mut view = self.clone();
        let base = view.base_dir.clone();
        for p in view.path_fields() {
            *p = relative_to(p, &base);
        }
        let mut value = serde_json::to_value(&view).expect("config serializes");
        if let Value::Object(map) = &mut value {
            map.remove("output");
        }
        value
    }

    /// SHA-256 of the canonical audit view.
    pub fn digest(&self) -> String {
        let canonical = self.audit_view().to_string();
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
