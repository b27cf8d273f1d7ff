//! Prompt templates with `{name}` placeholders.
//!
//! Placeholder names run to the next `}` and may contain spaces and
//! apostrophes. `{{` and `}}` produce literal braces. Bound values are
//! inserted verbatim and never re-scanned.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unbound placeholder: {0}")]
    Unbound(String),
    #[error("unterminated placeholder starting at byte {0}")]
    Unterminated(usize),
    #[error("stray `}}` at byte {0}")]
    StrayBrace(usize),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("cannot read template {path}: {message}")]
    Read { path: String, message: String },
}

pub mod ids {
    pub const QUESTION_FORMULATOR: &str = "question_formulator";
    pub const WEB_RESEARCH: &str = "web_research";
    pub const INSTITUTIONAL: &str = "institutional";
    pub const CROSS_CHECK: &str = "cross_check";
    pub const SUMMARY: &str = "summary";
    pub const TICKER_RESOLVER: &str = "ticker_resolver";
    pub const MANAGEMENT_TURN: &str = "management_turn";
    pub const MODERATOR_DECISION: &str = "moderator_decision";
}

const BUILTIN: &[(&str, &str)] = &[
    (ids::QUESTION_FORMULATOR, include_str!("../../assets/prompts/question_formulator.txt")),
    (ids::WEB_RESEARCH, include_str!("../../assets/prompts/web_research.txt")),
    (ids::INSTITUTIONAL, include_str!("../../assets/prompts/institutional.txt")),
    (ids::CROSS_CHECK, include_str!("../../assets/prompts/cross_check.txt")),
    (ids::SUMMARY, include_str!("../../assets/prompts/summary.txt")),
    (ids::TICKER_RESOLVER, include_str!("../../assets/prompts/ticker_resolver.txt")),
    (ids::MANAGEMENT_TURN, include_str!("../../assets/prompts/management_turn.txt")),
    (ids::MODERATOR_DECISION, include_str!("../../assets/prompts/moderator_decision.txt")),
];

/// Substitute `{name}` placeholders in `template`.
pub fn render(template: &str, bindings: &BTreeMap<String, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let bytes = template.as_bytes();
    let mut i = 0;
    let mut literal_start = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push_str(&template[literal_start..i]);
                out.push('{');
                i += 2;
                literal_start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push_str(&template[literal_start..i]);
                out.push('}');
                i += 2;
                literal_start = i;
            }
            b'{' => {
                out.push_str(&template[literal_start..i]);
                let close = template[i + 1..]
                    .find(['}', '{', '\n'])
                    .map(|off| i + 1 + off)
                    .filter(|&j| bytes[j] == b'}')
                    .ok_or(TemplateError::Unterminated(i))?;
                let name = &template[i + 1..close];
                let value = bindings
                    .get(name)
                    .ok_or_else(|| TemplateError::Unbound(name.to_string()))?;
                out.push_str(value);
                i = close + 1;
                literal_start = i;
            }
            b'}' => return Err(TemplateError::StrayBrace(i)),
            _ => i += 1,
        }
    }
    out.push_str(&template[literal_start..]);
    Ok(out)
}

/// Placeholder names referenced by a template, in order of appearance.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        if rest[start + 1..].starts_with('{') {
            rest = &rest[start + 2..];
            continue;
        }
        match rest[start + 1..].find('}') {
            Some(end) => {
                names.push(rest[start + 1..start + 1 + end].to_string());
                rest = &rest[start + 2 + end..];
            }
            None => break,
        }
    }
    names
}

/// Built-in prompt assets, optionally overridden file by file from a directory
/// (`<dir>/<template id>.txt`).
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
    override_dir: Option<PathBuf>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self {
            templates: BUILTIN
                .iter()
                .map(|(id, text)| (id.to_string(), text.trim_end().to_string()))
                .collect(),
            override_dir: None,
        }
    }

    pub fn with_override_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        let ids: Vec<String> = set.templates.keys().cloned().collect();
        for id in ids {
            let path = dir.join(format!("{id}.txt"));
            if path.is_file() {
                let text = fs::read_to_string(&path).map_err(|e| TemplateError::Read {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                set.templates.insert(id, text.trim_end().to_string());
            }
        }
        set.override_dir = Some(dir.to_path_buf());
        Ok(set)
    }

    pub fn insert(&mut self, id: &str, text: &str) {
        self.templates.insert(id.to_string(), text.to_string());
    }

    pub fn get(&self, id: &str) -> Result<&str, TemplateError> {
        self.templates
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| TemplateError::UnknownTemplate(id.to_string()))
    }

    pub fn render_template(
        &self,
        template_id: &str,
        bindings: &BTreeMap<String, String>,
    ) -> Result<String, TemplateError> {
        render(self.get(template_id)?, bindings)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

/// Shorthand for building binding maps.
pub fn bindings<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
