use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DeliberationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManagerKind {
    DomainManager,
    Moderator,
    Critic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManagerRole {
    pub role_id: String,
    /// System prompt for this role.
    pub persona: String,
    pub kind: ManagerKind,
}

const BUILTIN_PERSONAS: &[(&str, &str)] = &[
    ("financial_markets", include_str!("../../assets/personas/financial_markets.txt")),
    ("macroeconomics", include_str!("../../assets/personas/macroeconomics.txt")),
    ("statistics", include_str!("../../assets/personas/statistics.txt")),
    ("moderator", include_str!("../../assets/personas/moderator.txt")),
    ("critic", include_str!("../../assets/personas/critic.txt")),
];

pub fn builtin_persona(role_id: &str) -> Option<&'static str> {
    BUILTIN_PERSONAS
        .iter()
        .find(|(id, _)| *id == role_id)
        .map(|(_, text)| text.trim_end())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelConfig {
    /// Directory of `<role_id>.txt` persona files. Built-in personas fill gaps.
    pub persona_dir: Option<PathBuf>,
    /// Domain managers in speaking order.
    pub managers: Vec<String>,
    pub moderator: String,
    pub critic: String,
}

impl Default for PanelConfig {
    fn default() -> Self {
        Self {
            persona_dir: None,
            managers: vec!["financial_markets".into(), "macroeconomics".into(), "statistics".into()],
            moderator: "moderator".into(),
            critic: "critic".into(),
        }
    }
}

/// Validated management panel in speaking order: moderator, domain
/// managers, critic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Panel {
    roles: Vec<ManagerRole>,
}

fn load_persona(dir: Option<&Path>, role_id: &str) -> Result<String, DeliberationError> {
    if let Some(dir) = dir {
        let path = dir.join(format!("{role_id}.txt"));
        if path.is_file() {
            let text = fs::read_to_string(&path).map_err(|e| DeliberationError::Persona {
                role_id: role_id.to_string(),
                message: format!("{}: {e}", path.display()),
            })?;
            return Ok(text.trim_end().to_string());
        }
    }
    builtin_persona(role_id)
        .map(str::to_string)
        .ok_or_else(|| DeliberationError::Persona {
            role_id: role_id.to_string(),
            message: "no persona file and no built-in persona".into(),
        })
}

impl Panel {
    pub fn new(roles: Vec<ManagerRole>) -> Result<Self, DeliberationError> {
        let count = |kind| roles.iter().filter(|r| r.kind == kind).count();
        if count(ManagerKind::Moderator) != 1 {
            return Err(DeliberationError::Panel("panel needs exactly one moderator".into()));
        }
        if count(ManagerKind::Critic) != 1 {
            return Err(DeliberationError::Panel("panel needs exactly one critic".into()));
        }
        if count(ManagerKind::DomainManager) == 0 {
            return Err(DeliberationError::Panel("panel needs at least one domain manager".into()));
        }
        let mut seen = BTreeSet::new();
        for role in &roles {
            if role.role_id.trim().is_empty() || !seen.insert(role.role_id.as_str()) {
                return Err(DeliberationError::Panel(format!(
                    "role ids must be unique and non-empty: `{}`",
                    role.role_id
                )));
            }
            if role.persona.trim().is_empty() {
                return Err(DeliberationError::Panel(format!("empty persona for `{}`", role.role_id)));
            }
        }
        let mut ordered: Vec<ManagerRole> = roles.iter().filter(|r| r.kind == ManagerKind::Moderator).cloned().collect();
        ordered.extend(roles.iter().filter(|r| r.kind == ManagerKind::DomainManager).cloned());
        ordered.extend(roles.iter().filter(|r| r.kind == ManagerKind::Critic).cloned());
        Ok(Self { roles: ordered })
    }

    pub fn from_config(config: &PanelConfig) -> Result<Self, DeliberationError> {
        let dir = config.persona_dir.as_deref();
        let mut roles = vec![ManagerRole {
            role_id: config.moderator.clone(),
            persona: load_persona(dir, &config.moderator)?,
            kind: ManagerKind::Moderator,
        }];
        for id in &config.managers {
            roles.push(ManagerRole {
                role_id: id.clone(),
                persona: load_persona(dir, id)?,
                kind: ManagerKind::DomainManager,
            });
        }
        roles.push(ManagerRole {
            role_id: config.critic.clone(),
            persona: load_persona(dir, &config.critic)?,
            kind: ManagerKind::Critic,
        });
        Self::new(roles)
    }

    pub fn standard() -> Self {
        Self::from_config(&PanelConfig::default()).expect("built-in panel is valid")
    }

    pub fn roles(&self) -> &[ManagerRole] {
        &self.roles
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn moderator(&self) -> &ManagerRole {
        &self.roles[0]
    }

    pub fn critic(&self) -> &ManagerRole {
        self.roles.last().expect("validated panel")
    }
}
