//! Summary consolidation and the moderated management discussion.

mod panel;
pub mod report;
mod summary;

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use panel::{builtin_persona, ManagerKind, ManagerRole, Panel, PanelConfig};
pub use report::{render_final_report, BackendIdentity, Provenance, ReportInputs};
pub use summary::{compute_disagreements, consolidate, Disagreement, SummaryReport, SUMMARY_ROLE_TAG};

use crate::gateway::template::{bindings, ids};
use crate::gateway::{Gateway, GatewayError, TemplateError};

pub const ENDORSE_TOKEN: &str = "ENDORSE";
pub const OBJECTION_TOKEN: &str = "OBJECTION";
pub const DECISION_ROLE_TAG: &str = "moderator_decision";

#[derive(Debug, Error)]
pub enum DeliberationError {
    #[error("no findings to consolidate")]
    NoFindings,
    #[error("invalid panel: {0}")]
    Panel(String),
    #[error("persona for `{role_id}`: {message}")]
    Persona { role_id: String, message: String },
    #[error("max_rounds must be at least 1")]
    NoRounds,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnKind {
    Statement,
    Decision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub round: u32,
    pub role_id: String,
    pub kind: TurnKind,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Endorsed,
    Escalated,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Endorsed => "endorsed",
            Self::Escalated => "escalated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliberationTranscript {
    pub turns: Vec<Turn>,
    pub outcome: Outcome,
    pub rounds_used: u32,
    pub max_rounds: u32,
    pub critic_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_note: Option<String>,
}

impl DeliberationTranscript {
    /// Latest statement by the critic, if any.
    pub fn critic_latest(&self) -> Option<&Turn> {
        self.turns
            .iter()
            .rev()
            .find(|t| t.role_id == self.critic_id && t.kind == TurnKind::Statement)
    }

    pub fn last_decision(&self) -> Option<&Turn> {
        self.turns.iter().rev().find(|t| t.kind == TurnKind::Decision)
    }
}

fn token_regex(token: &str) -> Regex {
    Regex::new(&format!(r"\b{token}\b")).expect("valid regex")
}

pub fn has_endorse(text: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| token_regex(ENDORSE_TOKEN)).is_match(text)
}

pub fn has_objection(text: &str) -> bool {
    text.contains(OBJECTION_TOKEN)
}

fn render_turns(turns: &[Turn]) -> String {
    if turns.is_empty() {
        return "(no discussion yet)".to_string();
    }
    turns
        .iter()
        .map(|t| match t.kind {
            TurnKind::Statement => format!("{}: {}", t.role_id, t.text.trim()),
            TurnKind::Decision => format!("{} (decision): {}", t.role_id, t.text.trim()),
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn speaker_label(role: &ManagerRole) -> String {
    match role.kind {
        ManagerKind::Moderator => format!("{}, the moderator of the panel", role.role_id),
        ManagerKind::Critic => format!("{}, the designated critic of the panel", role.role_id),
        ManagerKind::DomainManager => format!("{}, a domain manager on the panel", role.role_id),
    }
}

/// Round-robin discussion: moderator, domain managers, critic, then a
/// moderator decision turn. Ends endorsed when the decision carries ENDORSE
/// and the critic's latest turn has no OBJECTION; escalates after
/// `max_rounds` or on a gateway failure.
pub fn deliberate(
    summary: &SummaryReport,
    series_title: &str,
    panel: &Panel,
    gateway: &Gateway,
    max_rounds: u32,
) -> Result<DeliberationTranscript, DeliberationError> {
    if max_rounds == 0 {
        return Err(DeliberationError::NoRounds);
    }
    let summary_text = summary.render();
    let mut transcript = DeliberationTranscript {
        turns: Vec::new(),
        outcome: Outcome::Escalated,
        rounds_used: 0,
        max_rounds,
        critic_id: panel.critic().role_id.clone(),
        failure_note: None,
    };

    for round in 1..=max_rounds {
        transcript.rounds_used = round;
        for role in panel.roles() {
            let prompt = gateway.templates().render_template(
                ids::MANAGEMENT_TURN,
                &bindings([
                    ("Series title", series_title.to_string()),
                    ("Summary report", summary_text.clone()),
                    ("Transcript", render_turns(&transcript.turns)),
                    ("Speaker", speaker_label(role)),
                ]),
            )?;
            match gateway.ask(&role.persona, &prompt, &role.role_id) {
                Ok(text) => transcript.turns.push(Turn {
                    round,
                    role_id: role.role_id.clone(),
                    kind: TurnKind::Statement,
                    text,
                }),
                Err(e) => return fail(transcript, &role.role_id, e),
            }
        }

        let moderator = panel.moderator();
        let prompt = gateway.templates().render_template(
            ids::MODERATOR_DECISION,
            &bindings([
                ("Summary report", summary_text.clone()),
                ("Transcript", render_turns(&transcript.turns)),
            ]),
        )?;
        let decision = match gateway.ask(&moderator.persona, &prompt, DECISION_ROLE_TAG) {
            Ok(text) => text,
            Err(e) => return fail(transcript, DECISION_ROLE_TAG, e),
        };
        let endorse = has_endorse(&decision);
        transcript.turns.push(Turn {
            round,
            role_id: moderator.role_id.clone(),
            kind: TurnKind::Decision,
            text: decision,
        });
        let objected = transcript.critic_latest().is_some_and(|t| has_objection(&t.text));
        if endorse && !objected {
            transcript.outcome = Outcome::Endorsed;
            return Ok(transcript);
        }
    }
    Ok(transcript)
}

fn fail(
    mut transcript: DeliberationTranscript,
    speaker: &str,
    error: GatewayError,
) -> Result<DeliberationTranscript, DeliberationError> {
    if matches!(error, GatewayError::Audit(_)) {
        return Err(error.into());
    }
    transcript.outcome = Outcome::Escalated;
    transcript.failure_note = Some(format!("deliberation stopped at the {speaker} turn: {error}"));
    Ok(transcript)
}
