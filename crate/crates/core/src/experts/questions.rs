use serde::{Deserialize, Serialize};

use super::listing::split_listing;
use super::ExpertError;
use crate::gateway::template::{bindings, ids};
use crate::gateway::Gateway;
use crate::payload::{render_payload_text, ValidationPayload};

pub const QUESTION_ROLE_TAG: &str = "question_formulator";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub questions: Vec<Question>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preamble: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coda: Option<String>,
}

fn non_empty(s: String) -> Option<String> {
    if s.trim().is_empty() {
        None
    } else {
        Some(s)
    }
}

impl QuestionSet {
    /// Numbered items in order of appearance, reindexed from 1. A paragraph
    /// between items is kept as context at the head of the following question.
    pub fn parse(raw: &str) -> Result<Self, ExpertError> {
        let listing = split_listing(raw);
        let questions: Vec<Question> = listing
            .items
            .into_iter()
            .filter(|item| !item.text.is_empty() || !item.lead.is_empty())
            .enumerate()
            .map(|(i, item)| Question {
                index: i + 1,
                text: if item.lead.is_empty() {
                    item.text
                } else {
                    format!("{}\n{}", item.lead, item.text)
                },
            })
            .collect();
        if questions.is_empty() {
            return Err(ExpertError::NoQuestions {
                raw: raw.to_string(),
            });
        }
        Ok(Self {
            questions,
            preamble: non_empty(listing.preamble),
            coda: non_empty(listing.coda),
        })
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    /// `N. text` blocks separated by blank lines, as sent to the experts.
    pub fn render_numbered(&self) -> String {
        self.questions
            .iter()
            .map(|q| format!("{}. {}", q.index, indent_continuation(&q.text)))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

fn indent_continuation(text: &str) -> String {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            if i == 0 || line.trim().is_empty() {
                line.trim_end().to_string()
            } else {
                format!("   {}", line.trim())
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn formulate_questions(payload: &ValidationPayload, gateway: &Gateway) -> Result<QuestionSet, ExpertError> {
    let system = gateway
        .templates()
        .render_template(ids::QUESTION_FORMULATOR, &bindings([]))?;
    let reply = gateway.ask(&system, &render_payload_text(payload), QUESTION_ROLE_TAG)?;
    QuestionSet::parse(&reply)
}
