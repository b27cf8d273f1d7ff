use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::DeliberationError;
use crate::experts::listing::split_listing;
use crate::experts::{ExpertFinding, ExpertOutcome, QuestionSet, Verdict};
use crate::gateway::template::{bindings, ids};
use crate::gateway::Gateway;

pub const SUMMARY_ROLE_TAG: &str = "summary";
const SUMMARY_REQUEST: &str = "Please provide the summary for management.";
pub const NO_SUMMARY_ITEM: &str = "(no summary item returned for this question)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub index: usize,
    pub expert_ids: Vec<String>,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub per_question: BTreeMap<usize, String>,
    pub overall: String,
    pub disagreements: Vec<Disagreement>,
    /// Experts whose findings were unavailable to the summary.
    #[serde(default)]
    pub unavailable: Vec<String>,
    pub raw_response: String,
}

impl SummaryReport {
    /// Plain text handed to the management panel.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.overall.is_empty() {
            out.push_str(&self.overall);
            out.push_str("\n\n");
        }
        for (index, text) in &self.per_question {
            out.push_str(&format!("{index}. {text}\n"));
        }
        out.trim_end().to_string()
    }
}

/// Indices where completed experts do not all agree, with every expert's
/// verdict in roster order.
pub fn compute_disagreements(question_count: usize, findings: &[&ExpertFinding]) -> Vec<Disagreement> {
    (1..=question_count)
        .filter_map(|index| {
            let votes: Vec<(String, Verdict)> = findings
                .iter()
                .filter_map(|f| f.verdict(index).map(|v| (f.expert_id.clone(), v)))
                .collect();
            let distinct: BTreeSet<Verdict> = votes.iter().map(|(_, v)| *v).collect();
            (distinct.len() > 1).then(|| Disagreement {
                index,
                expert_ids: votes.iter().map(|(id, _)| id.clone()).collect(),
                verdicts: votes.iter().map(|(_, v)| *v).collect(),
            })
        })
        .collect()
}

fn experts_block(outcomes: &[ExpertOutcome]) -> String {
    outcomes
        .iter()
        .map(|o| match o {
            ExpertOutcome::Completed(f) => format!("Expert {}:\n{}", f.expert_id, f.raw_response.trim()),
            ExpertOutcome::Failed(f) => format!("Expert {}: expert unavailable ({})", f.expert_id, f.reason),
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn consolidate(
    questions: &QuestionSet,
    outcomes: &[ExpertOutcome],
    gateway: &Gateway,
) -> Result<SummaryReport, DeliberationError> {
    let findings: Vec<&ExpertFinding> = outcomes.iter().filter_map(ExpertOutcome::finding).collect();
    if findings.is_empty() {
        return Err(DeliberationError::NoFindings);
    }
    let system = gateway.templates().render_template(
        ids::SUMMARY,
        &bindings([
            ("Initial questions", questions.render_numbered()),
            ("Experts' answers", experts_block(outcomes)),
        ]),
    )?;
    let raw = gateway.ask(&system, SUMMARY_REQUEST, SUMMARY_ROLE_TAG)?;
    Ok(parse_summary(&raw, questions.len(), outcomes, &findings))
}

fn parse_summary(
    raw: &str,
    question_count: usize,
    outcomes: &[ExpertOutcome],
    findings: &[&ExpertFinding],
) -> SummaryReport {
    let listing = split_listing(raw);
    let per_question = (1..=question_count)
        .map(|index| {
            let text = listing
                .items
                .get(index - 1)
                .map(|item| item.text.clone())
                .filter(|t| !t.is_empty())
                .unwrap_or_else(|| NO_SUMMARY_ITEM.to_string());
            (index, text)
        })
        .collect();
    let overall = [listing.preamble.as_str(), listing.coda.as_str()]
        .iter()
        .filter(|s| !s.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join("\n\n");
    SummaryReport {
        per_question,
        overall,
        disagreements: compute_disagreements(question_count, findings),
        unavailable: outcomes
            .iter()
            .filter(|o| o.finding().is_none())
            .map(|o| o.expert_id().to_string())
            .collect(),
        raw_response: raw.to_string(),
    }
}
