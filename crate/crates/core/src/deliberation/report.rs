//! The analyst-facing final report (Markdown).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DeliberationTranscript, Outcome, SummaryReport, TurnKind};
use crate::detector::{Anomaly, AnomalyKind};
use crate::experts::{ExpertOutcome, QuestionSet};
use crate::payload::round_for_payload;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendIdentity {
    pub component: String,
    pub identity: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub run_id: String,
    pub config_digest: String,
    pub backends: Vec<BackendIdentity>,
}

pub struct ReportInputs<'a> {
    pub series_id: &'a str,
    pub series_title: &'a str,
    pub anomalies: &'a [Anomaly],
    pub questions: &'a QuestionSet,
    pub outcomes: &'a [ExpertOutcome],
    pub summary: &'a SummaryReport,
    pub transcript: &'a DeliberationTranscript,
    pub provenance: &'a Provenance,
}

fn indent(text: &str, prefix: &str) -> String {
    text.trim()
        .lines()
        .map(|l| {
            if l.trim().is_empty() {
                String::new()
            } else {
                format!("{prefix}{}", l.trim())
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn quote(text: &str) -> String {
    text.trim()
        .lines()
        .map(|l| if l.trim().is_empty() { ">".to_string() } else { format!("> {}", l.trim()) })
        .collect::<Vec<_>>()
        .join("\n")
}

fn anomaly_table(out: &mut String, anomalies: &[Anomaly]) {
    let mut sorted: Vec<&Anomaly> = anomalies.iter().collect();
    sorted.sort_by_key(|a| a.date);
    sorted.dedup_by_key(|a| a.date);
    out.push_str("| Date | Kind | Percent change | z-score |\n|---|---|---|---|\n");
    for a in sorted {
        let (value, z) = match a.kind {
            AnomalyKind::Outlier => (
                a.observed_value
                    .map(|v| round_for_payload(v).to_string())
                    .unwrap_or_default(),
                a.z_score.map(|z| format!("{z:.4}")).unwrap_or_default(),
            ),
            AnomalyKind::Missing => ("null".to_string(), "n/a".to_string()),
        };
        let _ = writeln!(out, "| {} | {} | {value} | {z} |", a.date, a.kind);
    }
}

pub fn render_final_report(inputs: &ReportInputs<'_>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Anomaly validation report: {}\n", inputs.series_id);
    let _ = writeln!(out, "Series: {}\n", inputs.series_title);

    out.push_str("## Anomalies\n\n");
    anomaly_table(&mut out, inputs.anomalies);

    out.push_str("\n## Questions\n\n");
    for q in &inputs.questions.questions {
        let body = indent(&q.text, "   ");
        let _ = writeln!(out, "{}. {}", q.index, body.trim_start());
    }

    out.push_str("\n## Expert verdicts\n\n");
    let expert_ids: Vec<&str> = inputs.outcomes.iter().map(ExpertOutcome::expert_id).collect();
    let _ = writeln!(out, "| Question | {} |", expert_ids.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(expert_ids.len()));
    for q in &inputs.questions.questions {
        let cells: Vec<String> = inputs
            .outcomes
            .iter()
            .map(|o| match o.finding() {
                Some(f) => match f.per_question.get(&q.index) {
                    Some(e) if e.unparsed => format!("{} (unparsed)", e.verdict),
                    Some(e) => e.verdict.to_string(),
                    None => "n/a".to_string(),
                },
                None => "unavailable".to_string(),
            })
            .collect();
        let _ = writeln!(out, "| {} | {} |", q.index, cells.join(" | "));
    }
    for outcome in inputs.outcomes {
        let _ = writeln!(out, "\n### {}\n", outcome.expert_id());
        match outcome {
            ExpertOutcome::Completed(f) => {
                for (index, entry) in &f.per_question {
                    let _ = writeln!(out, "{index}. {}: {}", entry.verdict, indent(&entry.reasoning, "   ").trim_start());
                }
            }
            ExpertOutcome::Failed(f) => {
                let _ = writeln!(out, "expert unavailable: {} ({})", f.expert_id, f.reason);
            }
        }
    }

    out.push_str("\n## Consolidated summary\n\n");
    if !inputs.summary.overall.is_empty() {
        let _ = writeln!(out, "{}\n", inputs.summary.overall.trim());
    }
    for (index, text) in &inputs.summary.per_question {
        let _ = writeln!(out, "{index}. {}", indent(text, "   ").trim_start());
    }
    out.push_str("\nDisagreements between experts:\n\n");
    if inputs.summary.disagreements.is_empty() {
        out.push_str("- none\n");
    }
    for d in &inputs.summary.disagreements {
        let votes: Vec<String> = d
            .expert_ids
            .iter()
            .zip(&d.verdicts)
            .map(|(id, v)| format!("{id}={v}"))
            .collect();
        let _ = writeln!(out, "- question {}: {}", d.index, votes.join(", "));
    }

    let t = inputs.transcript;
    out.push_str("\n## Deliberation\n\n");
    let _ = writeln!(
        out,
        "Outcome: {} after {} of at most {} round(s).",
        t.outcome.as_str(),
        t.rounds_used,
        t.max_rounds
    );
    if let Some(note) = &t.failure_note {
        let _ = writeln!(out, "Failure note: {note}");
    }
    out.push_str("\n### Transcript\n");
    for turn in &t.turns {
        let label = match turn.kind {
            TurnKind::Statement => turn.role_id.clone(),
            TurnKind::Decision => format!("{} (decision)", turn.role_id),
        };
        let _ = writeln!(out, "\n**{label}**, round {}:\n\n{}", turn.round, quote(&turn.text));
    }

    out.push_str("\n## Recommended action\n\n");
    match t.outcome {
        Outcome::Endorsed => {
            out.push_str("Release the endorsed summary report to the analyst for final review.\n");
        }
        Outcome::Escalated => {
            out.push_str("escalate to human review\n");
            out.push_str(
                "\nThe panel did not endorse the summary report. Escalation on disagreement is a \
                 policy of this tool, not a finding of the panel.\n",
            );
            if let Some(critic) = t.critic_latest().filter(|c| super::has_objection(&c.text)) {
                let _ = writeln!(out, "\nCritic's objection ({}):\n\n{}", critic.role_id, quote(&critic.text));
            }
        }
    }
    for id in &inputs.summary.unavailable {
        let _ = writeln!(out, "\nexpert unavailable: {id}");
    }

    let p = inputs.provenance;
    out.push_str("\n## Provenance\n\n");
    let _ = writeln!(out, "- run id: {}", p.run_id);
    let _ = writeln!(out, "- config digest: {}", p.config_digest);
    for b in &p.backends {
        let _ = writeln!(out, "- {}: {}", b.component, b.identity);
    }
    out
}
