//! Question formulation, the expert agents and the verdict protocol.

mod agents;
pub mod listing;
mod questions;
pub mod verdict;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agents::{
    search_query, CrossCheckExpert, ExpertAgent, InstitutionalExpert, WebResearchExpert, CROSS_CHECK,
    INSTITUTIONAL, WEB_RESEARCH,
};
pub use questions::{formulate_questions, Question, QuestionSet, QUESTION_ROLE_TAG};
pub use verdict::{parse_verdicts, ParsedVerdicts, ReplyShape, Verdict, VerdictEntry, VerdictError};

use crate::audit::{AuditError, AuditSink, BufferedSink};
use crate::gateway::{Gateway, GatewayError, TemplateError};
use crate::payload::ValidationPayload;
use crate::providers::{ProviderError, Toolbox};

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error("reply contains no numbered questions: {raw}")]
    NoQuestions { raw: String },
    #[error(transparent)]
    Verdict(#[from] VerdictError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("prompt for {expert} exceeds the {cap}-character cap without any evidence")]
    PromptTooLarge { expert: String, cap: usize },
    #[error("duplicate expert id `{0}`")]
    DuplicateExpert(String),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

impl ExpertError {
    /// Audit failures are never degraded into a failure finding.
    pub fn is_audit_failure(&self) -> bool {
        matches!(
            self,
            Self::Gateway(GatewayError::Audit(_)) | Self::Provider(ProviderError::Audit(_)) | Self::Audit(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertSettings {
    /// Upper bound on system + user prompt length, in characters.
    pub prompt_cap_chars: usize,
    pub search_results: usize,
    pub knowledge_excerpts: usize,
    /// Percentage points allowed between derived and payload changes.
    pub cross_check_tolerance_pp: f64,
    pub lookback_days: u32,
}

impl Default for ExpertSettings {
    fn default() -> Self {
        Self {
            prompt_cap_chars: 24_000,
            search_results: 3,
            knowledge_excerpts: 2,
            cross_check_tolerance_pp: 0.05,
            lookback_days: 7,
        }
    }
}

/// Everything an expert may consult. Shared read-only across the fan-out.
#[derive(Clone, Copy)]
pub struct ExpertContext<'a> {
    pub gateway: &'a Gateway,
    pub toolbox: &'a Toolbox,
    pub payload: &'a ValidationPayload,
    pub settings: &'a ExpertSettings,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertFinding {
    pub expert_id: String,
    pub per_question: BTreeMap<usize, VerdictEntry>,
    pub raw_response: String,
}

impl ExpertFinding {
    pub fn verdict(&self, index: usize) -> Option<Verdict> {
        self.per_question.get(&index).map(|e| e.verdict)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertFailure {
    pub expert_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertOutcome {
    Completed(ExpertFinding),
    Failed(ExpertFailure),
}

impl ExpertOutcome {
    pub fn expert_id(&self) -> &str {
        match self {
            Self::Completed(f) => &f.expert_id,
            Self::Failed(f) => &f.expert_id,
        }
    }

    pub fn finding(&self) -> Option<&ExpertFinding> {
        match self {
            Self::Completed(f) => Some(f),
            Self::Failed(_) => None,
        }
    }
}

pub const TRUNCATION_MARKER: &str = "[evidence truncated: {n} earlier item(s) dropped]";

fn marker(dropped: usize, clipped: bool) -> String {
    if clipped {
        format!("[evidence truncated: {dropped} earlier item(s) dropped, oldest remaining item clipped]")
    } else {
        TRUNCATION_MARKER.replace("{n}", &dropped.to_string())
    }
}

fn user_prompt(questions: &str, evidence: &[String]) -> String {
    if evidence.is_empty() {
        format!("Questions:\n{questions}\n")
    } else {
        format!("Questions:\n{questions}\n\nEvidence:\n{}\n", evidence.join("\n\n"))
    }
}

/// Builds the user prompt so that `system` + prompt stays within `cap`
/// characters, dropping the oldest evidence first.
pub fn bounded_prompt(
    expert: &str,
    system: &str,
    questions: &str,
    mut evidence: Vec<String>,
    cap: usize,
) -> Result<(String, bool), ExpertError> {
    let len = |e: &[String]| system.chars().count() + user_prompt(questions, e).chars().count();
    if len(&evidence) <= cap {
        return Ok((user_prompt(questions, &evidence), false));
    }
    let mut dropped = 0;
    loop {
        if evidence.len() > 1 {
            evidence.remove(0);
            dropped += 1;
            let mut with_marker = vec![marker(dropped, false)];
            with_marker.extend(evidence.iter().cloned());
            if len(&with_marker) <= cap {
                return Ok((user_prompt(questions, &with_marker), true));
            }
            continue;
        }
        // a single item left: keep its newest tail
        let head = marker(dropped, true);
        let base = len(&[head.clone(), String::new()]);
        if base > cap {
            return Err(ExpertError::PromptTooLarge {
                expert: expert.to_string(),
                cap,
            });
        }
        let keep = cap - base;
        let last = evidence.pop().unwrap_or_default();
        let total = last.chars().count();
        let tail: String = last.chars().skip(total.saturating_sub(keep)).collect();
        return Ok((user_prompt(questions, &[head, tail]), true));
    }
}

/// Runs one expert: evidence, one gateway call, verdict parsing.
pub fn run_expert(
    agent: &dyn ExpertAgent,
    questions: &QuestionSet,
    ctx: &ExpertContext<'_>,
) -> Result<ExpertFinding, ExpertError> {
    let system = ctx
        .gateway
        .templates()
        .render_template(agent.template_id(), &agent.template_bindings(ctx))?;
    let evidence = agent.gather_evidence(questions, ctx)?;
    let (user, _) = bounded_prompt(
        agent.id(),
        &system,
        &questions.render_numbered(),
        evidence,
        ctx.settings.prompt_cap_chars,
    )?;
    let raw = ctx.gateway.ask(&system, &user, agent.id())?;
    let parsed = parse_verdicts(&raw, questions.len())?;
    Ok(ExpertFinding {
        expert_id: agent.id().to_string(),
        per_question: parsed.entries,
        raw_response: raw,
    })
}

/// Ordered set of expert agents. Findings are always reported in this order.
#[derive(Clone)]
pub struct ExpertRoster {
    agents: Vec<Arc<dyn ExpertAgent>>,
}

impl std::fmt::Debug for ExpertRoster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.ids()).finish()
    }
}

impl Default for ExpertRoster {
    fn default() -> Self {
        Self::standard()
    }
}

impl ExpertRoster {
    pub fn empty() -> Self {
        Self { agents: Vec::new() }
    }

    pub fn standard() -> Self {
        Self {
            agents: vec![
                Arc::new(WebResearchExpert),
                Arc::new(InstitutionalExpert),
                Arc::new(CrossCheckExpert),
            ],
        }
    }

    pub fn register(&mut self, agent: Arc<dyn ExpertAgent>) -> Result<(), ExpertError> {
        if self.agents.iter().any(|a| a.id() == agent.id()) {
            return Err(ExpertError::DuplicateExpert(agent.id().to_string()));
        }
        self.agents.push(agent);
        Ok(())
    }

    pub fn ids(&self) -> Vec<&str> {
        self.agents.iter().map(|a| a.id()).collect()
    }

    pub fn agents(&self) -> &[Arc<dyn ExpertAgent>] {
        &self.agents
    }

    /// Runs all experts concurrently. Provider, gateway and parse failures
    /// become failure records; audit failures abort.
    pub fn run_all(&self, questions: &QuestionSet, ctx: &ExpertContext<'_>) -> Result<Vec<ExpertOutcome>, ExpertError> {
        // Each expert logs to a private buffer; buffers are flushed to the
        // gateway's sink in roster order so the event log does not depend on
        // thread scheduling.
        let buffers: Vec<Arc<BufferedSink>> = self.agents.iter().map(|_| Arc::new(BufferedSink::new())).collect();
        let lanes: Vec<(Gateway, Toolbox)> = buffers
            .iter()
            .map(|b| {
                let sink: Arc<dyn AuditSink> = b.clone();
                (ctx.gateway.clone().with_audit(sink.clone()), ctx.toolbox.clone().with_audit(sink))
            })
            .collect();
        let results: Vec<Result<ExpertFinding, ExpertError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .agents
                .iter()
                .zip(&lanes)
                .map(|(agent, (gateway, toolbox))| {
                    let lane = ExpertContext {
                        gateway,
                        toolbox,
                        payload: ctx.payload,
                        settings: ctx.settings,
                    };
                    scope.spawn(move || run_expert(agent.as_ref(), questions, &lane))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("expert thread panicked"))
                .collect()
        });
        for buffer in &buffers {
            buffer.flush_into(ctx.gateway.audit().as_ref())?;
        }
        let mut outcomes = Vec::with_capacity(results.len());
        for (agent, result) in self.agents.iter().zip(results) {
            match result {
                Ok(finding) => outcomes.push(ExpertOutcome::Completed(finding)),
                Err(e) if e.is_audit_failure() => return Err(e),
                Err(e) => {
                    log::warn!("expert {} failed: {e}", agent.id());
                    outcomes.push(ExpertOutcome::Failed(ExpertFailure {
                        expert_id: agent.id().to_string(),
                        reason: e.to_string(),
                    }))
                }
            }
        }
        Ok(outcomes)
    }
}
