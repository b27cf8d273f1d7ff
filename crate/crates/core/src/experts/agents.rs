//! The built-in expert agents and their evidence gathering.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde_json::{json, Map, Value};

use super::{ExpertContext, ExpertError};
use crate::gateway::template::ids;
use crate::providers::resolve_ticker;
use crate::providers::text::is_stopword;

pub const WEB_RESEARCH: &str = "web_research";
pub const INSTITUTIONAL: &str = "institutional";
pub const CROSS_CHECK: &str = "cross_check";

/// One specialised verifier. The gateway call and verdict parsing are shared;
/// an agent only decides its instruction and what evidence to attach.
pub trait ExpertAgent: Send + Sync {
    fn id(&self) -> &str;

    fn template_id(&self) -> &str;

    fn template_bindings(&self, _ctx: &ExpertContext<'_>) -> BTreeMap<String, String> {
        BTreeMap::new()
    }

    /// Evidence blocks in the order they were gathered.
    fn gather_evidence(&self, questions: &super::QuestionSet, ctx: &ExpertContext<'_>) -> Result<Vec<String>, ExpertError>;
}

const QUERY_DROP: &[&str] = &[
    "additionally", "can", "confirm", "could", "did", "does", "check", "here", "if", "is", "overall",
    "verify", "was", "were", "what", "whether", "why", "how", "the", "there", "this", "these",
];
const MAX_QUERY_TERMS: usize = 12;

/// Search query for a question: numbers, dates and capitalised words, minus
/// question words, deduplicated case-insensitively.
pub fn search_query(question: &str) -> String {
    let mut seen = BTreeSet::new();
    let mut terms = Vec::new();
    for raw in question.split_whitespace() {
        let token = raw.trim_matches(|c: char| !(c.is_alphanumeric() || c == '&' || c == '-'));
        let token = token.trim_end_matches('-');
        if token.is_empty() {
            continue;
        }
        let lower = token.to_lowercase();
        let has_digit = token.chars().any(|c| c.is_ascii_digit());
        let capitalised = token.chars().next().is_some_and(char::is_uppercase);
        if !(has_digit || capitalised) || QUERY_DROP.contains(&lower.as_str()) || is_stopword(&lower) {
            continue;
        }
        if seen.insert(lower) {
            terms.push(token.to_string());
        }
        if terms.len() == MAX_QUERY_TERMS {
            break;
        }
    }
    if terms.is_empty() {
        question.chars().take(100).collect()
    } else {
        terms.join(" ")
    }
}

pub struct WebResearchExpert;

impl ExpertAgent for WebResearchExpert {
    fn id(&self) -> &str {
        WEB_RESEARCH
    }

    fn template_id(&self) -> &str {
        ids::WEB_RESEARCH
    }

    fn gather_evidence(&self, questions: &super::QuestionSet, ctx: &ExpertContext<'_>) -> Result<Vec<String>, ExpertError> {
        let mut evidence = Vec::new();
        for q in &questions.questions {
            let query = search_query(&q.text);
            let results = ctx.toolbox.search(&query, ctx.settings.search_results)?;
            let mut block = format!("Search results for question {} (query: {query}):", q.index);
            if results.is_empty() {
                block.push_str("\n- no results");
            }
            for r in results {
                block.push_str(&format!("\n- {} <{}>: {}", r.title, r.url, r.snippet));
            }
            evidence.push(block);
        }
        Ok(evidence)
    }
}

pub struct InstitutionalExpert;

impl ExpertAgent for InstitutionalExpert {
    fn id(&self) -> &str {
        INSTITUTIONAL
    }

    fn template_id(&self) -> &str {
        ids::INSTITUTIONAL
    }

    fn template_bindings(&self, ctx: &ExpertContext<'_>) -> BTreeMap<String, String> {
        BTreeMap::from([("Knowledge base".to_string(), ctx.toolbox.knowledge_name().to_string())])
    }

    fn gather_evidence(&self, questions: &super::QuestionSet, ctx: &ExpertContext<'_>) -> Result<Vec<String>, ExpertError> {
        let mut evidence = Vec::new();
        for q in &questions.questions {
            let docs = ctx.toolbox.retrieve_knowledge(&q.text, ctx.settings.knowledge_excerpts)?;
            let mut block = format!("Knowledge base excerpts for question {}:", q.index);
            if docs.is_empty() {
                block.push_str("\n- no matching excerpts");
            }
            for doc in docs {
                block.push_str(&format!("\n[{}] {}\n{}", doc.doc_id, doc.title, doc.body));
            }
            evidence.push(block);
        }
        Ok(evidence)
    }
}

pub struct CrossCheckExpert;

fn decimal_value(d: Decimal) -> Value {
    serde_json::from_str(&d.to_string()).expect("decimal is a JSON number")
}

fn percent_change(prev: Decimal, close: Decimal) -> Option<Decimal> {
    if prev.is_zero() {
        return None;
    }
    let change = Decimal::ONE_HUNDRED * (close - prev) / prev;
    Some(change.round_sf(12).unwrap_or(change).normalize())
}

impl ExpertAgent for CrossCheckExpert {
    fn id(&self) -> &str {
        CROSS_CHECK
    }

    fn template_id(&self) -> &str {
        ids::CROSS_CHECK
    }

    fn gather_evidence(&self, _questions: &super::QuestionSet, ctx: &ExpertContext<'_>) -> Result<Vec<String>, ExpertError> {
        let ticker = resolve_ticker(&ctx.payload.metadata, ctx.gateway)?;
        let lookback = i64::from(ctx.settings.lookback_days);
        let mut wanted: BTreeSet<NaiveDate> = BTreeSet::new();
        for date in ctx.payload.data.keys() {
            for back in 0..=lookback {
                wanted.insert(*date - Duration::days(back));
            }
        }
        let wanted: Vec<NaiveDate> = wanted.into_iter().collect();
        let fetched = ctx.toolbox.fetch_closes(&ticker, &wanted)?;

        let mut closes = Map::new();
        for (date, close) in &fetched.closes {
            closes.insert(date.to_string(), decimal_value(*close));
        }
        let data = json!({ "ticker": ticker, "closes": Value::Object(closes) });

        let tolerance = ctx.settings.cross_check_tolerance_pp;
        let mut lines = vec![format!(
            "Derived daily percent changes from {ticker} closes (tolerance ±{tolerance} pp):"
        )];
        for (date, payload_value) in &ctx.payload.data {
            let close = fetched.closes.get(date);
            let prev = fetched.closes.range(..*date).next_back();
            let line = match (close, payload_value) {
                (None, Some(v)) => format!("- {date}: source has no close; payload value {v}"),
                (None, None) => format!("- {date}: source has no close; payload value null"),
                (Some(c), value) => {
                    let derived = prev.and_then(|(_, p)| percent_change(*p, *c));
                    let mut line = format!("- {date}: close {c}");
                    if let (Some((pd, p)), Some(change)) = (prev, derived) {
                        line.push_str(&format!(", previous close {p} on {pd}, derived change {change}%"));
                    }
                    match (value, derived) {
                        (Some(v), Some(change)) => {
                            let gap = (change - *v).abs().to_f64().unwrap_or(f64::INFINITY);
                            let verdict = if gap <= tolerance + 1e-12 { "consistent" } else { "inconsistent" };
                            line.push_str(&format!("; payload value {v}, {verdict}"));
                        }
                        (Some(v), None) => line.push_str(&format!("; payload value {v}, no previous close to compare")),
                        (None, _) => line.push_str("; payload value null but the source reports a close"),
                    }
                    line
                }
            };
            lines.push(line);
        }
        Ok(vec![
            format!("Closes from market data (JSON):\n{data}"),
            lines.join("\n"),
        ])
    }
}
