//! The Correct / Incorrect / Uncertain reply protocol.
//!
//! Two reply shapes are accepted:
//!
//! * per-item: numbered items, each opening with a verdict token (list
//!   markers and bold markup allowed before it);
//! * global: one verdict token before any numbering, applied to every
//!   question, with the item texts kept as reasoning.
//!
//! Token matching is case-insensitive on word boundaries. Under the per-item
//! shape an item without a token, or a question without an item, becomes a
//! flagged `Uncertain` so the result always covers every question.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::listing::split_listing;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Correct,
    Incorrect,
    Uncertain,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::Correct, Verdict::Incorrect, Verdict::Uncertain];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Correct => "Correct",
            Self::Incorrect => "Incorrect",
            Self::Uncertain => "Uncertain",
        }
    }

    pub fn letter(&self) -> char {
        self.as_str().chars().next().expect("non-empty")
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "correct" => Ok(Self::Correct),
            "incorrect" => Ok(Self::Incorrect),
            "uncertain" => Ok(Self::Uncertain),
            other => Err(format!("not a verdict: {other}")),
        }
    }
}

pub const UNPARSED_REASONING: &str = "unparsed";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub verdict: Verdict,
    pub reasoning: String,
    /// Set when the verdict was not stated and defaulted to Uncertain.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unparsed: bool,
}

impl VerdictEntry {
    fn parsed(verdict: Verdict, reasoning: &str) -> Self {
        let reasoning = reasoning.trim();
        Self {
            verdict,
            reasoning: if reasoning.is_empty() {
                format!("{verdict} (no reasoning given)")
            } else {
                reasoning.to_string()
            },
            unparsed: false,
        }
    }

    fn unparsed() -> Self {
        Self {
            verdict: Verdict::Uncertain,
            reasoning: UNPARSED_REASONING.to_string(),
            unparsed: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyShape {
    PerItem,
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedVerdicts {
    pub shape: ReplyShape,
    pub entries: BTreeMap<usize, VerdictEntry>,
}

impl ParsedVerdicts {
    pub fn has_warnings(&self) -> bool {
        self.entries.values().any(|e| e.unparsed)
    }

    pub fn verdicts(&self) -> Vec<Verdict> {
        self.entries.values().map(|e| e.verdict).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerdictError {
    #[error("question count must be at least 1")]
    NoQuestions,
    #[error("reply matches neither verdict shape: {raw}")]
    Unrecognized { raw: String },
}

fn leading_token() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^[\s*_#>\[\-•]*(correct|incorrect|uncertain)\b[\s*_\]]*[:,.;!\-–—]*\s*")
            .expect("valid regex")
    })
}

/// Verdict at the very start of `text` and the remainder after it.
pub fn split_leading_verdict(text: &str) -> Option<(Verdict, &str)> {
    let caps = leading_token().captures(text)?;
    let verdict = caps[1].parse().ok()?;
    let end = caps.get(0).expect("whole match").end();
    Some((verdict, &text[end..]))
}

pub fn parse_verdicts(raw: &str, question_count: usize) -> Result<ParsedVerdicts, VerdictError> {
    if question_count == 0 {
        return Err(VerdictError::NoQuestions);
    }
    let listing = split_listing(raw);
    let item_verdicts: Vec<Option<(Verdict, &str)>> = listing
        .items
        .iter()
        .map(|item| split_leading_verdict(&item.text))
        .collect();

    if let Some((global, rest)) = split_leading_verdict(&listing.preamble) {
        let mut entries = BTreeMap::new();
        for index in 1..=question_count {
            let entry = match (listing.items.get(index - 1), item_verdicts.get(index - 1)) {
                // an item's own token is more specific than the global one
                (_, Some(Some((v, reasoning)))) => VerdictEntry::parsed(*v, reasoning),
                (Some(item), _) => VerdictEntry::parsed(global, &item.text),
                (None, _) => VerdictEntry::parsed(global, rest),
            };
            entries.insert(index, entry);
        }
        return Ok(ParsedVerdicts {
            shape: ReplyShape::Global,
            entries,
        });
    }

    if item_verdicts.iter().any(Option::is_some) {
        let entries = (1..=question_count)
            .map(|index| {
                let entry = match item_verdicts.get(index - 1) {
                    Some(Some((v, reasoning))) => VerdictEntry::parsed(*v, reasoning),
                    _ => VerdictEntry::unparsed(),
                };
                (index, entry)
            })
            .collect();
        return Ok(ParsedVerdicts {
            shape: ReplyShape::PerItem,
            entries,
        });
    }

    Err(VerdictError::Unrecognized {
        raw: raw.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_case_single() {
        let p = parse_verdicts("correct. fine.", 1).unwrap();
        assert_eq!(p.entries[&1].verdict, Verdict::Correct);
        assert_eq!(p.entries[&1].reasoning, "fine.");
        assert_eq!(p.shape, ReplyShape::Global);
    }

    #[test]
    fn incorrect_is_not_correct() {
        let p = parse_verdicts("1. Incorrect: wrong sign\n2. **Correct** - ok", 2).unwrap();
        assert_eq!(p.verdicts(), vec![Verdict::Incorrect, Verdict::Correct]);
        assert_eq!(p.entries[&2].reasoning, "ok");
    }

    #[test]
    fn word_boundary_required() {
        assert!(split_leading_verdict("Correctly stated").is_none());
        assert!(split_leading_verdict("Uncertainty remains").is_none());
    }

    #[test]
    fn missing_item_degrades_to_flagged_uncertain() {
        let p = parse_verdicts("1. Correct: a\n2. no verdict here", 3).unwrap();
        assert_eq!(p.entries.len(), 3);
        assert_eq!(p.entries[&2], VerdictEntry::unparsed());
        assert_eq!(p.entries[&3].verdict, Verdict::Uncertain);
        assert!(p.has_warnings());
    }

    #[test]
    fn unrecognized_carries_raw() {
        let err = parse_verdicts("I could not decide.", 2).unwrap_err();
        assert_eq!(
            err,
            VerdictError::Unrecognized {
                raw: "I could not decide.".into()
            }
        );
        assert!(parse_verdicts("1. maybe\n2. perhaps", 2).is_err());
    }

    #[test]
    fn zero_questions() {
        assert_eq!(parse_verdicts("Correct", 0).unwrap_err(), VerdictError::NoQuestions);
    }

    #[test]
    fn empty_reasoning_filled() {
        let p = parse_verdicts("1. Correct\n2. Uncertain:", 2).unwrap();
        assert!(!p.entries[&1].reasoning.is_empty());
        assert!(!p.entries[&2].reasoning.is_empty());
    }
}
