use std::sync::OnceLock;

use regex::Regex;

use super::ProviderError;
use crate::gateway::template::{bindings, ids};
use crate::gateway::Gateway;
use crate::series::SeriesMetadata;

pub const TICKER_SYSTEM_PROMPT: &str = "You are a financial market data assistant.";
pub const TICKER_ROLE_TAG: &str = "ticker_resolver";

fn ticker_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"^[A-Za-z0-9^.=\-]{1,12}$").expect("valid regex"))
}

pub fn is_valid_ticker(candidate: &str) -> bool {
    ticker_pattern().is_match(candidate)
}

/// Strip whitespace and wrapping quotes/backticks from a model reply.
pub fn sanitize_ticker(raw: &str) -> String {
    let mut s = raw.trim();
    loop {
        let trimmed = s
            .trim_matches(|c: char| matches!(c, '`' | '"' | '\'') || c.is_whitespace());
        if trimmed == s {
            break;
        }
        s = trimmed;
    }
    s.to_string()
}

/// Ask the gateway for the market-data ticker matching `metadata.title`.
pub fn resolve_ticker(metadata: &SeriesMetadata, gateway: &Gateway) -> Result<String, ProviderError> {
    if metadata.title.trim().is_empty() {
        return Err(ProviderError::Gateway("metadata has no TITLE".into()));
    }
    let prompt = gateway
        .templates()
        .render_template(ids::TICKER_RESOLVER, &bindings([("TITLE", metadata.title.clone())]))
        .map_err(|e| ProviderError::Gateway(e.to_string()))?;
    let raw = gateway
        .ask(TICKER_SYSTEM_PROMPT, &prompt, TICKER_ROLE_TAG)
        .map_err(|e| ProviderError::Gateway(e.to_string()))?;
    let ticker = sanitize_ticker(&raw);
    if is_valid_ticker(&ticker) {
        Ok(ticker)
    } else {
        Err(ProviderError::InvalidTicker { raw })
    }
}
