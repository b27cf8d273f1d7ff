//! Evidence sources for the expert agents: web search, market data for
//! cross-checking, and the institutional knowledge base.
//!
//! Each source has a live HTTP backend and a fixture backend. [`Toolbox`]
//! bundles them and writes one audit event per provider call.

mod knowledge;
mod market;
mod search;
pub mod text;
mod ticker;

use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::audit::{tags, AuditError, AuditSink};

pub use knowledge::{KnowledgeBase, KnowledgeDoc, DEFAULT_EXCERPT_CHARS};
pub use market::{CrossCheckSeries, FixtureMarketData, MarketData, YahooChartClient};
pub use search::{FixtureSearch, HttpSearch, SearchProvider, SearchResult};
pub use ticker::{is_valid_ticker, resolve_ticker, sanitize_ticker, TICKER_SYSTEM_PROMPT};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("query must not be empty")]
    EmptyQuery,
    #[error("no dates requested")]
    NoDates,
    #[error("ticker unknown: {0}")]
    UnknownTicker(String),
    #[error("no closes for {ticker} on any requested date")]
    NoData { ticker: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider returned status {status}: {message}")]
    Status { status: u16, message: String },
    #[error("unexpected provider response: {0}")]
    BadResponse(String),
    #[error("fixture {path}: {message}")]
    Fixture { path: String, message: String },
    #[error("knowledge base {0} has no documents")]
    EmptyKnowledgeBase(String),
    #[error("invalid ticker response `{raw}`")]
    InvalidTicker { raw: String },
    #[error("ticker resolution failed: {0}")]
    Gateway(String),
    #[error("audit failure: {0}")]
    Audit(#[from] AuditError),
}

impl ProviderError {
    pub(crate) fn fixture(path: &std::path::Path, message: impl ToString) -> Self {
        Self::Fixture {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderBackend {
    Fixture,
    Live,
}

/// The expert agents' view of all evidence sources.
#[derive(Clone)]
pub struct Toolbox {
    search: Arc<dyn SearchProvider>,
    market: Arc<dyn MarketData>,
    knowledge: Arc<KnowledgeBase>,
    audit: Arc<dyn AuditSink>,
}

impl std::fmt::Debug for Toolbox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Toolbox")
            .field("search", &self.search.identity())
            .field("market", &self.market.identity())
            .field("knowledge", &self.knowledge.name())
            .finish()
    }
}

impl Toolbox {
    pub fn new(
        search: Arc<dyn SearchProvider>,
        market: Arc<dyn MarketData>,
        knowledge: Arc<KnowledgeBase>,
        audit: Arc<dyn AuditSink>,
    ) -> Self {
        Self {
            search,
            market,
            knowledge,
            audit,
        }
    }

    /// Same sources, recording to a different sink.
    pub fn with_audit(mut self, audit: Arc<dyn AuditSink>) -> Self {
        self.audit = audit;
        self
    }

    pub fn identities(&self) -> Vec<(String, String)> {
        vec![
            ("search".into(), self.search.identity()),
            ("market_data".into(), self.market.identity()),
            ("knowledge".into(), format!("dir:{}", self.knowledge.name())),
        ]
    }

    pub fn knowledge_name(&self) -> &str {
        self.knowledge.name()
    }

    pub fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, ProviderError> {
        let result = self.search.search(query, max_results);
        self.audit.record(
            tags::PROVIDER_SEARCH,
            json!({
                "backend": self.search.identity(),
                "query": query,
                "max_results": max_results,
                "results": result.as_ref().ok(),
                "error": result.as_ref().err().map(|e| e.to_string()),
            }),
        )?;
        result
    }

    pub fn fetch_closes(&self, ticker: &str, dates: &[NaiveDate]) -> Result<CrossCheckSeries, ProviderError> {
        let result = self.market.fetch_closes(ticker, dates);
        self.audit.record(
            tags::PROVIDER_FETCH_CLOSES,
            json!({
                "backend": self.market.identity(),
                "ticker": ticker,
                "dates": dates,
                "result": result.as_ref().ok(),
                "error": result.as_ref().err().map(|e| e.to_string()),
            }),
        )?;
        result
    }

    pub fn retrieve_knowledge(&self, query: &str, k: usize) -> Result<Vec<KnowledgeDoc>, ProviderError> {
        let result = Ok(self.knowledge.retrieve(query, k));
        self.audit.record(
            tags::PROVIDER_KNOWLEDGE,
            json!({
                "backend": format!("dir:{}", self.knowledge.name()),
                "query": query,
                "k": k,
                "results": result.as_ref().ok(),
            }),
        )?;
        result
    }
}
