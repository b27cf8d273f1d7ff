use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::text::{overlap_score, query_terms};
use super::ProviderError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub title: String,
    pub url: String,
    #[serde(default)]
    pub snippet: String,
}

fn well_formed_url(raw: &str) -> bool {
    url::Url::parse(raw)
        .map(|u| matches!(u.scheme(), "http" | "https") && u.host_str().is_some())
        .unwrap_or(false)
}

pub trait SearchProvider: Send + Sync {
    fn identity(&self) -> String;
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, ProviderError>;
}

#[derive(Debug, Clone, Deserialize)]
struct CorpusEntry {
    title: String,
    url: String,
    #[serde(default)]
    snippet: String,
    #[serde(default)]
    body: String,
}

/// Keyword-overlap search over a local JSON corpus of
/// `{title, url, snippet, body}` entries.
#[derive(Debug, Clone)]
pub struct FixtureSearch {
    label: String,
    corpus: Vec<CorpusEntry>,
}

impl FixtureSearch {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path).map_err(|e| ProviderError::fixture(path, e))?;
        let corpus: Vec<CorpusEntry> =
            serde_json::from_str(&text).map_err(|e| ProviderError::fixture(path, e))?;
        if let Some(bad) = corpus.iter().find(|e| !well_formed_url(&e.url)) {
            return Err(ProviderError::fixture(path, format!("malformed url `{}`", bad.url)));
        }
        let label = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("corpus")
            .to_string();
        Ok(Self { label, corpus })
    }
}

impl SearchProvider for FixtureSearch {
    fn identity(&self) -> String {
        format!("fixture:{}", self.label)
    }

    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, ProviderError> {
        if query.trim().is_empty() {
            return Err(ProviderError::EmptyQuery);
        }
        let terms = query_terms(query);
        let mut scored: Vec<((usize, usize), usize)> = self
            .corpus
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                let text = format!("{} {} {}", e.title, e.snippet, e.body);
                overlap_score(&terms, &text).map(|s| (s, i))
            })
            .collect();
        // higher score first, corpus order breaks ties
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(scored
            .into_iter()
            .take(max_results)
            .map(|(_, i)| {
                let e = &self.corpus[i];
                SearchResult {
                    title: e.title.clone(),
                    url: e.url.clone(),
                    snippet: e.snippet.clone(),
                }
            })
            .collect())
    }
}

#[derive(Serialize)]
struct SearchRequest<'a> {
    query: &'a str,
    max_results: usize,
}

#[derive(Deserialize)]
struct SearchResponse {
    results: Vec<LiveHit>,
}

#[derive(Deserialize)]
struct LiveHit {
    title: String,
    url: String,
    #[serde(default, alias = "snippet")]
    content: String,
}

/// LLM-oriented web search API: `POST {base_url}/search` with
/// `{query, max_results}` returning `{results: [{title, url, content}]}`.
pub struct HttpSearch {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpSearch {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            endpoint: format!("{}/search", base_url.trim_end_matches('/')),
            api_key,
        }
    }
}

impl SearchProvider for HttpSearch {
    fn identity(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, ProviderError> {
        if query.trim().is_empty() {
            return Err(ProviderError::EmptyQuery);
        }
        let mut request = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let response = request
            .send_json(SearchRequest { query, max_results })
            .map_err(|e| match e {
                ureq::Error::Status(status, r) => ProviderError::Status {
                    status,
                    message: r.into_string().unwrap_or_default(),
                },
                ureq::Error::Transport(t) => ProviderError::Transport(t.to_string()),
            })?;
        let parsed: SearchResponse = response
            .into_json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        Ok(parsed
            .results
            .into_iter()
            .filter(|h| well_formed_url(&h.url))
            .take(max_results)
            .map(|h| SearchResult {
                title: h.title,
                url: h.url,
                snippet: h.content,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> FixtureSearch {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/providers/search_corpus.json");
        FixtureSearch::load(&path).unwrap()
    }

    #[test]
    fn black_monday_ranked_first() {
        let hits = corpus()
            .search("S&P 500 October 19 1987 percentage drop", 3)
            .unwrap();
        assert!(hits[0].url.ends_with("black-monday-1987"), "{hits:?}");
        assert!(hits.len() <= 3);
    }

    #[test]
    fn empty_query_rejected() {
        assert!(matches!(corpus().search("  ", 3), Err(ProviderError::EmptyQuery)));
    }

    #[test]
    fn no_matches_is_empty() {
        assert!(corpus().search("zzyzx quux", 5).unwrap().is_empty());
    }

    #[test]
    fn deterministic() {
        let c = corpus();
        assert_eq!(c.search("COVID-19 March 2020", 4).unwrap(), c.search("COVID-19 March 2020", 4).unwrap());
    }
}
