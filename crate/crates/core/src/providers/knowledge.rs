use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::text::{overlap_score, query_terms};
use super::ProviderError;

pub const DEFAULT_EXCERPT_CHARS: usize = 1200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeDoc {
    pub doc_id: String,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone)]
struct Excerpt {
    doc_id: String,
    title: String,
    text: String,
}

/// A directory of plain-text documents, split into paragraph-aligned
/// excerpts and ranked by term-frequency overlap.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    name: String,
    excerpts: Vec<Excerpt>,
}

fn split_excerpts(body: &str, window: usize) -> Vec<String> {
    if body.chars().count() <= window {
        return vec![body.to_string()];
    }
    let mut out = Vec::new();
    let mut current = String::new();
    for para in body.split("\n\n").map(str::trim).filter(|p| !p.is_empty()) {
        if !current.is_empty() && current.chars().count() + para.chars().count() + 2 > window {
            out.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push_str("\n\n");
        }
        current.push_str(para);
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

impl KnowledgeBase {
    pub fn load(dir: &Path) -> Result<Self, ProviderError> {
        Self::load_with_window(dir, DEFAULT_EXCERPT_CHARS)
    }

    pub fn load_with_window(dir: &Path, window: usize) -> Result<Self, ProviderError> {
        let entries = fs::read_dir(dir).map_err(|e| ProviderError::fixture(dir, e))?;
        let mut paths: Vec<_> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("txt" | "md")))
            .collect();
        paths.sort();
        let mut excerpts = Vec::new();
        for path in &paths {
            let text = fs::read_to_string(path).map_err(|e| ProviderError::fixture(path, e))?;
            let text = text.trim();
            let (title, body) = match text.split_once('\n') {
                Some((first, rest)) if !rest.trim().is_empty() => (first.trim(), rest.trim()),
                _ => ("", text),
            };
            if body.is_empty() {
                continue;
            }
            let doc_id = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            let title = if title.is_empty() { doc_id.clone() } else { title.to_string() };
            let chunks = split_excerpts(body, window.max(1));
            let single = chunks.len() == 1;
            for (i, chunk) in chunks.into_iter().enumerate() {
                excerpts.push(Excerpt {
                    doc_id: if single { doc_id.clone() } else { format!("{doc_id}#{}", i + 1) },
                    title: title.clone(),
                    text: chunk,
                });
            }
        }
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("knowledge")
            .to_string();
        if excerpts.is_empty() {
            return Err(ProviderError::EmptyKnowledgeBase(dir.display().to_string()));
        }
        Ok(Self { name, excerpts })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn retrieve(&self, query: &str, k: usize) -> Vec<KnowledgeDoc> {
        if k == 0 {
            return Vec::new();
        }
        let terms = query_terms(query);
        let mut scored: Vec<((usize, usize), usize)> = self
            .excerpts
            .iter()
            .enumerate()
            .filter_map(|(i, e)| overlap_score(&terms, &format!("{}\n{}", e.title, e.text)).map(|s| (s, i)))
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        scored
            .into_iter()
            .take(k)
            .map(|(_, i)| {
                let e = &self.excerpts[i];
                KnowledgeDoc {
                    doc_id: e.doc_id.clone(),
                    title: e.title.clone(),
                    body: e.text.clone(),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_doc_base() -> (tempfile::TempDir, KnowledgeBase) {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("crises.txt"),
            "Financial crises\nBlack Monday in October 1987 was a global stock market crash.",
        )
        .unwrap();
        fs::write(
            dir.path().join("indices.txt"),
            "Index basics\nIndices are published daily. Monday openings can gap.",
        )
        .unwrap();
        let kb = KnowledgeBase::load(dir.path()).unwrap();
        (dir, kb)
    }

    #[test]
    fn crisis_doc_first() {
        // crises.txt matches black, monday, 1987, crash (4 terms);
        // indices.txt only matches monday (1 term)
        let (_dir, kb) = two_doc_base();
        let hits = kb.retrieve("Black Monday 1987 crash", 2);
        assert_eq!(hits[0].doc_id, "crises.txt");
        assert_eq!(hits.len(), 2);
        assert!(hits[0].body.contains("global stock market crash"));
    }

    #[test]
    fn k_zero_and_no_overlap() {
        let (_dir, kb) = two_doc_base();
        assert!(kb.retrieve("Black Monday", 0).is_empty());
        assert!(kb.retrieve("zebra quagga", 3).is_empty());
    }

    #[test]
    fn empty_directory_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            KnowledgeBase::load(dir.path()),
            Err(ProviderError::EmptyKnowledgeBase(_))
        ));
    }

    #[test]
    fn long_documents_split_on_paragraphs() {
        let dir = tempfile::tempdir().unwrap();
        let body = (0..6)
            .map(|i| format!("paragraph {i} mentions volatility {}", "x".repeat(60)))
            .collect::<Vec<_>>()
            .join("\n\n");
        fs::write(dir.path().join("long.txt"), format!("Long\n{body}")).unwrap();
        let kb = KnowledgeBase::load_with_window(dir.path(), 200).unwrap();
        let hits = kb.retrieve("volatility", 10);
        assert!(hits.len() > 1);
        assert!(hits.iter().all(|h| h.body.chars().count() <= 200));
        assert!(hits[0].doc_id.starts_with("long.txt#"));
    }
}
