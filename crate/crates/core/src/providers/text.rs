//! Tokenization and keyword-overlap scoring shared by the fixture backends.

use std::collections::BTreeSet;

const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "all", "also", "am", "an", "and", "any", "are", "as",
    "at", "be", "been", "before", "being", "between", "both", "but", "by", "can", "could", "did",
    "do", "does", "during", "each", "for", "from", "had", "has", "have", "here", "how", "if",
    "in", "into", "is", "it", "its", "may", "more", "most", "no", "not", "of", "on", "or",
    "other", "our", "over", "please", "so", "some", "such", "than", "that", "the", "their",
    "them", "then", "there", "these", "they", "this", "those", "to", "under", "until", "up",
    "very", "was", "we", "were", "what", "when", "where", "whether", "which", "while", "who",
    "why", "will", "with", "would", "you", "your",
];

pub fn is_stopword(term: &str) -> bool {
    STOPWORDS.binary_search(&term).is_ok()
}

/// Lowercased alphanumeric runs, minus stopwords and single letters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !is_stopword(t))
        .filter(|t| t.chars().count() > 1 || t.chars().all(|c| c.is_ascii_digit()))
        .collect()
}

pub fn query_terms(query: &str) -> BTreeSet<String> {
    tokenize(query).into_iter().collect()
}

/// Overlap score of `text` against query terms: distinct terms matched, then
/// total occurrences of matched terms. `None` when nothing matches.
pub fn overlap_score(terms: &BTreeSet<String>, text: &str) -> Option<(usize, usize)> {
    let tokens = tokenize(text);
    let mut distinct = 0;
    let mut total = 0;
    for term in terms {
        let tf = tokens.iter().filter(|t| *t == term).count();
        if tf > 0 {
            distinct += 1;
            total += tf;
        }
    }
    (distinct > 0).then_some((distinct, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopwords_sorted_for_binary_search() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn tokenize_drops_noise() {
        assert_eq!(
            tokenize("Was the S&P 500 down on October 19, 1987?"),
            vec!["500", "down", "october", "19", "1987"]
        );
    }

    #[test]
    fn overlap_counts() {
        let terms = query_terms("black monday crash");
        assert_eq!(overlap_score(&terms, "Black Monday: a crash. Crash!"), Some((3, 4)));
        assert_eq!(overlap_score(&terms, "quiet day"), None);
    }
}
