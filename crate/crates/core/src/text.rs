//! Tokenization, normalization and hashing shared across the engine.
//!
//! Every similarity signal in the engine (subject relevance, base relevance,
//! blocking keys for contradiction detection) is built from the same
//! tokenizer so that scores stay consistent between stages.

use std::collections::{BTreeMap, BTreeSet};

use md5::{Digest, Md5};

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been",
    "before", "being", "between", "both", "but", "by", "can", "could", "did", "do", "does",
    "during", "each", "for", "from", "had", "has", "have", "he", "her", "his", "how", "i", "if",
    "in", "into", "is", "it", "its", "more", "most", "no", "not", "of", "on", "or", "other", "our",
    "over", "s", "she", "so", "such", "than", "that", "the", "their", "them", "then", "there",
    "these", "they", "this", "those", "through", "to", "under", "up", "was", "we", "were", "what",
    "when", "where", "which", "while", "who", "will", "with", "would", "you", "your",
];

/// Lowercased alphanumeric tokens, in order.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

fn stem(token: &str) -> String {
    // Plural folding only: "vehicles" -> "vehicle", but not "business" or "status".
    let n = token.chars().count();
    if n > 3
        && token.ends_with('s')
        && !token.ends_with("ss")
        && !token.ends_with("us")
        && !token.ends_with("is")
    {
        token[..token.len() - 1].to_string()
    } else {
        token.to_string()
    }
}

/// Tokens with stopwords removed and plurals folded.
pub fn content_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .map(|t| stem(&t))
        .collect()
}

pub fn content_token_set(text: &str) -> BTreeSet<String> {
    content_tokens(text).into_iter().collect()
}

/// Term-frequency vector over content tokens.
pub fn term_vector<I, S>(tokens: I) -> BTreeMap<String, f64>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut v = BTreeMap::new();
    for t in tokens {
        *v.entry(t.into()).or_insert(0.0) += 1.0;
    }
    v
}

/// Cosine similarity of two term vectors; 0 when either is empty.
pub fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// True when `needle` occurs as a contiguous run of whole tokens in `haystack`.
pub fn contains_token_run(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Lowercase and collapse whitespace. This is the canonical form that content
/// hashes are computed over, for both fact merging and record persistence.
pub fn normalize_content(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn md5_hex(bytes: &[u8]) -> String {
    hex::encode(Md5::digest(bytes))
}

/// MD5 hex digest of the normalized content.
pub fn content_hash(text: &str) -> String {
    md5_hex(normalize_content(text).as_bytes())
}

/// Collapse internal whitespace and trim, preserving case.
pub fn tidy(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
