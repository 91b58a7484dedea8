//! Authoritative source catalog shared by the planner (target sources) and
//! the quality scorer (authority dimension).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::url_host;

/// Authority of sources the catalog does not know.
pub const DEFAULT_AUTHORITY: f64 = 0.5;
pub const DEFAULT_CATEGORY: &str = "general";

const DEFAULT_CATALOG: &str = include_str!("../data/source_catalog.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    /// Domain suffix, e.g. `gov.cn` matches `www.miit.gov.cn`.
    pub pattern: String,
    pub authority: f64,
    pub category: String,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid catalog: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceCatalog {
    entries: Vec<CatalogEntry>,
}

impl Default for SourceCatalog {
    fn default() -> Self {
        Self::from_json(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }
}

impl SourceCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self, CatalogError> {
        let mut clean = Vec::with_capacity(entries.len());
        for mut e in entries {
            if !(0.0..=1.0).contains(&e.authority) {
                return Err(CatalogError::Parse(format!(
                    "authority {} for {:?} outside [0, 1]",
                    e.authority, e.pattern
                )));
            }
            e.pattern = e.pattern.trim().trim_start_matches('.').to_lowercase();
            if e.pattern.is_empty() {
                return Err(CatalogError::Parse("empty pattern".into()));
            }
            clean.push(e);
        }
        Ok(Self { entries: clean })
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let entries: Vec<CatalogEntry> =
            serde_json::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    /// Longest matching pattern for a host.
    pub fn lookup_host(&self, host: &str) -> Option<&CatalogEntry> {
        let host = host.trim_end_matches('.').to_lowercase();
        self.entries
            .iter()
            .filter(|e| host == e.pattern || host.ends_with(&format!(".{}", e.pattern)))
            .max_by_key(|e| e.pattern.len())
    }

    pub fn authority_for_url(&self, url: &str) -> f64 {
        url_host(url)
            .and_then(|h| self.lookup_host(&h).map(|e| e.authority))
            .unwrap_or(DEFAULT_AUTHORITY)
    }

    pub fn category_for_url(&self, url: &str) -> &str {
        url_host(url)
            .and_then(|h| self.lookup_host(&h).map(|e| e.category.as_str()))
            .unwrap_or(DEFAULT_CATEGORY)
    }

    /// Distinct categories, sorted.
    pub fn categories(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.category.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn has_category(&self, category: &str) -> bool {
        self.entries.iter().any(|e| e.category == category)
    }

    /// Patterns of the given categories, most authoritative first.
    pub fn patterns_in(&self, categories: &[String]) -> Vec<String> {
        let mut picked: Vec<&CatalogEntry> = self
            .entries
            .iter()
            .filter(|e| categories.contains(&e.category))
            .collect();
        picked.sort_by(|a, b| {
            b.authority
                .total_cmp(&a.authority)
                .then_with(|| {
                    let ia = categories.iter().position(|c| *c == a.category);
                    let ib = categories.iter().position(|c| *c == b.category);
                    ia.cmp(&ib)
                })
                .then_with(|| b.pattern.len().cmp(&a.pattern.len()))
                .then_with(|| a.pattern.cmp(&b.pattern))
        });
        picked.into_iter().map(|e| e.pattern.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn authority_levels() {
        let c = SourceCatalog::default();
        assert_eq!(
            c.authority_for_url("https://www.miit.gov.cn/n1146290/index.html"),
            1.0
        );
        assert_eq!(
            c.authority_for_url("https://www.reuters.com/business/autos"),
            0.85
        );
        assert_eq!(
            c.authority_for_url("https://someblog.example.com/post"),
            0.5
        );
        assert_eq!(c.authority_for_url("garbage"), 0.5);
    }

    #[test]
    fn longest_suffix_wins_and_labels_are_respected() {
        let c = SourceCatalog::default();
        assert_eq!(c.category_for_url("https://www.court.gov.cn/x"), "judicial");
        assert_eq!(c.category_for_url("https://english.gov.cn/x"), "government");
        // suffix match is label aligned: "notgov.cn" is not under gov.cn
        assert_eq!(c.category_for_url("https://notgov.cn/x"), DEFAULT_CATEGORY);
    }

    #[test]
    fn invalid_authority_rejected() {
        let err = SourceCatalog::from_json(
            r#"[{"pattern": "x.com", "authority": 1.2, "category": "c"}]"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn patterns_ordered_by_authority() {
        let c = SourceCatalog::default();
        let p = c.patterns_in(&["financial".into(), "patent".into()]);
        assert_eq!(p[0], "cnipa.gov.cn");
        assert!(
            p.iter().position(|x| x == "bloomberg.com") > p.iter().position(|x| x == "wipo.int")
        );
    }
}
