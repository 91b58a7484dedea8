//! Four-dimensional result quality: relevance, authority, freshness and
//! completeness.

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::catalog::SourceCatalog;
use crate::gateway::RawSearchResult;
use crate::text::content_token_set;

use super::SubjectProfile;

pub const FRESHNESS_HALF_LIFE_DAYS: f64 = 180.0;
pub const UNKNOWN_DATE_FRESHNESS: f64 = 0.5;
pub const COMPLETENESS_SATURATION_CHARS: usize = 400;
/// Share of base relevance in q_rel; the rest comes from subject relevance.
pub const BASE_RELEVANCE_SHARE: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityWeights {
    pub relevance: f64,
    pub authority: f64,
    pub freshness: f64,
    pub completeness: f64,
}

impl Default for QualityWeights {
    fn default() -> Self {
        Self {
            relevance: 0.4,
            authority: 0.3,
            freshness: 0.2,
            completeness: 0.1,
        }
    }
}

impl QualityWeights {
    pub fn sum(&self) -> f64 {
        self.relevance + self.authority + self.freshness + self.completeness
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub relevance: f64,
    pub authority: f64,
    pub freshness: f64,
    pub completeness: f64,
    pub composite: f64,
}

impl QualityScore {
    pub fn from_dimensions(
        relevance: f64,
        authority: f64,
        freshness: f64,
        completeness: f64,
        w: &QualityWeights,
    ) -> Self {
        let [relevance, authority, freshness, completeness] =
            [relevance, authority, freshness, completeness].map(|x| x.clamp(0.0, 1.0));
        let composite = w.relevance * relevance
            + w.authority * authority
            + w.freshness * freshness
            + w.completeness * completeness;
        Self {
            relevance,
            authority,
            freshness,
            completeness,
            composite: composite.clamp(0.0, 1.0),
        }
    }
}

/// |query tokens ∩ text tokens| / |query tokens|; 0 for a query with no
/// content words.
pub fn base_relevance(query: &str, text: &str) -> f64 {
    let q = content_token_set(query);
    if q.is_empty() {
        return 0.0;
    }
    let t = content_token_set(text);
    q.intersection(&t).count() as f64 / q.len() as f64
}

/// 2^(-age/180); undated sources are neutral, future-dated ones count as new.
pub fn freshness(published: Option<DateTime<Utc>>, now: NaiveDate) -> f64 {
    match published {
        None => UNKNOWN_DATE_FRESHNESS,
        Some(p) => {
            let age = (now - p.date_naive()).num_days().max(0) as f64;
            2f64.powf(-age / FRESHNESS_HALF_LIFE_DAYS).clamp(0.0, 1.0)
        }
    }
}

pub fn completeness(snippet: &str) -> f64 {
    (snippet.chars().count() as f64 / COMPLETENESS_SATURATION_CHARS as f64).min(1.0)
}

/// Relevance blends query overlap with subject relevance `rho`.
pub fn query_relevance(query: &str, result: &RawSearchResult, rho: f64) -> f64 {
    let base = base_relevance(query, &format!("{} {}", result.title, result.snippet));
    BASE_RELEVANCE_SHARE * base + (1.0 - BASE_RELEVANCE_SHARE) * rho
}

/// Without a subject profile every result counts as fully on-subject.
pub fn score_result(
    result: &RawSearchResult,
    query: &str,
    profile: Option<&SubjectProfile>,
    catalog: &SourceCatalog,
    now: NaiveDate,
) -> QualityScore {
    let rho = profile.map_or(1.0, |p| super::subject_relevance(result, p));
    score_with_rho(result, query, rho, catalog, now, &QualityWeights::default())
}

pub fn score_with_rho(
    result: &RawSearchResult,
    query: &str,
    rho: f64,
    catalog: &SourceCatalog,
    now: NaiveDate,
    weights: &QualityWeights,
) -> QualityScore {
    QualityScore::from_dimensions(
        query_relevance(query, result, rho),
        catalog.authority_for_url(&result.url),
        freshness(result.published_at, now),
        completeness(&result.snippet),
        weights,
    )
}
