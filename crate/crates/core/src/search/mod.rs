//! Stage 4: optimized multi-source search with quality scoring and subject
//! locking.

mod optimize;
mod quality;
mod subject;

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use optimize::{has_search_syntax, optimize_query, optimize_with, OptimizerContext};
pub use quality::{
    base_relevance, completeness, freshness, query_relevance, score_result, score_with_rho,
    QualityScore, QualityWeights, BASE_RELEVANCE_SHARE, COMPLETENESS_SATURATION_CHARS,
    FRESHNESS_HALF_LIFE_DAYS, UNKNOWN_DATE_FRESHNESS,
};
pub use subject::{
    subject_relevance, subject_score, ProfileError, SubjectProfile, DEFAULT_LAMBDA, DEFAULT_THETA,
};

use crate::catalog::SourceCatalog;
use crate::gateway::{normalize_url, RawSearchResult, SearchError, SearchGateway, SearchRequest};
use crate::planner::ResearchPlan;
use crate::text::tidy;
use crate::understanding::QueryUnderstanding;

/// Results at or above this quality spawn a follow-up search one level deeper.
pub const FOLLOW_UP_THRESHOLD: f64 = 0.8;
pub const DEFAULT_MAX_RESULTS: usize = 10;

#[derive(Debug, Error)]
pub enum SearchEngineError {
    #[error("research plan has no tasks")]
    EmptyPlan,
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResult {
    pub raw: RawSearchResult,
    pub quality: QualityScore,
    pub subject_rho: f64,
    pub originating_task: String,
    pub hypothesis_id: Option<String>,
    /// The query string that returned this result.
    pub query: String,
    pub depth: usize,
}

impl ScoredResult {
    pub fn key(&self) -> String {
        normalize_url(&self.raw.url).unwrap_or_else(|| self.raw.url.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub d_max: usize,
    pub max_results: usize,
    pub follow_up_threshold: f64,
    pub weights: QualityWeights,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            d_max: crate::understanding::DEFAULT_D_MAX,
            max_results: DEFAULT_MAX_RESULTS,
            follow_up_threshold: FOLLOW_UP_THRESHOLD,
            weights: QualityWeights::default(),
        }
    }
}

/// Where a query came from, for provenance on its results.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOrigin {
    pub task_id: String,
    pub hypothesis_id: Option<String>,
    /// Query the base-relevance dimension is measured against.
    pub base_query: String,
    pub depth: usize,
}

/// Per-run search state: query memo, URL dedup and counters. Shared by the
/// initial plan execution and the gap loop so both obey the same rules.
pub struct SearchSession<'a> {
    gateway: &'a SearchGateway,
    catalog: &'a SourceCatalog,
    profile: Option<&'a SubjectProfile>,
    now: NaiveDate,
    config: SearchConfig,
    issued: BTreeSet<String>,
    results: Vec<ScoredResult>,
    by_key: BTreeMap<String, usize>,
    pub queries_issued: usize,
    pub queries_failed: usize,
    pub discarded: usize,
    pub last_error: Option<SearchError>,
}

impl<'a> SearchSession<'a> {
    pub fn new(
        gateway: &'a SearchGateway,
        catalog: &'a SourceCatalog,
        profile: Option<&'a SubjectProfile>,
        now: NaiveDate,
        config: SearchConfig,
    ) -> Self {
        Self {
            gateway,
            catalog,
            profile,
            now,
            config,
            issued: BTreeSet::new(),
            results: Vec::new(),
            by_key: BTreeMap::new(),
            queries_issued: 0,
            queries_failed: 0,
            discarded: 0,
            last_error: None,
        }
    }

    /// Seed the dedup table with results from an earlier session.
    pub fn with_existing(mut self, existing: &[ScoredResult]) -> Self {
        for r in existing {
            self.absorb(r.clone());
        }
        self
    }

    /// Record a result, keeping the higher-quality instance of a URL.
    /// Returns true when the result is new or replaced a weaker duplicate.
    fn absorb(&mut self, r: ScoredResult) -> bool {
        let key = r.key();
        match self.by_key.get(&key) {
            Some(&i) if self.results[i].quality.composite >= r.quality.composite => false,
            Some(&i) => {
                self.results[i] = r;
                true
            }
            None => {
                self.by_key.insert(key, self.results.len());
                self.results.push(r);
                true
            }
        }
    }

    pub fn score(&self, raw: RawSearchResult, query: &str, origin: &QueryOrigin) -> ScoredResult {
        let rho = self.profile.map_or(1.0, |p| subject_relevance(&raw, p));
        let quality = score_with_rho(
            &raw,
            &origin.base_query,
            rho,
            self.catalog,
            self.now,
            &self.config.weights,
        );
        ScoredResult {
            raw,
            quality,
            subject_rho: rho,
            originating_task: origin.task_id.clone(),
            hypothesis_id: origin.hypothesis_id.clone(),
            query: query.to_string(),
            depth: origin.depth,
        }
    }

    /// Search one query. Already-issued queries are skipped (`Ok(None)`).
    /// Returns the retained results that were new or improved.
    pub fn run_query(
        &mut self,
        query: &str,
        origin: &QueryOrigin,
    ) -> Result<Option<Vec<ScoredResult>>, SearchError> {
        let query = tidy(query);
        if query.is_empty() || !self.issued.insert(query.clone()) {
            return Ok(None);
        }
        self.queries_issued += 1;
        let raw = match self
            .gateway
            .search(&SearchRequest::new(query.clone(), self.config.max_results))
        {
            Ok(raw) => raw,
            Err(e) => {
                self.queries_failed += 1;
                self.last_error = Some(e.clone());
                return Err(e);
            }
        };
        let mut fresh = Vec::new();
        for r in raw {
            let scored = self.score(r, &query, origin);
            if let Some(p) = self.profile {
                if !p.accepts(scored.subject_rho) {
                    self.discarded += 1;
                    continue;
                }
            }
            if self.absorb(scored.clone()) {
                fresh.push(scored);
            }
        }
        Ok(Some(fresh))
    }

    pub fn all_failed(&self) -> bool {
        self.queries_issued > 0 && self.queries_failed == self.queries_issued
    }

    /// Retained results, best first; ties keep first-seen order.
    pub fn results(&self) -> Vec<ScoredResult> {
        let mut out = self.results.clone();
        out.sort_by(|a, b| b.quality.composite.total_cmp(&a.quality.composite));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub results: Vec<ScoredResult>,
    pub queries_issued: usize,
    pub queries_failed: usize,
    /// Results dropped by the subject filter.
    pub discarded: usize,
}

/// Variants searched for a task: each query optimized against the
/// understanding, with the task's leading target source as the site
/// restriction when the understanding names none.
pub fn task_variants(
    task: &crate::planner::ResearchTaskSpec,
    understanding: &QueryUnderstanding,
) -> Vec<String> {
    let mut ctx = OptimizerContext::from_understanding(understanding);
    if ctx.site.is_none() {
        ctx.site = task.target_sources.first().cloned();
    }
    let mut out: Vec<String> = Vec::new();
    for q in &task.queries {
        for v in optimize_with(q, &ctx) {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

/// Search every task's variants, then follow up high-quality results with
/// deeper searches. `d_max` counts search levels: level 0 runs the
/// variants, each further level (up to `d_max - 1`) searches the titles of
/// the previous level's results with Q ≥ 0.8, at most as many per task as
/// the task has variants. Fails only if every query failed.
pub fn execute_plan(
    plan: &ResearchPlan,
    understanding: &QueryUnderstanding,
    profile: Option<&SubjectProfile>,
    gateway: &SearchGateway,
    catalog: &SourceCatalog,
    now: NaiveDate,
    config: SearchConfig,
) -> Result<SearchOutcome, SearchEngineError> {
    if plan.tasks.is_empty() {
        return Err(SearchEngineError::EmptyPlan);
    }
    let mut session = SearchSession::new(gateway, catalog, profile, now, config);
    let levels = config.d_max.max(1);
    for task in &plan.tasks {
        let variants = task_variants(task, understanding);
        let base_query = task.queries[0].clone();
        let mut frontier: Vec<ScoredResult> = Vec::new();
        for depth in 0..levels {
            let queries: Vec<String> = if depth == 0 {
                variants.clone()
            } else {
                frontier
                    .iter()
                    .filter(|r| r.quality.composite >= config.follow_up_threshold)
                    .map(|r| tidy(&r.raw.title))
                    .filter(|t| !t.is_empty())
                    .take(variants.len())
                    .collect()
            };
            if queries.is_empty() {
                break;
            }
            let origin = QueryOrigin {
                task_id: task.id.clone(),
                hypothesis_id: Some(task.hypothesis_id.clone()),
                base_query: base_query.clone(),
                depth,
            };
            let mut next = Vec::new();
            for q in &queries {
                match session.run_query(q, &origin) {
                    Ok(Some(found)) => next.extend(found),
                    Ok(None) => {}
                    Err(SearchError::NoProviders) => return Err(SearchError::NoProviders.into()),
                    Err(e) => {
                        tracing::warn!(task = %task.id, query = %q, error = %e, "query failed")
                    }
                }
            }
            frontier = next;
        }
    }
    if session.all_failed() {
        return Err(session
            .last_error
            .clone()
            .expect("failed query recorded its error")
            .into());
    }
    Ok(SearchOutcome {
        results: session.results(),
        queries_issued: session.queries_issued,
        queries_failed: session.queries_failed,
        discarded: session.discarded,
    })
}
