//! Gap-driven iteration: inspect the analysis for missing evidence and
//! reasoning links, run a bounded number of supplementary searches, and fold
//! the results back in.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{merge_analysis, AnalysisError, AnalysisState, Analyzer};
use crate::catalog::SourceCatalog;
use crate::gateway::{LlmError, LlmGateway, PromptRequest, SearchError, SearchGateway, TemplateId};
use crate::json::{extract_json, list_field, str_field, string_list};
use crate::search::{QueryOrigin, SearchConfig, SearchSession};
use crate::text::tidy;

pub const MAX_QUERIES_PER_ITERATION: usize = 4;
pub const DEFAULT_MAX_ITERATIONS: usize = 2;

#[derive(Debug, Error)]
pub enum GapError {
    #[error(transparent)]
    Provider(#[from] LlmError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GapKind {
    Logical,
    Informational,
}

/// Declaration order is priority order: High sorts first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Importance {
    High,
    Medium,
    Low,
}

impl Importance {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "high" => Some(Importance::High),
            "medium" => Some(Importance::Medium),
            "low" => Some(Importance::Low),
            _ => None,
        }
    }

    pub fn is_significant(self) -> bool {
        self <= Importance::Medium
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchGap {
    pub name: String,
    pub kind: GapKind,
    pub importance: Importance,
    pub reason: String,
    pub queries: Vec<String>,
    /// Whether the missing piece can be inferred from existing facts.
    pub inferable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationBudget {
    pub max_iterations: usize,
}

impl Default for IterationBudget {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

fn parse_gap(v: &serde_json::Value) -> Option<ResearchGap> {
    let kind = match str_field(v, &["type", "kind"])?.to_lowercase().as_str() {
        "logical" => GapKind::Logical,
        "informational" => GapKind::Informational,
        _ => return None,
    };
    let queries: Vec<String> = string_list(v, &["queries"])
        .iter()
        .map(|q| tidy(q))
        .collect();
    if queries.is_empty() {
        return None;
    }
    Some(ResearchGap {
        name: tidy(str_field(v, &["name"])?),
        kind,
        importance: Importance::parse(str_field(v, &["importance"])?)?,
        reason: str_field(v, &["reason"]).map(tidy).unwrap_or_default(),
        queries,
        inferable: v
            .get("inferable")
            .and_then(serde_json::Value::as_bool)
            .unwrap_or(false),
    })
}

pub fn parse_gaps(reply: &str) -> Vec<ResearchGap> {
    let Some(v) = extract_json(reply) else {
        tracing::warn!("unparseable gap reply, assuming no gaps");
        return Vec::new();
    };
    let mut gaps: Vec<ResearchGap> = list_field(&v, &["gaps"])
        .into_iter()
        .flatten()
        .filter_map(parse_gap)
        .collect();
    gaps.sort_by_key(|g| g.importance);
    gaps
}

fn describe_state(state: &AnalysisState) -> (String, String) {
    let hyps = state
        .hypotheses
        .iter()
        .map(|h| {
            format!(
                "{}: {} [{:?}, confidence {:.2}]",
                h.id, h.statement, h.status, h.sigma
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let facts = state
        .facts
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let verdict = state
                .verdict(&f.id)
                .map(|v| format!("{v:?}"))
                .unwrap_or_else(|| "unvalidated".into());
            format!("{}. {} [{}]", i + 1, f.content, verdict)
        })
        .collect::<Vec<_>>()
        .join("\n");
    (hyps, facts)
}

pub fn identify_gaps(
    query: &str,
    state: &AnalysisState,
    catalog: &SourceCatalog,
    iteration: usize,
    llm: &LlmGateway,
) -> Result<Vec<ResearchGap>, LlmError> {
    let (hypotheses, facts) = describe_state(state);
    let reply = llm.complete(
        &PromptRequest::new(TemplateId::GapIdentify)
            .var("iteration", iteration.to_string())
            .var("query", query)
            .var("hypotheses", hypotheses)
            .var(
                "facts",
                if facts.is_empty() {
                    "(none)".into()
                } else {
                    facts
                },
            )
            .var("categories", catalog.categories().join(", ")),
    )?;
    Ok(parse_gaps(&reply.text))
}

/// Supplementary queries for one iteration: significant gaps only, ordered
/// by importance, then gap order, then query order; at most four.
pub fn select_queries(gaps: &[ResearchGap]) -> Vec<String> {
    let mut ordered: Vec<&ResearchGap> = gaps
        .iter()
        .filter(|g| g.importance.is_significant())
        .collect();
    ordered.sort_by_key(|g| g.importance);
    let mut out: Vec<String> = Vec::new();
    for q in ordered.iter().flat_map(|g| g.queries.iter()) {
        if out.len() == MAX_QUERIES_PER_ITERATION {
            break;
        }
        if !out.contains(q) {
            out.push(q.clone());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub gaps_found: Vec<ResearchGap>,
    pub queries: Vec<String>,
    pub results_added: usize,
    pub facts_added: usize,
    pub coverage_before: f64,
    pub coverage_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapLoopOutcome {
    pub state: AnalysisState,
    pub iterations: Vec<IterationRecord>,
    /// Gaps reported by the last identification pass.
    pub remaining_gaps: Vec<ResearchGap>,
    pub degraded: bool,
    pub degraded_reason: Option<String>,
    pub supplementary_queries: usize,
}

/// Everything the loop needs besides the state itself.
pub struct GapLoop<'a> {
    pub analyzer: &'a Analyzer<'a>,
    pub search: &'a SearchGateway,
    pub search_config: SearchConfig,
    pub now: NaiveDate,
    pub budget: IterationBudget,
    /// Coverage score of a state, for the iteration log.
    pub coverage: &'a dyn Fn(&AnalysisState) -> f64,
}

impl<'a> GapLoop<'a> {
    fn iterate(
        &self,
        state: &AnalysisState,
        queries: &[String],
        iteration: usize,
    ) -> Result<(AnalysisState, usize, usize), GapError> {
        let a = self.analyzer;
        let mut session = SearchSession::new(
            self.search,
            a.catalog,
            a.profile,
            self.now,
            self.search_config,
        )
        .with_existing(&state.corpus);
        let mut fresh = Vec::new();
        for q in queries {
            let origin = QueryOrigin {
                task_id: format!("G{iteration}"),
                hypothesis_id: None,
                base_query: q.clone(),
                depth: 0,
            };
            if let Some(found) = session.run_query(q, &origin)? {
                fresh.extend(found);
            }
        }
        let extraction = a.extract(&fresh, &state.hypotheses)?;
        let before = state.facts.len();
        let merged = merge_analysis(state, &extraction.facts, &fresh, &a.subject_tokens());
        let mut next = merged.state;
        let facts_added = next.facts.len() - before;
        if !merged.stale.is_empty() {
            a.reanalyze(&mut next, &merged.stale, facts_added > 0)?;
        }
        Ok((next, fresh.len(), facts_added))
    }

    pub fn run(&self, query: &str, initial: AnalysisState) -> GapLoopOutcome {
        let mut out = GapLoopOutcome {
            state: initial,
            iterations: Vec::new(),
            remaining_gaps: Vec::new(),
            degraded: false,
            degraded_reason: None,
            supplementary_queries: 0,
        };
        for iteration in 1..=self.budget.max_iterations {
            let gaps = match identify_gaps(
                query,
                &out.state,
                self.analyzer.catalog,
                iteration,
                self.analyzer.llm,
            ) {
                Ok(g) => g,
                Err(e) => {
                    out.degraded = true;
                    out.degraded_reason = Some(format!(
                        "gap identification failed in iteration {iteration}: {e}"
                    ));
                    break;
                }
            };
            out.remaining_gaps = gaps.clone();
            let queries = select_queries(&gaps);
            if queries.is_empty() {
                break;
            }
            let coverage_before = (self.coverage)(&out.state);
            match self.iterate(&out.state, &queries, iteration) {
                Ok((next, results_added, facts_added)) => {
                    out.supplementary_queries += queries.len();
                    out.state = next;
                    out.iterations.push(IterationRecord {
                        iteration,
                        gaps_found: gaps,
                        queries,
                        results_added,
                        facts_added,
                        coverage_before,
                        coverage_after: (self.coverage)(&out.state),
                    });
                }
                Err(e) => {
                    tracing::warn!(iteration, error = %e, "gap iteration aborted");
                    out.degraded = true;
                    out.degraded_reason = Some(format!("gap iteration {iteration} aborted: {e}"));
                    break;
                }
            }
        }
        out
    }
}

/// Gap names already seen, for callers that want to report recurrence.
pub fn recurring_gaps(iterations: &[IterationRecord]) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut recurring = BTreeSet::new();
    for it in iterations {
        for g in &it.gaps_found {
            if !seen.insert(g.name.to_lowercase()) {
                recurring.insert(g.name.clone());
            }
        }
    }
    recurring
}
