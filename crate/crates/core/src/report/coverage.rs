//! Research requirements, the coverage matrix and the quality triple.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AnalysisState, Fact, Verdict};
use crate::gateway::{is_valid_url, LlmError, LlmGateway, PromptRequest, TemplateId};
use crate::json::{extract_json, list_field, str_field, string_list};
use crate::planner::Hypothesis;
use crate::text::{content_token_set, normalize_content, tidy};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("coverage needs at least one requirement")]
    EmptyRequirements,
    #[error("quality weights sum to {0}, expected 1")]
    WeightSumInvalid(f64),
    #[error(transparent)]
    Provider(#[from] LlmError),
    #[error("invalid report template {name}: {reason}")]
    Template { name: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CoverageStatus {
    Covered,
    Partial,
    Missing,
}

impl CoverageStatus {
    pub fn credit(self) -> f64 {
        match self {
            CoverageStatus::Covered => 1.0,
            CoverageStatus::Partial => 0.5,
            CoverageStatus::Missing => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: String,
    pub description: String,
    /// Phrases whose presence in a fact marks it as evidence.
    pub keywords: Vec<String>,
    /// Set for requirements that stand for a hypothesis.
    pub hypothesis_id: Option<String>,
    pub status: CoverageStatus,
    pub supporting_fact_ids: Vec<String>,
}

impl Requirement {
    pub fn new(
        id: &str,
        description: &str,
        keywords: Vec<String>,
        hypothesis_id: Option<String>,
    ) -> Self {
        Self {
            id: id.to_string(),
            description: tidy(description),
            keywords,
            hypothesis_id,
            status: CoverageStatus::Missing,
            supporting_fact_ids: Vec::new(),
        }
    }

    /// Hypothesis requirements are evidenced by linked facts; aspect
    /// requirements by facts containing one of their keywords (or, lacking
    /// keywords, at least half the description's content words).
    pub fn is_evidenced_by(&self, fact: &Fact) -> bool {
        if let Some(h) = &self.hypothesis_id {
            return fact.hypothesis_id.as_deref() == Some(h.as_str());
        }
        let words = content_token_set(&fact.content);
        if self.keywords.is_empty() {
            let want = content_token_set(&self.description);
            return !want.is_empty() && 2 * want.intersection(&words).count() >= want.len();
        }
        self.keywords.iter().any(|k| {
            let k = content_token_set(k);
            !k.is_empty() && k.is_subset(&words)
        })
    }
}

/// One requirement per hypothesis plus the query aspects the model names,
/// deduplicated by normalized description.
pub fn derive_requirements(
    query: &str,
    hypotheses: &[Hypothesis],
    llm: &LlmGateway,
) -> Result<Vec<Requirement>, ReportError> {
    let listing = hypotheses
        .iter()
        .map(|h| format!("{}: {}", h.id, h.statement))
        .collect::<Vec<_>>()
        .join("\n");
    let reply = llm.complete(
        &PromptRequest::new(TemplateId::RequirementDecompose)
            .var("query", query)
            .var("hypotheses", listing),
    )?;
    let mut out: Vec<Requirement> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut push = |description: &str,
                    keywords: Vec<String>,
                    hypothesis_id: Option<String>,
                    out: &mut Vec<Requirement>| {
        let description = tidy(description);
        if description.is_empty() || !seen.insert(normalize_content(&description)) {
            return;
        }
        let id = format!("R{}", out.len() + 1);
        out.push(Requirement::new(&id, &description, keywords, hypothesis_id));
    };
    for h in hypotheses {
        push(&h.statement, Vec::new(), Some(h.id.clone()), &mut out);
    }
    match extract_json(&reply.text) {
        Some(v) => {
            for item in list_field(&v, &["requirements", "aspects"])
                .into_iter()
                .flatten()
            {
                if let Some(d) = str_field(item, &["description"]) {
                    push(d, string_list(item, &["keywords"]), None, &mut out);
                }
            }
        }
        None => tracing::warn!("unparseable requirement reply, using hypotheses only"),
    }
    Ok(out)
}

pub fn requirement_status(accepted: usize, verify: usize) -> CoverageStatus {
    if accepted >= 2 {
        CoverageStatus::Covered
    } else if accepted == 1 || verify >= 1 {
        CoverageStatus::Partial
    } else {
        CoverageStatus::Missing
    }
}

/// Mean credit over the statuses: Covered 1, Partial 0.5, Missing 0.
pub fn cov_score(statuses: &[CoverageStatus]) -> Option<f64> {
    if statuses.is_empty() {
        return None;
    }
    Some(statuses.iter().map(|s| s.credit()).sum::<f64>() / statuses.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    pub requirements: Vec<Requirement>,
    pub score: f64,
}

pub fn compute_coverage(
    requirements: &[Requirement],
    state: &AnalysisState,
) -> Result<CoverageMatrix, ReportError> {
    if requirements.is_empty() {
        return Err(ReportError::EmptyRequirements);
    }
    let mut out = Vec::with_capacity(requirements.len());
    for r in requirements {
        let mut accepted = 0;
        let mut verify = 0;
        let mut supporting = Vec::new();
        for f in state.facts.iter().filter(|f| r.is_evidenced_by(f)) {
            match state.verdict(&f.id) {
                Some(Verdict::Accept) => {
                    accepted += 1;
                    supporting.push(f.id.clone());
                }
                Some(Verdict::Verify) => {
                    verify += 1;
                    supporting.push(f.id.clone());
                }
                _ => {}
            }
        }
        let mut r = r.clone();
        r.status = requirement_status(accepted, verify);
        r.supporting_fact_ids = supporting;
        out.push(r);
    }
    let statuses: Vec<CoverageStatus> = out.iter().map(|r| r.status).collect();
    Ok(CoverageMatrix {
        requirements: out,
        score: cov_score(&statuses).expect("non-empty"),
    })
}

/// Coverage score only; 0 when there are no requirements.
pub fn coverage_score(requirements: &[Requirement], state: &AnalysisState) -> f64 {
    compute_coverage(requirements, state)
        .map(|m| m.score)
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for QualityWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0 / 3.0,
            beta: 1.0 / 3.0,
            gamma: 1.0 / 3.0,
        }
    }
}

impl QualityWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, ReportError> {
        let w = Self { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        let sum = self.alpha + self.beta + self.gamma;
        let in_range = [self.alpha, self.beta, self.gamma]
            .iter()
            .all(|w| (0.0..=1.0).contains(w));
        if (sum - 1.0).abs() > 1e-9 || !in_range {
            return Err(ReportError::WeightSumInvalid(sum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityTriple {
    pub c: f64,
    pub a: f64,
    pub t: f64,
    pub composite: f64,
    pub weights: QualityWeights,
}

pub fn composite_quality(
    c: f64,
    a: f64,
    t: f64,
    w: &QualityWeights,
) -> Result<QualityTriple, ReportError> {
    w.validate()?;
    Ok(QualityTriple {
        c,
        a,
        t,
        composite: w.alpha * c + w.beta * a + w.gamma * t,
        weights: *w,
    })
}

/// Share of facts with an Accept verdict; 0 for an empty fact base.
pub fn accuracy(state: &AnalysisState) -> f64 {
    if state.facts.is_empty() {
        return 0.0;
    }
    let accepted = state
        .facts
        .iter()
        .filter(|f| state.verdict(&f.id) == Some(Verdict::Accept))
        .count();
    accepted as f64 / state.facts.len() as f64
}

/// Share of claims (facts and derived facts) whose provenance resolves: a
/// valid source URL for facts, existing basis ids for derivations.
pub fn traceability(state: &AnalysisState) -> f64 {
    let total = state.facts.len() + state.derived.len();
    if total == 0 {
        return 1.0;
    }
    let ids: BTreeSet<&str> = state
        .facts
        .iter()
        .map(|f| f.id.as_str())
        .chain(state.derived.iter().map(|d| d.id.as_str()))
        .collect();
    let facts_ok = state
        .facts
        .iter()
        .filter(|f| is_valid_url(&f.source_url))
        .count();
    let derived_ok = state
        .derived
        .iter()
        .filter(|d| !d.basis_ids.is_empty() && d.basis_ids.iter().all(|b| ids.contains(b.as_str())))
        .count();
    (facts_ok + derived_ok) as f64 / total as f64
}

pub fn compute_quality_triple(
    matrix: &CoverageMatrix,
    state: &AnalysisState,
    weights: &QualityWeights,
) -> Result<QualityTriple, ReportError> {
    composite_quality(matrix.score, accuracy(state), traceability(state), weights)
}
