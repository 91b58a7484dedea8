//! Stage 7: coverage, quality and the final report document.

mod coverage;
mod render;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use coverage::{
    accuracy, composite_quality, compute_coverage, compute_quality_triple, cov_score,
    coverage_score, derive_requirements, requirement_status, traceability, CoverageMatrix,
    CoverageStatus, QualityTriple, QualityWeights, ReportError, Requirement,
};
pub use render::{render_markdown, ReportTemplate, TemplateSet};

use crate::analysis::{
    AnalysisState, Certainty, Contradiction, KnowledgeGraph, ResolutionStrategy, Verdict,
};
use crate::gap::{GapKind, Importance, IterationRecord, ResearchGap};
use crate::gateway::{LlmGateway, PromptRequest, TemplateId};
use crate::planner::{HypothesisStatus, Stance};
use crate::text::tidy;

pub const ACCURACY_NOTE: &str =
    "Accuracy is measured as the share of facts accepted by multi-source \
cross-validation; it is not checked against independent ground truth.";
pub const DEGRADED_NOTE: &str = "Supplementary research was cut short by a provider failure; \
findings reflect the evidence gathered before the failure.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisEntry {
    pub id: String,
    pub statement: String,
    pub rationale: String,
    pub verification_method: String,
    pub expected_outcomes: String,
    pub status: HypothesisStatus,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactEntry {
    pub id: String,
    pub content: String,
    pub source_url: String,
    pub source_title: String,
    pub timestamp: Option<String>,
    pub hypothesis_id: Option<String>,
    pub stance: Stance,
    /// Confidence after validation and any contested-claim reduction.
    pub confidence: f64,
    pub verdict: Option<Verdict>,
    pub confirming_sources: usize,
    pub addressing_sources: usize,
    pub needs_verification: bool,
    pub annotations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedEntry {
    pub id: String,
    pub content: String,
    pub basis_ids: Vec<String>,
    pub reasoning_logic: String,
    pub certainty: Certainty,
    pub strength: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub name: String,
    pub kind: GapKind,
    pub importance: Importance,
    pub reason: String,
    pub inferable: bool,
    pub suggested_queries: Vec<String>,
}

impl From<&ResearchGap> for GapEntry {
    fn from(g: &ResearchGap) -> Self {
        Self {
            name: g.name.clone(),
            kind: g.kind,
            importance: g.importance,
            reason: g.reason.clone(),
            inferable: g.inferable,
            suggested_queries: g.queries.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub title: String,
    pub query: String,
    pub domain: String,
    pub template: String,
    pub summary: String,
    pub hypotheses: Vec<HypothesisEntry>,
    pub facts: Vec<FactEntry>,
    pub derived_facts: Vec<DerivedEntry>,
    pub contradictions: Vec<Contradiction>,
    pub coverage: CoverageMatrix,
    pub gaps: Vec<GapEntry>,
    pub gap_iterations: Vec<IterationRecord>,
    pub quality: QualityTriple,
    pub knowledge_graph: KnowledgeGraph,
    pub degraded: bool,
    pub notes: Vec<String>,
    pub generated_at: String,
}

impl ReportDocument {
    /// Pretty JSON with a trailing newline; byte-stable for equal documents.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Everything the report is assembled from.
pub struct ReportInputs<'a> {
    pub query: &'a str,
    pub domain: &'a str,
    pub state: &'a AnalysisState,
    pub requirements: &'a [Requirement],
    pub remaining_gaps: &'a [ResearchGap],
    pub iterations: &'a [IterationRecord],
    pub knowledge_graph: KnowledgeGraph,
    pub summary: String,
    pub weights: QualityWeights,
    pub degraded: bool,
    pub generated_at: String,
}

fn fact_annotations(state: &AnalysisState) -> BTreeMap<String, Vec<String>> {
    let mut notes: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, c) in state.contradictions.iter().enumerate() {
        let tag = format!("C{}", i + 1);
        match (&c.strategy_used, &c.preferred) {
            (ResolutionStrategy::AnnotatedUnresolved, _) | (_, None) => {
                for id in &c.fact_ids {
                    let others: Vec<&str> = c
                        .fact_ids
                        .iter()
                        .filter(|o| *o != id)
                        .map(String::as_str)
                        .collect();
                    let source = state
                        .fact(id)
                        .map(|f| f.source_url.as_str())
                        .unwrap_or("unknown source");
                    notes.entry(id.clone()).or_default().push(format!(
                        "Contested ({tag}): perspective of {source}; conflicts with {}",
                        others.join(", ")
                    ));
                }
            }
            (strategy, Some(winner)) => {
                for id in c.fact_ids.iter().filter(|id| *id != winner) {
                    notes
                        .entry(id.clone())
                        .or_default()
                        .push(format!("Superseded by {winner} ({tag}, {strategy:?})"));
                }
                notes
                    .entry(winner.clone())
                    .or_default()
                    .push(format!("Preferred in conflict {tag} ({strategy:?})"));
            }
        }
    }
    notes
}

pub fn build_report(
    inputs: ReportInputs<'_>,
    templates: &TemplateSet,
) -> Result<ReportDocument, ReportError> {
    let state = inputs.state;
    let template = templates.select(inputs.domain);
    let coverage = compute_coverage(inputs.requirements, state)?;
    let quality = compute_quality_triple(&coverage, state, &inputs.weights)?;
    let leaf = state.leaf_confidences();
    let mut annotations = fact_annotations(state);

    let facts = state
        .facts
        .iter()
        .map(|f| {
            let v = state.validations.get(&f.id);
            let verdict = v.map(|v| v.verdict);
            FactEntry {
                id: f.id.clone(),
                content: f.content.clone(),
                source_url: f.source_url.clone(),
                source_title: f.source_title.clone(),
                timestamp: f.timestamp.map(|d| d.to_string()),
                hypothesis_id: f.hypothesis_id.clone(),
                stance: f.stance,
                confidence: leaf[&f.id],
                verdict,
                confirming_sources: v.map_or(0, |v| v.confirming_sources),
                addressing_sources: v.map_or(0, |v| v.addressing_sources),
                needs_verification: verdict == Some(Verdict::Verify),
                annotations: annotations.remove(&f.id).unwrap_or_default(),
            }
        })
        .collect();

    let mut notes = vec![ACCURACY_NOTE.to_string()];
    if inputs.degraded {
        notes.push(DEGRADED_NOTE.to_string());
    }

    Ok(ReportDocument {
        title: format!("{}: {}", template.title_prefix, tidy(inputs.query)),
        query: inputs.query.to_string(),
        domain: inputs.domain.to_string(),
        template: template.name.clone(),
        summary: inputs.summary,
        hypotheses: state
            .hypotheses
            .iter()
            .map(|h| HypothesisEntry {
                id: h.id.clone(),
                statement: h.statement.clone(),
                rationale: h.rationale.clone(),
                verification_method: h.verification_method.clone(),
                expected_outcomes: h.expected_outcomes.clone(),
                status: h.status,
                sigma: h.sigma,
            })
            .collect(),
        facts,
        derived_facts: state
            .derived
            .iter()
            .map(|d| DerivedEntry {
                id: d.id.clone(),
                content: d.content.clone(),
                basis_ids: d.basis_ids.clone(),
                reasoning_logic: d.reasoning_logic.clone(),
                certainty: d.certainty,
                strength: d.strength,
                confidence: d.confidence,
            })
            .collect(),
        contradictions: state.contradictions.clone(),
        coverage,
        gaps: inputs.remaining_gaps.iter().map(GapEntry::from).collect(),
        gap_iterations: inputs.iterations.to_vec(),
        quality,
        knowledge_graph: inputs.knowledge_graph,
        degraded: inputs.degraded,
        notes,
        generated_at: inputs.generated_at,
    })
}

/// Executive summary from the model, grounded in hypothesis statuses and
/// accepted facts. Falls back to a status digest when the reply is empty.
pub fn compose_summary(
    query: &str,
    state: &AnalysisState,
    llm: &LlmGateway,
) -> Result<String, ReportError> {
    let hypotheses = state
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
    let findings = state
        .facts
        .iter()
        .filter(|f| state.verdict(&f.id) == Some(Verdict::Accept))
        .map(|f| format!("- {} ({})", f.content, f.source_url))
        .collect::<Vec<_>>()
        .join("\n");
    let reply = llm.complete(
        &PromptRequest::new(TemplateId::ReportCompose)
            .var("query", query)
            .var("hypotheses", hypotheses)
            .var(
                "findings",
                if findings.is_empty() {
                    "(none)".into()
                } else {
                    findings
                },
            ),
    )?;
    let text = reply.text.trim().to_string();
    if !text.is_empty() {
        return Ok(text);
    }
    let count = |s: HypothesisStatus| state.hypotheses.iter().filter(|h| h.status == s).count();
    Ok(format!(
        "{} hypotheses examined: {} confirmed, {} refuted, {} partially supported, {} unverified.",
        state.hypotheses.len(),
        count(HypothesisStatus::Confirmed),
        count(HypothesisStatus::Refuted),
        count(HypothesisStatus::Partial),
        count(HypothesisStatus::Unverified),
    ))
}
