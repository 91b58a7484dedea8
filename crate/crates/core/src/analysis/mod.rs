//! Stages 5 and 6: fact extraction, implicit-fact derivation, multi-source
//! validation and contradiction handling over an evolving analysis state.

mod contradiction;
mod extract;
mod graph;
mod propagation;
mod validation;

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contradiction::{
    candidate_pairs, detect_contradictions, entity_tokens, judge_pair, pair_key, resolve,
    Contradiction, ContradictionKind, DetectionOutcome, PairJudgment, ResolutionStrategy,
    CONTESTED_MULTIPLIER, TEMPORAL_WINDOW_DAYS,
};
pub use extract::{extract_facts, fact_on_subject, format_hypotheses, ExtractionOutcome};
pub use graph::{build_knowledge_graph, numbered_facts, Entity, KnowledgeGraph, Relationship};
pub use propagation::{propagate, ConfidenceGraph, GraphError};
pub use validation::{
    cross_validate, related_sources, validation_confidence, verdict, ValidationOutcome, Verdict,
    ACCEPT_THRESHOLD, REJECT_THRESHOLD, RELATED_SOURCE_MIN_OVERLAP,
};

use crate::catalog::SourceCatalog;
use crate::gateway::{LlmError, LlmGateway, PromptRequest, TemplateId};
use crate::json::{extract_json, list_field, str_field};
use crate::planner::{update_hypothesis_status, Hypothesis, LinkedEvidence, Stance};
use crate::search::{ScoredResult, SubjectProfile};
use crate::text::{content_hash, content_tokens, tidy};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Provider(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub action: String,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub id: String,
    pub content: String,
    pub source_url: String,
    pub source_title: String,
    pub timestamp: Option<NaiveDate>,
    /// Initial confidence: composite quality of the originating result.
    pub sigma: f64,
    pub hypothesis_id: Option<String>,
    pub stance: Stance,
    pub triple: Option<Triple>,
    pub origin_task: String,
}

pub fn fact_id(content: &str) -> String {
    format!("F-{}", &content_hash(content)[..10])
}

impl Fact {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        content: String,
        source_url: &str,
        source_title: &str,
        timestamp: Option<NaiveDate>,
        sigma: f64,
        hypothesis_id: Option<String>,
        stance: Stance,
        triple: Option<Triple>,
        origin_task: &str,
    ) -> Self {
        Self {
            id: fact_id(&content),
            content,
            source_url: source_url.to_string(),
            source_title: source_title.to_string(),
            timestamp,
            sigma: sigma.clamp(0.0, 1.0),
            hypothesis_id,
            stance,
            triple,
            origin_task: origin_task.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Certainty {
    Certain,
    Probable,
    Possible,
}

impl Certainty {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "certain" => Some(Certainty::Certain),
            "probable" | "likely" => Some(Certainty::Probable),
            "possible" => Some(Certainty::Possible),
            _ => None,
        }
    }

    /// Reasoning strength r.
    pub fn strength(self) -> f64 {
        match self {
            Certainty::Certain => 0.95,
            Certainty::Probable => 0.8,
            Certainty::Possible => 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedFact {
    pub id: String,
    pub content: String,
    /// Explicit or earlier derived fact ids.
    pub basis_ids: Vec<String>,
    pub reasoning_logic: String,
    pub certainty: Certainty,
    pub strength: f64,
    pub confidence: f64,
}

pub fn derived_id(content: &str) -> String {
    format!("D-{}", &content_hash(content)[..10])
}

/// Parse a reasoning reply into derivations. Basis numbers 1..=m cite
/// `explicit`; m+1.. cite earlier items of the same reply. Items with an
/// unknown certainty or a basis number out of range are dropped.
fn parse_derivations(reply: &str, explicit: &[Fact]) -> Vec<DerivedFact> {
    let Some(v) = extract_json(reply) else {
        tracing::warn!("unparseable reasoning reply");
        return Vec::new();
    };
    let items = list_field(&v, &["derived", "facts"])
        .cloned()
        .unwrap_or_default();
    let m = explicit.len();
    let ids: Vec<Option<String>> = items
        .iter()
        .map(|it| str_field(it, &["content"]).map(|c| derived_id(&tidy(c))))
        .collect();
    let mut out: Vec<DerivedFact> = Vec::new();
    for it in &items {
        let Some(content) = str_field(it, &["content"]).map(tidy) else {
            continue;
        };
        let Some(certainty) = str_field(it, &["certainty"]).and_then(Certainty::parse) else {
            tracing::warn!("derived item without a recognized certainty, dropping");
            continue;
        };
        let raw_basis: Vec<f64> = it
            .get("basis")
            .and_then(serde_json::Value::as_array)
            .map(|a| a.iter().filter_map(|x| x.as_f64()).collect())
            .unwrap_or_default();
        let mut basis = Vec::new();
        let mut dangling = raw_basis.is_empty();
        for n in raw_basis {
            let idx = n as usize;
            if n.fract() != 0.0 || idx == 0 {
                dangling = true;
            } else if idx <= m {
                basis.push(explicit[idx - 1].id.clone());
            } else if let Some(Some(id)) = ids.get(idx - m - 1) {
                basis.push(id.clone());
            } else {
                dangling = true;
            }
        }
        basis.dedup();
        if dangling {
            tracing::warn!(content = %content, "derived item cites a missing basis, dropping");
            continue;
        }
        let id = derived_id(&content);
        if out.iter().any(|d| d.id == id) {
            continue;
        }
        out.push(DerivedFact {
            id,
            content,
            basis_ids: basis,
            reasoning_logic: str_field(it, &["reasoning", "reasoning_logic"])
                .unwrap_or_default()
                .to_string(),
            certainty,
            strength: certainty.strength(),
            confidence: 0.0,
        });
    }
    out
}

/// Recompute every derived confidence from `leaf` confidences, dropping
/// derivations on cycles or with unresolvable bases.
pub fn propagate_confidences(derived: &mut Vec<DerivedFact>, leaf: &BTreeMap<String, f64>) {
    let mut g = ConfidenceGraph::new();
    for (id, c) in leaf {
        g.add_leaf(id, *c).expect("leaf ids are unique");
    }
    derived.retain(|d| g.add_derived(&d.id, d.strength, &d.basis_ids).is_ok());
    let removed: BTreeSet<String> = g.prune_invalid().into_iter().collect();
    derived.retain(|d| !removed.contains(&d.id));
    let conf = g.compute().expect("pruned graph is acyclic and resolved");
    for d in derived.iter_mut() {
        d.confidence = conf[&d.id];
    }
}

/// Reasoning call over `explicit`; confidences are set from `leaf`.
pub fn derive_facts(
    query: &str,
    explicit: &[Fact],
    leaf: &BTreeMap<String, f64>,
    llm: &LlmGateway,
) -> Result<Vec<DerivedFact>, AnalysisError> {
    if explicit.is_empty() {
        return Ok(Vec::new());
    }
    let reply = llm.complete(
        &PromptRequest::new(TemplateId::Reasoning)
            .var("query", query)
            .var("facts", numbered_facts(explicit)),
    )?;
    let mut derived = parse_derivations(&reply.text, explicit);
    propagate_confidences(&mut derived, leaf);
    Ok(derived)
}

/// The evolving analysis result: fact base, derivations, validation
/// outcomes, contradictions and hypothesis statuses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisState {
    pub facts: Vec<Fact>,
    pub derived: Vec<DerivedFact>,
    pub validations: BTreeMap<String, ValidationOutcome>,
    pub contradictions: Vec<Contradiction>,
    pub hypotheses: Vec<Hypothesis>,
    pub corpus: Vec<ScoredResult>,
    pub pair_cache: BTreeMap<String, PairJudgment>,
    /// Contradiction-check calls made so far.
    pub comparisons: usize,
    /// Candidate pairs after blocking in the latest detection pass.
    pub candidate_pairs: usize,
}

impl AnalysisState {
    pub fn fact(&self, id: &str) -> Option<&Fact> {
        self.facts.iter().find(|f| f.id == id)
    }

    pub fn verdict(&self, id: &str) -> Option<Verdict> {
        self.validations.get(id).map(|v| v.verdict)
    }

    pub fn contested(&self) -> BTreeSet<String> {
        self.contradictions
            .iter()
            .filter(|c| c.strategy_used == ResolutionStrategy::AnnotatedUnresolved)
            .flat_map(|c| c.fact_ids.iter().cloned())
            .collect()
    }

    /// Validation confidence (sigma before validation), reduced for
    /// contested facts.
    pub fn effective_confidence(&self, id: &str) -> f64 {
        let Some(f) = self.fact(id) else { return 0.0 };
        let base = self.validations.get(id).map_or(f.sigma, |v| v.conf);
        if self.contested().contains(id) {
            base * CONTESTED_MULTIPLIER
        } else {
            base
        }
    }

    pub fn leaf_confidences(&self) -> BTreeMap<String, f64> {
        let contested = self.contested();
        self.facts
            .iter()
            .map(|f| {
                let base = self.validations.get(&f.id).map_or(f.sigma, |v| v.conf);
                let c = if contested.contains(&f.id) {
                    base * CONTESTED_MULTIPLIER
                } else {
                    base
                };
                (f.id.clone(), c)
            })
            .collect()
    }

    pub fn recompute_derived(&mut self) {
        let leaf = self.leaf_confidences();
        propagate_confidences(&mut self.derived, &leaf);
    }

    pub fn refresh_hypotheses(&mut self) {
        let leaf = self.leaf_confidences();
        let updated: Vec<Hypothesis> = self
            .hypotheses
            .iter()
            .map(|h| {
                let evidence: Vec<LinkedEvidence> = self
                    .facts
                    .iter()
                    .filter(|f| f.hypothesis_id.as_deref() == Some(h.id.as_str()))
                    .map(|f| LinkedEvidence {
                        accepted: self.verdict(&f.id) == Some(Verdict::Accept),
                        stance: f.stance,
                        confidence: leaf[&f.id],
                    })
                    .collect();
                update_hypothesis_status(h, &evidence)
            })
            .collect();
        self.hypotheses = updated;
    }

    pub fn accepted_count(&self) -> usize {
        self.validations
            .values()
            .filter(|v| v.verdict == Verdict::Accept)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub state: AnalysisState,
    /// Facts whose validation must be recomputed: new, improved, or whose
    /// related-source set changed.
    pub stale: BTreeSet<String>,
}

/// Merge new results and facts into a state. Facts are deduplicated by
/// content hash keeping the higher sigma; results by normalized URL keeping
/// the higher quality. Pure: the input state is not modified.
pub fn merge_analysis(
    state: &AnalysisState,
    new_facts: &[Fact],
    new_results: &[ScoredResult],
    subject_tokens: &BTreeSet<String>,
) -> MergeOutcome {
    let mut next = state.clone();
    let mut stale = BTreeSet::new();
    if new_facts.is_empty() && new_results.is_empty() {
        return MergeOutcome { state: next, stale };
    }

    let mut corpus_changed = false;
    for r in new_results {
        match next.corpus.iter_mut().find(|c| c.key() == r.key()) {
            Some(existing) if existing.quality.composite < r.quality.composite => {
                *existing = r.clone();
                corpus_changed = true;
            }
            Some(_) => {}
            None => {
                next.corpus.push(r.clone());
                corpus_changed = true;
            }
        }
    }

    for f in new_facts {
        match next.facts.iter_mut().find(|e| e.id == f.id) {
            Some(existing) if existing.sigma < f.sigma => {
                existing.sigma = f.sigma;
                stale.insert(f.id.clone());
            }
            Some(_) => {}
            None => {
                next.facts.push(f.clone());
                stale.insert(f.id.clone());
            }
        }
    }

    if corpus_changed {
        for f in &next.facts {
            if stale.contains(&f.id) {
                continue;
            }
            let before: Vec<String> = state
                .validations
                .get(&f.id)
                .map(|v| v.corpus.clone())
                .unwrap_or_else(|| {
                    related_sources(f, &state.corpus, subject_tokens)
                        .iter()
                        .map(|r| r.key())
                        .collect()
                });
            let after: Vec<String> = related_sources(f, &next.corpus, subject_tokens)
                .iter()
                .map(|r| r.key())
                .collect();
            if before != after {
                stale.insert(f.id.clone());
            }
        }
    }
    MergeOutcome { state: next, stale }
}

/// Bundles what the analysis steps need so the pipeline and the gap loop
/// drive them identically.
pub struct Analyzer<'a> {
    pub llm: &'a LlmGateway,
    pub catalog: &'a SourceCatalog,
    pub profile: Option<&'a SubjectProfile>,
    pub query: &'a str,
    /// Subject named in extraction prompts.
    pub subject: String,
}

impl<'a> Analyzer<'a> {
    pub fn subject_tokens(&self) -> BTreeSet<String> {
        match self.profile {
            Some(p) => p.name_token_set(),
            None => content_tokens(&self.subject).into_iter().collect(),
        }
    }

    pub fn extract(
        &self,
        results: &[ScoredResult],
        hypotheses: &[Hypothesis],
    ) -> Result<ExtractionOutcome, AnalysisError> {
        extract_facts(results, &self.subject, self.profile, hypotheses, self.llm)
    }

    /// Initial state from extracted facts: validate everything, then
    /// contradictions, derivations and hypothesis statuses.
    pub fn analyze(
        &self,
        hypotheses: Vec<Hypothesis>,
        corpus: Vec<ScoredResult>,
        facts: Vec<Fact>,
    ) -> Result<AnalysisState, AnalysisError> {
        let mut state = AnalysisState {
            hypotheses,
            corpus,
            ..Default::default()
        };
        let merged = merge_analysis(&state, &facts, &[], &self.subject_tokens());
        state = merged.state;
        self.reanalyze(&mut state, &merged.stale, true)?;
        Ok(state)
    }

    /// Re-validate `stale` facts and refresh everything downstream. New
    /// derivations are requested only when `derive` is set.
    pub fn reanalyze(
        &self,
        state: &mut AnalysisState,
        stale: &BTreeSet<String>,
        derive: bool,
    ) -> Result<(), AnalysisError> {
        let subject_tokens = self.subject_tokens();
        for f in state.facts.clone() {
            if stale.contains(&f.id) {
                let outcome = cross_validate(&f, &state.corpus, &subject_tokens, self.llm)?;
                state.validations.insert(f.id.clone(), outcome);
            }
        }
        let detection = detect_contradictions(
            &state.facts,
            &state.validations,
            self.catalog,
            &subject_tokens,
            &mut state.pair_cache,
            self.llm,
        )?;
        state.comparisons += detection.comparisons;
        state.candidate_pairs = detection.candidate_pairs;
        state.contradictions = detection.contradictions;

        if derive {
            let usable: Vec<Fact> = state
                .facts
                .iter()
                .filter(|f| state.verdict(&f.id) != Some(Verdict::Reject))
                .cloned()
                .collect();
            let fresh = derive_facts(self.query, &usable, &state.leaf_confidences(), self.llm)?;
            for d in fresh {
                if !state.derived.iter().any(|x| x.id == d.id) {
                    state.derived.push(d);
                }
            }
        }
        state.recompute_derived();
        state.refresh_hypotheses();
        Ok(())
    }
}
