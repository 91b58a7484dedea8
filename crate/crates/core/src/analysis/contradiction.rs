//! Contradiction detection and resolution.
//!
//! Candidate pairs are blocked on shared entity tokens so only facts about a
//! common entity are compared. Each candidate pair is classified once by the
//! model; the judgment is cached so later passes only pay for new pairs.
//! Resolution prefers recency, then source authority, then corroboration;
//! contested pairs are kept side by side with an annotation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::SourceCatalog;
use crate::gateway::{LlmGateway, PromptRequest, TemplateId};
use crate::json::{extract_json, str_field};
use crate::text::{content_tokens, is_stopword};
use crate::understanding::capitalized_entities;

use super::{AnalysisError, Fact, ValidationOutcome};

pub const TEMPORAL_WINDOW_DAYS: i64 = 90;
pub const CONTESTED_MULTIPLIER: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ContradictionKind {
    Direct,
    Indirect,
    Temporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResolutionStrategy {
    TemporalPriority,
    AuthorityPriority,
    CorroborationPriority,
    AnnotatedUnresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contradiction {
    pub kind: ContradictionKind,
    pub fact_ids: Vec<String>,
    /// The fact preferred by the resolution, if one was chosen.
    pub preferred: Option<String>,
    pub annotation: String,
    pub strategy_used: ResolutionStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairJudgment {
    pub kind: Option<ContradictionKind>,
    pub contested: bool,
    pub note: String,
}

/// Entity tokens used as blocking keys: words of capitalized names in the
/// fact, minus the subject's own name words.
pub fn entity_tokens(content: &str, subject_tokens: &BTreeSet<String>) -> BTreeSet<String> {
    capitalized_entities(content)
        .iter()
        .flat_map(|e| content_tokens(e))
        .filter(|t| {
            !is_stopword(t) && !subject_tokens.contains(t) && !t.chars().all(|c| c.is_ascii_digit())
        })
        .collect()
}

/// Index pairs (i < j) sharing at least one entity token.
pub fn candidate_pairs(facts: &[Fact], subject_tokens: &BTreeSet<String>) -> Vec<(usize, usize)> {
    let keys: Vec<BTreeSet<String>> = facts
        .iter()
        .map(|f| entity_tokens(&f.content, subject_tokens))
        .collect();
    let mut out = Vec::new();
    for i in 0..facts.len() {
        for j in i + 1..facts.len() {
            if !keys[i].is_disjoint(&keys[j]) {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn pair_key(a: &Fact, b: &Fact) -> String {
    if a.id <= b.id {
        format!("{}|{}", a.id, b.id)
    } else {
        format!("{}|{}", b.id, a.id)
    }
}

fn parse_judgment(reply: &str) -> PairJudgment {
    let Some(v) = extract_json(reply) else {
        tracing::warn!("unparseable contradiction reply, treating pair as consistent");
        return PairJudgment {
            kind: None,
            contested: false,
            note: String::new(),
        };
    };
    let kind = match str_field(&v, &["kind", "type"])
        .map(str::to_lowercase)
        .as_deref()
    {
        Some("direct") => Some(ContradictionKind::Direct),
        Some("indirect") => Some(ContradictionKind::Indirect),
        Some("temporal") => Some(ContradictionKind::Temporal),
        _ => None,
    };
    PairJudgment {
        kind,
        contested: v
            .get("contested")
            .and_then(serde_json::Value::as_bool)
            .unwrap_or(false),
        note: str_field(&v, &["note"]).unwrap_or_default().to_string(),
    }
}

pub fn judge_pair(a: &Fact, b: &Fact, llm: &LlmGateway) -> Result<PairJudgment, AnalysisError> {
    let date = |f: &Fact| {
        f.timestamp
            .map(|d| d.to_string())
            .unwrap_or_else(|| "undated".into())
    };
    let reply = llm.complete(
        &PromptRequest::new(TemplateId::ContradictionCheck)
            .var("pair", format!("{} || {}", a.content, b.content))
            .var("fact_a", &a.content)
            .var("date_a", date(a))
            .var("source_a", &a.source_url)
            .var("fact_b", &b.content)
            .var("date_b", date(b))
            .var("source_b", &b.source_url),
    )?;
    Ok(parse_judgment(&reply.text))
}

/// Resolution order for a conflicting pair: contested → annotate;
/// timestamps more than 90 days apart → newer; higher authority; more
/// confirming sources; otherwise annotate.
pub fn resolve(
    kind: ContradictionKind,
    contested: bool,
    a: &Fact,
    b: &Fact,
    catalog: &SourceCatalog,
    validations: &BTreeMap<String, ValidationOutcome>,
) -> Contradiction {
    let ids = vec![a.id.clone(), b.id.clone()];
    let unresolved = |why: &str| Contradiction {
        kind,
        fact_ids: ids.clone(),
        preferred: None,
        annotation: why.to_string(),
        strategy_used: ResolutionStrategy::AnnotatedUnresolved,
    };
    let pick =
        |winner: &Fact, loser: &Fact, strategy: ResolutionStrategy, why: String| Contradiction {
            kind,
            fact_ids: ids.clone(),
            preferred: Some(winner.id.clone()),
            annotation: format!("{} preferred over {}: {why}", winner.id, loser.id),
            strategy_used: strategy,
        };
    if contested {
        return unresolved(
            "sources reflect different perspectives; both claims kept with reduced confidence",
        );
    }
    if let (Some(ta), Some(tb)) = (a.timestamp, b.timestamp) {
        let gap = (ta - tb).num_days();
        if gap.abs() > TEMPORAL_WINDOW_DAYS {
            let (newer, older) = if gap > 0 { (a, b) } else { (b, a) };
            return pick(
                newer,
                older,
                ResolutionStrategy::TemporalPriority,
                format!(
                    "more recent information ({} vs {}); older claim describes an earlier period",
                    newer.timestamp.unwrap(),
                    older.timestamp.unwrap()
                ),
            );
        }
    }
    let (aa, ab) = (
        catalog.authority_for_url(&a.source_url),
        catalog.authority_for_url(&b.source_url),
    );
    if aa != ab {
        let (w, l, hw, hl) = if aa > ab {
            (a, b, aa, ab)
        } else {
            (b, a, ab, aa)
        };
        return pick(
            w,
            l,
            ResolutionStrategy::AuthorityPriority,
            format!("source authority {hw} vs {hl}"),
        );
    }
    let confirming = |f: &Fact| validations.get(&f.id).map_or(0, |v| v.confirming_sources);
    let (ca, cb) = (confirming(a), confirming(b));
    if ca != cb {
        let (w, l, nw, nl) = if ca > cb {
            (a, b, ca, cb)
        } else {
            (b, a, cb, ca)
        };
        return pick(
            w,
            l,
            ResolutionStrategy::CorroborationPriority,
            format!("{nw} confirming sources vs {nl}"),
        );
    }
    unresolved("no recency, authority or corroboration advantage; both claims kept with reduced confidence")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionOutcome {
    pub contradictions: Vec<Contradiction>,
    pub candidate_pairs: usize,
    /// Model calls made in this pass (cached pairs cost nothing).
    pub comparisons: usize,
}

pub fn detect_contradictions(
    facts: &[Fact],
    validations: &BTreeMap<String, ValidationOutcome>,
    catalog: &SourceCatalog,
    subject_tokens: &BTreeSet<String>,
    cache: &mut BTreeMap<String, PairJudgment>,
    llm: &LlmGateway,
) -> Result<DetectionOutcome, AnalysisError> {
    let pairs = candidate_pairs(facts, subject_tokens);
    let mut out = DetectionOutcome {
        candidate_pairs: pairs.len(),
        ..Default::default()
    };
    for (i, j) in pairs {
        let (a, b) = (&facts[i], &facts[j]);
        let key = pair_key(a, b);
        let judgment = match cache.get(&key) {
            Some(j) => j.clone(),
            None => {
                let j = judge_pair(a, b, llm)?;
                out.comparisons += 1;
                cache.insert(key, j.clone());
                j
            }
        };
        if let Some(kind) = judgment.kind {
            let mut c = resolve(kind, judgment.contested, a, b, catalog, validations);
            if !judgment.note.is_empty() {
                c.annotation = format!("{} ({})", c.annotation, judgment.note);
            }
            out.contradictions.push(c);
        }
    }
    Ok(out)
}
