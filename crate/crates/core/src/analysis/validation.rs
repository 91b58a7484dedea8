//! Multi-source cross-validation: how many of the sources that address a
//! claim actually confirm it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gateway::{normalize_url, LlmGateway, PromptRequest, TemplateId};
use crate::json::{extract_json, f64_field, list_field, str_field};
use crate::search::ScoredResult;
use crate::text::content_token_set;

use super::{AnalysisError, Fact};

pub const ACCEPT_THRESHOLD: f64 = 0.8;
pub const REJECT_THRESHOLD: f64 = 0.5;
/// Shared non-subject content words a source needs to count as related to a fact.
pub const RELATED_SOURCE_MIN_OVERLAP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Verify,
    Reject,
}

pub fn verdict(conf: f64) -> Verdict {
    if conf >= ACCEPT_THRESHOLD {
        Verdict::Accept
    } else if conf >= REJECT_THRESHOLD {
        Verdict::Verify
    } else {
        Verdict::Reject
    }
}

/// confirming / addressing, or the fact's own confidence when no source
/// addresses it.
pub fn validation_confidence(confirming: usize, addressing: usize, sigma: f64) -> f64 {
    if addressing == 0 {
        sigma.clamp(0.0, 1.0)
    } else {
        (confirming.min(addressing) as f64 / addressing as f64).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub fact_id: String,
    pub conf: f64,
    pub verdict: Verdict,
    pub confirming_sources: usize,
    pub addressing_sources: usize,
    /// Normalized URLs of the sources the fact was checked against.
    pub corpus: Vec<String>,
}

impl ValidationOutcome {
    pub fn from_counts(
        fact: &Fact,
        confirming: usize,
        addressing: usize,
        corpus: Vec<String>,
    ) -> Self {
        let conf = validation_confidence(confirming, addressing, fact.sigma);
        Self {
            fact_id: fact.id.clone(),
            conf,
            verdict: verdict(conf),
            confirming_sources: confirming,
            addressing_sources: addressing,
            corpus,
        }
    }
}

/// Sources a fact is validated against: its own source plus every result
/// sharing enough content words with it (subject name words excluded, since
/// every retained result mentions the subject).
pub fn related_sources<'a>(
    fact: &Fact,
    corpus: &'a [ScoredResult],
    subject_tokens: &std::collections::BTreeSet<String>,
) -> Vec<&'a ScoredResult> {
    let own = normalize_url(&fact.source_url);
    let words: std::collections::BTreeSet<String> = content_token_set(&fact.content)
        .into_iter()
        .filter(|t| !subject_tokens.contains(t))
        .collect();
    corpus
        .iter()
        .filter(|r| {
            if Some(r.key()) == own {
                return true;
            }
            let text = content_token_set(&format!("{} {}", r.raw.title, r.raw.snippet));
            words.intersection(&text).count() >= RELATED_SOURCE_MIN_OVERLAP
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SourceStance {
    Confirms,
    Contradicts,
    Neutral,
}

fn parse_judgments(reply: &str, sources: &[&ScoredResult]) -> BTreeMap<usize, SourceStance> {
    let mut out = BTreeMap::new();
    let Some(v) = extract_json(reply) else {
        tracing::warn!("unparseable verification reply, treating every source as neutral");
        return out;
    };
    let by_url: BTreeMap<String, usize> = sources
        .iter()
        .enumerate()
        .map(|(i, r)| (r.key(), i))
        .collect();
    for j in list_field(&v, &["judgments"]).into_iter().flatten() {
        let index = f64_field(j, &["source"])
            .filter(|x| x.fract() == 0.0 && *x >= 1.0)
            .map(|x| x as usize - 1)
            .filter(|i| *i < sources.len())
            .or_else(|| {
                str_field(j, &["url"])
                    .and_then(normalize_url)
                    .and_then(|u| by_url.get(&u).copied())
            });
        let Some(index) = index else { continue };
        let stance = match str_field(j, &["stance", "judgment"])
            .map(str::to_lowercase)
            .as_deref()
        {
            Some("confirms" | "confirm" | "supports") => SourceStance::Confirms,
            Some("contradicts" | "contradict" | "refutes") => SourceStance::Contradicts,
            _ => SourceStance::Neutral,
        };
        out.entry(index).or_insert(stance);
    }
    out
}

fn format_sources(sources: &[&ScoredResult]) -> String {
    sources
        .iter()
        .enumerate()
        .map(|(i, r)| {
            format!(
                "[{}] {} ({})\n{}",
                i + 1,
                r.raw.title,
                r.raw.url,
                r.raw.snippet
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// One verification call per fact over its related sources.
pub fn cross_validate(
    fact: &Fact,
    corpus: &[ScoredResult],
    subject_tokens: &std::collections::BTreeSet<String>,
    llm: &LlmGateway,
) -> Result<ValidationOutcome, AnalysisError> {
    let sources = related_sources(fact, corpus, subject_tokens);
    let keys: Vec<String> = sources.iter().map(|r| r.key()).collect();
    let reply = llm.complete(
        &PromptRequest::new(TemplateId::RumorVerification)
            .var("fact", &fact.content)
            .var("source_url", &fact.source_url)
            .var("sources", format_sources(&sources)),
    )?;
    let judgments = parse_judgments(&reply.text, &sources);
    let confirming = judgments
        .values()
        .filter(|s| **s == SourceStance::Confirms)
        .count();
    let addressing = judgments
        .values()
        .filter(|s| **s != SourceStance::Neutral)
        .count();
    Ok(ValidationOutcome::from_counts(
        fact, confirming, addressing, keys,
    ))
}
