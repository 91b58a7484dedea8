//! Level-1 fact extraction: one model call per retained search result.

use chrono::NaiveDate;
use serde_json::Value;

use crate::gateway::{LlmGateway, PromptRequest, TemplateId};
use crate::json::{extract_json, list_field, str_field};
use crate::planner::{Hypothesis, Stance};
use crate::search::{ScoredResult, SubjectProfile};
use crate::text::tidy;

use super::{AnalysisError, Fact, Triple};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractionOutcome {
    pub facts: Vec<Fact>,
    /// Results whose reply could not be parsed.
    pub skipped_results: usize,
    /// Facts dropped by the subject check.
    pub off_subject: usize,
}

pub fn format_hypotheses(hypotheses: &[Hypothesis]) -> String {
    if hypotheses.is_empty() {
        return "(none)".into();
    }
    hypotheses
        .iter()
        .map(|h| format!("{}: {}", h.id, h.statement))
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_fact(item: &Value, result: &ScoredResult, hypotheses: &[Hypothesis]) -> Option<Fact> {
    let content = tidy(str_field(item, &["content", "fact", "statement"])?);
    if content.is_empty() {
        return None;
    }
    let triple = match (
        str_field(item, &["subject"]),
        str_field(item, &["action", "predicate"]),
        str_field(item, &["object"]),
    ) {
        (Some(s), Some(a), Some(o)) => Some(Triple {
            subject: tidy(s),
            action: tidy(a),
            object: tidy(o),
        }),
        _ => None,
    };
    let named = str_field(item, &["hypothesis_id", "hypothesis"])
        .filter(|id| hypotheses.iter().any(|h| h.id == *id))
        .map(String::from);
    let hypothesis_id = named.or_else(|| result.hypothesis_id.clone());
    let stance = if hypothesis_id.is_some() {
        str_field(item, &["stance"])
            .map(Stance::parse)
            .unwrap_or(Stance::Neutral)
    } else {
        Stance::Neutral
    };
    let timestamp = str_field(item, &["timestamp", "date"])
        .and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
        .or_else(|| result.raw.published_at.map(|p| p.date_naive()));
    Some(Fact::new(
        content,
        &result.raw.url,
        &result.raw.title,
        timestamp,
        result.quality.composite,
        hypothesis_id,
        stance,
        triple,
        &result.originating_task,
    ))
}

/// Subject check on a fact: relevance of its statement (with the triple's
/// subject as the headline) against the profile.
pub fn fact_on_subject(fact: &Fact, profile: &SubjectProfile) -> bool {
    let headline = fact
        .triple
        .as_ref()
        .map(|t| t.subject.as_str())
        .unwrap_or("");
    profile.accepts(profile.relevance(headline, &fact.content))
}

pub fn extract_facts(
    results: &[ScoredResult],
    subject: &str,
    profile: Option<&SubjectProfile>,
    hypotheses: &[Hypothesis],
    llm: &LlmGateway,
) -> Result<ExtractionOutcome, AnalysisError> {
    let mut out = ExtractionOutcome::default();
    let listing = format_hypotheses(hypotheses);
    for r in results {
        let reply = llm.complete(
            &PromptRequest::new(TemplateId::FactExtraction)
                .var("subject", subject)
                .var("hypotheses", &listing)
                .var("title", &r.raw.title)
                .var("url", &r.raw.url)
                .var(
                    "published",
                    r.raw
                        .published_at
                        .map(|p| p.date_naive().to_string())
                        .unwrap_or_else(|| "unknown".into()),
                )
                .var("snippet", &r.raw.snippet),
        )?;
        let Some(items) =
            extract_json(&reply.text).and_then(|v| list_field(&v, &["facts"]).cloned())
        else {
            tracing::warn!(url = %r.raw.url, "unparseable extraction reply, skipping result");
            out.skipped_results += 1;
            continue;
        };
        for item in &items {
            let Some(fact) = parse_fact(item, r, hypotheses) else {
                continue;
            };
            if let Some(p) = profile {
                if !fact_on_subject(&fact, p) {
                    out.off_subject += 1;
                    continue;
                }
            }
            out.facts.push(fact);
        }
    }
    Ok(out)
}
