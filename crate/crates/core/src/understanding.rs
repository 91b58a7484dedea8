//! Stage 1: turn a raw query into a structured understanding that
//! parameterizes the rest of the pipeline.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Months, NaiveDate};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{LlmError, LlmGateway, PromptRequest, TemplateId};
use crate::json::{extract_json, f64_field, str_field, string_list};
use crate::text::{content_tokens, tidy};

/// Confidence assigned when the classifier reply cannot be used.
pub const FALLBACK_INTENT_CONFIDENCE: f64 = 0.3;

/// Benchmark configuration: search depth and task count.
pub const DEFAULT_D_MAX: usize = 2;
pub const DEFAULT_N_TASKS: usize = 8;

const DEFAULT_LEXICON: &str = include_str!("../data/temporal_lexicon.en.json");

#[derive(Debug, Error)]
pub enum UnderstandingError {
    #[error("query text is empty")]
    EmptyQuery,
    #[error("intent classification failed: {0}")]
    Provider(#[from] LlmError),
    #[error("invalid temporal lexicon: {0}")]
    Lexicon(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Intent {
    Fact,
    Trend,
    Comparison,
    Causal,
    Prediction,
    Comprehensive,
}

impl Intent {
    pub fn parse(s: &str) -> Option<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        Some(match norm.as_str() {
            "fact" | "factquery" | "factual" => Intent::Fact,
            "trend" | "trendanalysis" => Intent::Trend,
            "comparison" | "compare" | "comparative" => Intent::Comparison,
            "causal" | "causalanalysis" => Intent::Causal,
            "prediction" | "predictive" | "forecast" => Intent::Prediction,
            "comprehensive" => Intent::Comprehensive,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemporalCategory {
    Current,
    Recent,
    ThisYear,
    Future,
    Past,
    After,
    Before,
    None,
}

impl TemporalCategory {
    /// Rule-pass precedence: explicit bounds first, then relative expressions.
    const PRECEDENCE: [TemporalCategory; 7] = [
        TemporalCategory::After,
        TemporalCategory::Before,
        TemporalCategory::ThisYear,
        TemporalCategory::Recent,
        TemporalCategory::Current,
        TemporalCategory::Future,
        TemporalCategory::Past,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Some(
            match s.trim().to_lowercase().replace(['_', ' '], "").as_str() {
                "current" => Self::Current,
                "recent" => Self::Recent,
                "thisyear" => Self::ThisYear,
                "future" => Self::Future,
                "past" => Self::Past,
                "after" => Self::After,
                "before" => Self::Before,
                "none" => Self::None,
                _ => return None,
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalContext {
    pub category: TemporalCategory,
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
}

impl TemporalContext {
    pub fn none() -> Self {
        Self {
            category: TemporalCategory::None,
            start_date: None,
            end_date: None,
        }
    }

    /// Concrete bounds for a category relative to `now`. After and Before
    /// need an explicit date; without one there is nothing to resolve.
    pub fn resolve(
        category: TemporalCategory,
        now: NaiveDate,
        date: Option<NaiveDate>,
    ) -> Option<Self> {
        let (start, end) = match category {
            TemporalCategory::None => return Some(Self::none()),
            TemporalCategory::Current => (now.checked_sub_months(Months::new(1)), Some(now)),
            TemporalCategory::Recent => (now.checked_sub_months(Months::new(3)), Some(now)),
            TemporalCategory::ThisYear => (NaiveDate::from_ymd_opt(now.year(), 1, 1), Some(now)),
            TemporalCategory::Future => (Some(now), None),
            TemporalCategory::Past => (None, Some(now)),
            TemporalCategory::After => (Some(date?), None),
            TemporalCategory::Before => (None, Some(date?)),
        };
        Some(Self {
            category,
            start_date: start,
            end_date: end,
        })
    }

    pub fn is_none(&self) -> bool {
        self.category == TemporalCategory::None
    }

    /// 0 without bounds, 0.5 single-sided, 1 for a closed range.
    pub fn span_score(&self) -> f64 {
        match (self.start_date, self.end_date) {
            (Some(_), Some(_)) => 1.0,
            (None, None) => 0.0,
            _ => 0.5,
        }
    }

    pub fn describe(&self) -> String {
        let fmt = |d: Option<NaiveDate>| d.map(|d| d.to_string()).unwrap_or_else(|| "open".into());
        if self.is_none() {
            "none".into()
        } else {
            format!(
                "{:?} ({} to {})",
                self.category,
                fmt(self.start_date),
                fmt(self.end_date)
            )
        }
    }
}

/// Keyword lists per temporal category.
#[derive(Debug, Clone)]
pub struct TemporalLexicon {
    rules: Vec<(TemporalCategory, Vec<Regex>)>,
}

impl Default for TemporalLexicon {
    fn default() -> Self {
        Self::from_json(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl TemporalLexicon {
    pub fn from_json(text: &str) -> Result<Self, UnderstandingError> {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| UnderstandingError::Lexicon(e.to_string()))?;
        let mut by_cat: BTreeMap<TemporalCategory, Vec<String>> = BTreeMap::new();
        for (k, phrases) in raw {
            let cat = TemporalCategory::parse(&k)
                .filter(|c| *c != TemporalCategory::None)
                .ok_or_else(|| UnderstandingError::Lexicon(format!("unknown category {k:?}")))?;
            by_cat.entry(cat).or_default().extend(phrases);
        }
        let mut rules = Vec::new();
        for cat in TemporalCategory::PRECEDENCE {
            let Some(phrases) = by_cat.get(&cat) else {
                continue;
            };
            let mut res = Vec::new();
            for p in phrases {
                let p = regex::escape(&p.trim().to_lowercase()).replace(r"\ ", r"\s+");
                let pattern = match cat {
                    TemporalCategory::After | TemporalCategory::Before => {
                        format!(
                            r"\b{p}\s+(?:the\s+)?(?:year\s+)?(\d{{4}}-\d{{2}}-\d{{2}}|\d{{4}})\b"
                        )
                    }
                    _ => format!(r"\b{p}\b"),
                };
                res.push(
                    Regex::new(&pattern).map_err(|e| UnderstandingError::Lexicon(e.to_string()))?,
                );
            }
            rules.push((cat, res));
        }
        Ok(Self { rules })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, UnderstandingError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UnderstandingError::Lexicon(e.to_string()))?;
        Self::from_json(&text)
    }

    /// Rule pass only. Pure in `(text, now)`.
    pub fn extract(&self, text: &str, now: NaiveDate) -> TemporalContext {
        let lower = text.to_lowercase();
        for (cat, patterns) in &self.rules {
            for re in patterns {
                let Some(caps) = re.captures(&lower) else {
                    continue;
                };
                let date = caps.get(1).and_then(|m| parse_date_token(m.as_str(), *cat));
                if let Some(ctx) = TemporalContext::resolve(*cat, now, date) {
                    return ctx;
                }
            }
        }
        TemporalContext::none()
    }
}

fn parse_date_token(s: &str, cat: TemporalCategory) -> Option<NaiveDate> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d);
    }
    let year: i32 = s.parse().ok()?;
    match cat {
        // "before 2020" ends on the last day of 2019
        TemporalCategory::Before => NaiveDate::from_ymd_opt(year - 1, 12, 31),
        _ => NaiveDate::from_ymd_opt(year, 1, 1),
    }
}

pub fn extract_temporal(text: &str, now: NaiveDate, lexicon: &TemporalLexicon) -> TemporalContext {
    lexicon.extract(text, now)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    MultiStepResearch,
    TemporalAnalysis,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScores {
    pub breadth: f64,
    pub depth: f64,
    pub temporal_span: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityAssessment {
    pub sigma: f64,
    pub scores: ComplexityScores,
    pub d_max: usize,
    pub n_tasks: usize,
    pub strategy: Strategy,
}

impl ComplexityAssessment {
    pub fn from_scores(scores: ComplexityScores, intent: Intent) -> Self {
        let clamp = |x: f64| x.clamp(0.0, 1.0);
        let sigma =
            (clamp(scores.breadth) + clamp(scores.depth) + clamp(scores.temporal_span)) / 3.0;
        let (d_max, n_tasks) = research_parameters(sigma);
        Self {
            sigma,
            scores,
            d_max,
            n_tasks,
            strategy: strategy_for(intent),
        }
    }
}

/// Search depth and task count for a complexity score.
pub fn research_parameters(sigma: f64) -> (usize, usize) {
    if sigma < 0.34 {
        (1, 4)
    } else if sigma <= 0.67 {
        (2, 8)
    } else {
        (3, 12)
    }
}

pub fn strategy_for(intent: Intent) -> Strategy {
    match intent {
        Intent::Trend => Strategy::TemporalAnalysis,
        Intent::Comprehensive => Strategy::MultiStepResearch,
        _ => Strategy::Standard,
    }
}

const STRONG_DEPTH_CUES: &[&str] = &[
    "comprehensive",
    "in-depth",
    "in depth",
    "detailed",
    "thorough",
    "exhaustive",
    "deep dive",
];
const MODERATE_DEPTH_CUES: &[&str] = &[
    "analysis",
    "analyze",
    "analyse",
    "assess",
    "assessment",
    "evaluate",
    "examine",
    "investigate",
    "explain",
    "compare",
];

fn has_cue(lower: &str, cues: &[&str]) -> bool {
    cues.iter().any(|c| {
        Regex::new(&format!(r"\b{}\b", regex::escape(c)))
            .map(|re| re.is_match(lower))
            .unwrap_or(false)
    })
}

/// Distinct requested aspects: clauses separated by commas, semicolons,
/// "and", "vs".
pub fn count_aspects(text: &str) -> usize {
    let lower = text.to_lowercase();
    let re = Regex::new(r",|;|&|\band\b|\bvs\.?\b|\bversus\b|\bas well as\b").unwrap();
    let mut seen: Vec<Vec<String>> = Vec::new();
    for seg in re.split(&lower) {
        let toks = content_tokens(seg);
        if !toks.is_empty() && !seen.contains(&toks) {
            seen.push(toks);
        }
    }
    seen.len()
}

pub fn complexity_scores(text: &str, temporal: &TemporalContext) -> ComplexityScores {
    let lower = text.to_lowercase();
    let depth = if has_cue(&lower, STRONG_DEPTH_CUES) {
        1.0
    } else if has_cue(&lower, MODERATE_DEPTH_CUES) {
        0.5
    } else {
        0.0
    };
    ComplexityScores {
        breadth: (count_aspects(text) as f64 / 5.0).min(1.0),
        depth,
        temporal_span: temporal.span_score(),
    }
}

pub fn assess_complexity(
    text: &str,
    intent: Intent,
    temporal: &TemporalContext,
) -> ComplexityAssessment {
    ComplexityAssessment::from_scores(complexity_scores(text, temporal), intent)
}

/// Everything the classifier reply may carry besides the intent itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntentReply {
    pub intent: Option<Intent>,
    pub confidence: Option<f64>,
    pub domain: Option<String>,
    pub entities: Vec<String>,
    pub aliases: Vec<String>,
    pub descriptors: Vec<String>,
    pub phrase: Option<String>,
    pub target_domain: Option<String>,
    pub temporal_hint: Option<(TemporalCategory, Option<NaiveDate>)>,
}

impl IntentReply {
    fn parse(text: &str) -> Self {
        let Some(v) = extract_json(text) else {
            return Self::default();
        };
        let temporal_hint = v.get("temporal").and_then(|t| {
            let cat = match t {
                Value::String(s) => TemporalCategory::parse(s)?,
                _ => TemporalCategory::parse(str_field(t, &["category"])?)?,
            };
            let date =
                str_field(t, &["date"]).and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok());
            Some((cat, date))
        });
        Self {
            intent: str_field(&v, &["intent", "type"]).and_then(Intent::parse),
            confidence: f64_field(&v, &["confidence"]),
            domain: str_field(&v, &["domain"]).map(|s| s.to_lowercase()),
            entities: string_list(&v, &["entities"]),
            aliases: string_list(&v, &["aliases"]),
            descriptors: string_list(&v, &["descriptors"]),
            phrase: str_field(&v, &["phrase"]).map(String::from),
            target_domain: str_field(&v, &["target_domain"]).map(String::from),
            temporal_hint,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntentClassification {
    pub intent: Intent,
    pub confidence: f64,
    pub reply: IntentReply,
}

pub fn classify_intent(
    text: &str,
    llm: &LlmGateway,
) -> Result<IntentClassification, UnderstandingError> {
    if text.trim().is_empty() {
        return Err(UnderstandingError::EmptyQuery);
    }
    let resp = llm.complete(&PromptRequest::new(TemplateId::IntentClassify).var("query", text))?;
    let reply = IntentReply::parse(&resp.text);
    let (intent, confidence) = match reply.intent {
        Some(i) => (i, reply.confidence.unwrap_or(0.5).clamp(0.0, 1.0)),
        None => {
            tracing::warn!("unusable intent reply, defaulting to Comprehensive");
            (Intent::Comprehensive, FALLBACK_INTENT_CONFIDENCE)
        }
    };
    Ok(IntentClassification {
        intent,
        confidence,
        reply,
    })
}

/// Runs of capitalized words, skipping a lone capitalized first word
/// ("Comprehensive analysis of ...") unless it is an acronym.
pub fn capitalized_entities(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut run: Vec<String> = Vec::new();
    let words: Vec<&str> = text.split_whitespace().collect();
    let flush = |run: &mut Vec<String>, out: &mut Vec<String>| {
        if !run.is_empty() {
            let e = run.join(" ");
            if !out.contains(&e) {
                out.push(e);
            }
            run.clear();
        }
    };
    for (i, raw) in words.iter().enumerate() {
        let ends_clause = raw.ends_with([',', ';', ':', '.', '?', '!']);
        let mut w = raw.trim_matches(|c: char| !c.is_alphanumeric()).to_string();
        for suffix in ["'s", "’s"] {
            if let Some(stripped) = w.strip_suffix(suffix) {
                w = stripped.to_string();
            }
        }
        let capitalized = w.chars().next().is_some_and(char::is_uppercase);
        let acronym = w.len() > 1 && w.chars().all(|c| c.is_uppercase() || c.is_ascii_digit());
        if capitalized && (i > 0 || acronym) {
            run.push(w);
        } else {
            flush(&mut run, &mut out);
        }
        if ends_clause || raw.contains("'s") || raw.contains("’s") {
            flush(&mut run, &mut out);
        }
    }
    flush(&mut run, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchQuery {
    pub text: String,
    #[serde(rename = "type")]
    pub intent: Intent,
    pub domain: String,
    pub constraints: QueryConstraints,
    pub context: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryConstraints {
    pub temporal: TemporalContext,
    /// Site restriction requested by the user, if any.
    pub scope_domain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryUnderstanding {
    pub query: ResearchQuery,
    pub intent_confidence: f64,
    pub temporal: TemporalContext,
    pub entities: Vec<String>,
    pub aliases: Vec<String>,
    pub descriptors: Vec<String>,
    /// Exact phrase the search should pin, if the query names one.
    pub phrase: Option<String>,
    pub complexity: ComplexityScores,
    pub complexity_sigma: f64,
    pub recommended_d_max: usize,
    pub recommended_n_tasks: usize,
    pub strategy: Strategy,
}

impl QueryUnderstanding {
    pub fn target_domain(&self) -> Option<&str> {
        self.query.constraints.scope_domain.as_deref()
    }

    /// Default research subject: the first extracted entity.
    pub fn primary_entity(&self) -> Option<&str> {
        self.entities.first().map(String::as_str)
    }
}

/// Full Stage 1: one classifier call, the temporal rule pass (with the
/// classifier's temporal hint as the model pass for Trend and Prediction
/// queries), complexity assessment and entity collection.
pub fn understand(
    text: &str,
    context: Option<&str>,
    now: NaiveDate,
    llm: &LlmGateway,
    lexicon: &TemporalLexicon,
) -> Result<QueryUnderstanding, UnderstandingError> {
    let text = tidy(text);
    let classification = classify_intent(&text, llm)?;
    let reply = &classification.reply;

    let mut temporal = lexicon.extract(&text, now);
    if temporal.is_none() && matches!(classification.intent, Intent::Trend | Intent::Prediction) {
        if let Some(ctx) = reply
            .temporal_hint
            .and_then(|(cat, date)| TemporalContext::resolve(cat, now, date))
        {
            temporal = ctx;
        }
    }

    let assessment = assess_complexity(&text, classification.intent, &temporal);

    let mut entities = reply.entities.clone();
    for e in capitalized_entities(&text) {
        if !entities.iter().any(|x| x.eq_ignore_ascii_case(&e)) {
            entities.push(e);
        }
    }

    Ok(QueryUnderstanding {
        query: ResearchQuery {
            text,
            intent: classification.intent,
            domain: reply.domain.clone().unwrap_or_else(|| "general".into()),
            constraints: QueryConstraints {
                temporal: temporal.clone(),
                scope_domain: reply.target_domain.clone(),
            },
            context: context.map(String::from),
        },
        intent_confidence: classification.confidence,
        temporal,
        entities,
        aliases: reply.aliases.clone(),
        descriptors: reply.descriptors.clone(),
        phrase: reply.phrase.clone(),
        complexity: assessment.scores,
        complexity_sigma: assessment.sigma,
        recommended_d_max: assessment.d_max,
        recommended_n_tasks: assessment.n_tasks,
        strategy: assessment.strategy,
    })
}
