//! Query optimization: expand a plain query with temporal, site and
//! exact-phrase variants. Queries that already use search syntax pass
//! through untouched.

use chrono::Datelike;

use crate::understanding::{QueryUnderstanding, TemporalContext};

const OPERATORS: &[&str] = &[
    "site:",
    "after:",
    "before:",
    "filetype:",
    "intitle:",
    "inurl:",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerContext {
    pub temporal: Option<TemporalContext>,
    pub site: Option<String>,
    pub phrase: Option<String>,
}

impl OptimizerContext {
    pub fn from_understanding(u: &QueryUnderstanding) -> Self {
        Self {
            temporal: (!u.temporal.is_none()).then(|| u.temporal.clone()),
            site: u.target_domain().map(String::from),
            phrase: u.phrase.clone(),
        }
    }
}

/// True when the query already carries advanced search syntax.
pub fn has_search_syntax(q: &str) -> bool {
    let lower = q.to_lowercase();
    OPERATORS.iter().any(|op| lower.contains(op)) || q.matches('"').count() >= 2
}

pub fn optimize_with(q: &str, ctx: &OptimizerContext) -> Vec<String> {
    let q = q.trim();
    let mut out = vec![q.to_string()];
    if q.is_empty() || has_search_syntax(q) {
        return out;
    }
    let mut push = |v: String| {
        if !out.contains(&v) {
            out.push(v);
        }
    };
    if let Some(t) = &ctx.temporal {
        if let Some(year) = t.end_date.or(t.start_date).map(|d| d.year()) {
            if !q.contains(&year.to_string()) {
                push(format!("{year} {q}"));
            }
        }
        if let Some(start) = t.start_date {
            push(format!("{q} after:{start}"));
        }
    }
    if let Some(site) = ctx.site.as_deref().map(str::trim).filter(|s| !s.is_empty()) {
        push(format!("{q} site:{site}"));
    }
    if let Some(phrase) = ctx
        .phrase
        .as_deref()
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        push(format!("{q} \"{phrase}\""));
    }
    out
}

pub fn optimize_query(q: &str, understanding: &QueryUnderstanding) -> Vec<String> {
    optimize_with(q, &OptimizerContext::from_understanding(understanding))
}
