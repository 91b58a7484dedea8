//! Markdown rendering with domain-specific templates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ReportDocument, ReportError};

const BUNDLED: [(&str, &str); 4] = [
    (
        "default",
        include_str!("../../templates/report/default.json"),
    ),
    (
        "enterprise",
        include_str!("../../templates/report/enterprise.json"),
    ),
    ("person", include_str!("../../templates/report/person.json")),
    (
        "technology",
        include_str!("../../templates/report/technology.json"),
    ),
];

const SECTIONS: [&str; 9] = [
    "summary",
    "hypotheses",
    "facts",
    "derived",
    "contradictions",
    "coverage",
    "gaps",
    "quality",
    "graph",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTemplate {
    pub name: String,
    /// Query domains this template is used for.
    pub domains: Vec<String>,
    pub title_prefix: String,
    pub headings: BTreeMap<String, String>,
    #[serde(default)]
    pub intro: BTreeMap<String, String>,
}

impl ReportTemplate {
    fn parse(name: &str, text: &str) -> Result<Self, ReportError> {
        let t: ReportTemplate = serde_json::from_str(text).map_err(|e| ReportError::Template {
            name: name.to_string(),
            reason: e.to_string(),
        })?;
        if let Some(missing) = SECTIONS.iter().find(|s| !t.headings.contains_key(**s)) {
            return Err(ReportError::Template {
                name: name.to_string(),
                reason: format!("missing heading for section {missing:?}"),
            });
        }
        Ok(t)
    }

    fn heading(&self, section: &str) -> &str {
        &self.headings[section]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: Vec<ReportTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            templates: BUNDLED
                .iter()
                .map(|(n, t)| ReportTemplate::parse(n, t).expect("bundled template is valid"))
                .collect(),
        }
    }
}

impl TemplateSet {
    /// Load every `*.json` template in `dir`; a `default` template is required.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, ReportError> {
        let err = |reason: String| ReportError::Template {
            name: dir.as_ref().display().to_string(),
            reason,
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir.as_ref())
            .map_err(|e| err(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut templates = Vec::new();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(|e| err(e.to_string()))?;
            templates.push(ReportTemplate::parse(&p.display().to_string(), &text)?);
        }
        if !templates.iter().any(|t| t.name == "default") {
            return Err(err("no template named \"default\"".into()));
        }
        Ok(Self { templates })
    }

    pub fn select(&self, domain: &str) -> &ReportTemplate {
        let d = domain.trim().to_lowercase();
        self.templates
            .iter()
            .find(|t| t.domains.contains(&d))
            .or_else(|| self.templates.iter().find(|t| t.name == "default"))
            .expect("template set has a default")
    }

    pub fn names(&self) -> Vec<&str> {
        self.templates.iter().map(|t| t.name.as_str()).collect()
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

/// Markdown rendering of a report. Section order is fixed; the template
/// only supplies headings and optional introductions.
pub fn render_markdown(doc: &ReportDocument, templates: &TemplateSet) -> String {
    let t = templates
        .templates
        .iter()
        .find(|t| t.name == doc.template)
        .unwrap_or_else(|| templates.select(&doc.domain));
    let mut md = String::new();
    let section = |md: &mut String, key: &str| {
        let _ = writeln!(md, "\n## {}\n", t.heading(key));
        if let Some(intro) = t.intro.get(key) {
            let _ = writeln!(md, "{intro}\n");
        }
    };

    let _ = writeln!(md, "# {}", doc.title);
    if doc.degraded {
        let _ = writeln!(
            md,
            "\n> **Degraded run:** supplementary research did not complete."
        );
    }

    section(&mut md, "summary");
    let _ = writeln!(md, "{}", doc.summary);

    section(&mut md, "hypotheses");
    for h in &doc.hypotheses {
        let _ = writeln!(
            md,
            "- **{}** {} (*{:?}*, confidence {:.2})",
            h.id, h.statement, h.status, h.sigma
        );
        let _ = writeln!(md, "  - Rationale: {}", h.rationale);
        let _ = writeln!(md, "  - Verification: {}", h.verification_method);
        let _ = writeln!(md, "  - Expected: {}", h.expected_outcomes);
    }

    section(&mut md, "facts");
    if doc.facts.is_empty() {
        let _ = writeln!(md, "No facts were extracted.");
    }
    for f in &doc.facts {
        let verdict = f
            .verdict
            .map(|v| format!("{v:?}"))
            .unwrap_or_else(|| "Unvalidated".into());
        let flag = if f.needs_verification {
            " **[needs verification]**"
        } else {
            ""
        };
        let date = f
            .timestamp
            .as_deref()
            .map(|d| format!(", {d}"))
            .unwrap_or_default();
        let link = f
            .hypothesis_id
            .as_deref()
            .map(|h| format!(" ({h}, {:?})", f.stance))
            .unwrap_or_default();
        let _ = writeln!(
            md,
            "- `{}` {}{flag}{link}\n  - Source: [{}]({}){date}\n  - Verdict: {verdict}, confidence {:.2} ({} of {} addressing sources confirm)",
            f.id,
            f.content,
            if f.source_title.is_empty() { &f.source_url } else { &f.source_title },
            f.source_url,
            f.confidence,
            f.confirming_sources,
            f.addressing_sources,
        );
        for a in &f.annotations {
            let _ = writeln!(md, "  - Note: {a}");
        }
    }

    section(&mut md, "derived");
    if doc.derived_facts.is_empty() {
        let _ = writeln!(md, "No conclusions were derived.");
    }
    for d in &doc.derived_facts {
        let _ = writeln!(
            md,
            "- `{}` {} ({:?}, confidence {:.2})\n  - Based on: {}\n  - Reasoning: {}",
            d.id,
            d.content,
            d.certainty,
            d.confidence,
            d.basis_ids.join(", "),
            d.reasoning_logic
        );
    }

    section(&mut md, "contradictions");
    if doc.contradictions.is_empty() {
        let _ = writeln!(md, "No conflicting claims were found.");
    }
    for (i, c) in doc.contradictions.iter().enumerate() {
        let _ = writeln!(
            md,
            "- **C{}** {:?} conflict between {}, {:?}: {}",
            i + 1,
            c.kind,
            c.fact_ids.join(" and "),
            c.strategy_used,
            c.annotation
        );
    }

    section(&mut md, "coverage");
    let _ = writeln!(md, "| Requirement | Status | Evidence |\n|---|---|---|");
    for r in &doc.coverage.requirements {
        let evidence = if r.supporting_fact_ids.is_empty() {
            "none".to_string()
        } else {
            r.supporting_fact_ids.join(", ")
        };
        let _ = writeln!(
            md,
            "| {} {} | {:?} | {} |",
            r.id,
            r.description.replace('|', "/"),
            r.status,
            evidence
        );
    }
    let _ = writeln!(md, "\nCoverage score: {}", pct(doc.coverage.score));

    section(&mut md, "gaps");
    if doc.gaps.is_empty() {
        let _ = writeln!(md, "No significant gaps remain.");
    }
    for g in &doc.gaps {
        let inferable = if g.inferable {
            "inferable from existing facts"
        } else {
            "requires new evidence"
        };
        let _ = writeln!(
            md,
            "- **{}** ({:?}, {:?}, {inferable}): {}",
            g.name, g.importance, g.kind, g.reason
        );
        if !g.suggested_queries.is_empty() {
            let _ = writeln!(
                md,
                "  - Suggested searches: {}",
                g.suggested_queries.join("; ")
            );
        }
    }
    for it in &doc.gap_iterations {
        let _ = writeln!(
            md,
            "- Iteration {}: {} gaps, {} supplementary queries, {} new facts, coverage {} → {}",
            it.iteration,
            it.gaps_found.len(),
            it.queries.len(),
            it.facts_added,
            pct(it.coverage_before),
            pct(it.coverage_after)
        );
    }

    section(&mut md, "quality");
    let q = &doc.quality;
    let _ = writeln!(
        md,
        "| Completeness | Accuracy | Traceability | Composite |\n|---|---|---|---|\n| {} | {} | {} | {} |",
        pct(q.c),
        pct(q.a),
        pct(q.t),
        pct(q.composite)
    );

    section(&mut md, "graph");
    if doc.knowledge_graph.entities.is_empty() {
        let _ = writeln!(md, "No entities were mapped.");
    } else {
        let names: Vec<String> = doc
            .knowledge_graph
            .entities
            .iter()
            .map(|e| format!("{} ({})", e.name, e.kind))
            .collect();
        let _ = writeln!(md, "Entities: {}\n", names.join(", "));
        for r in &doc.knowledge_graph.relationships {
            let _ = writeln!(
                md,
                "- {} → {} → {} [{}]",
                r.from, r.relation, r.to, r.fact_id
            );
        }
    }

    let _ = writeln!(md, "\n---\n");
    for n in &doc.notes {
        let _ = writeln!(md, "*{n}*\n");
    }
    let _ = writeln!(md, "Generated {}", doc.generated_at);
    md
}
