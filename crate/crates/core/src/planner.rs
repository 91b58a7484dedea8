//! Stages 2 and 3: hypotheses first, then verification tasks organized
//! around them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalog::SourceCatalog;
use crate::gateway::{LlmError, LlmGateway, PromptRequest, TemplateId};
use crate::json::{extract_json, f64_field, list_field, str_field, string_list};
use crate::text::tidy;
use crate::understanding::QueryUnderstanding;

pub const MIN_HYPOTHESES: usize = 3;
pub const MAX_HYPOTHESES: usize = 5;
pub const HYPOTHESIS_TEMPERATURE: f64 = 0.4;
pub const INITIAL_SIGMA: f64 = 0.5;
pub const MAX_TASKS_PER_HYPOTHESIS: usize = 2;
pub const MAX_TARGET_SOURCES: usize = 4;
pub const IMPORTANCE_WEIGHT: f64 = 0.6;
pub const FEASIBILITY_WEIGHT: f64 = 0.4;
const SCORE_FALLBACK: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("only {found} valid hypotheses after regeneration (need {MIN_HYPOTHESES})")]
    HypothesisShortfall { found: usize },
    #[error("cannot plan research without hypotheses")]
    NoHypotheses,
    #[error(transparent)]
    Provider(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HypothesisStatus {
    Unverified,
    Partial,
    Confirmed,
    Refuted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: String,
    pub statement: String,
    pub rationale: String,
    pub verification_method: String,
    pub expected_outcomes: String,
    pub sigma: f64,
    pub status: HypothesisStatus,
}

impl Hypothesis {
    fn from_value(v: &Value) -> Option<(String, String, String, String)> {
        let field = |keys: &[&str]| str_field(v, keys).map(tidy).filter(|s| !s.is_empty());
        Some((
            field(&["statement", "hypothesis"])?,
            field(&["rationale"])?,
            field(&["verification_method", "verification"])?,
            field(&["expected_outcomes", "expected_outcome", "expected"])?,
        ))
    }
}

fn parse_hypotheses(reply: &str) -> Vec<(String, String, String, String)> {
    let Some(v) = extract_json(reply) else {
        tracing::warn!("hypothesis reply is not JSON");
        return Vec::new();
    };
    let Some(items) = list_field(&v, &["hypotheses"]) else {
        return Vec::new();
    };
    items.iter().filter_map(Hypothesis::from_value).collect()
}

/// Generate 3 to 5 validated hypotheses, regenerating once on a shortfall.
pub fn generate_hypotheses(
    understanding: &QueryUnderstanding,
    references: Option<&str>,
    llm: &LlmGateway,
) -> Result<Vec<Hypothesis>, PlanError> {
    let request = PromptRequest::new(TemplateId::HypothesisGen)
        .temperature(HYPOTHESIS_TEMPERATURE)
        .var("query", &understanding.query.text)
        .var("intent", format!("{:?}", understanding.query.intent))
        .var("domain", &understanding.query.domain)
        .var("temporal", understanding.temporal.describe())
        .var("references", references.unwrap_or("(none)"));

    let mut valid = parse_hypotheses(&llm.complete(&request)?.text);
    if valid.len() < MIN_HYPOTHESES {
        tracing::warn!(
            found = valid.len(),
            "too few valid hypotheses, regenerating"
        );
        valid = parse_hypotheses(&llm.complete(&request)?.text);
        if valid.len() < MIN_HYPOTHESES {
            return Err(PlanError::HypothesisShortfall { found: valid.len() });
        }
    }
    valid.truncate(MAX_HYPOTHESES);
    Ok(valid
        .into_iter()
        .enumerate()
        .map(
            |(i, (statement, rationale, verification_method, expected_outcomes))| Hypothesis {
                id: format!("H{}", i + 1),
                statement,
                rationale,
                verification_method,
                expected_outcomes,
                sigma: INITIAL_SIGMA,
                status: HypothesisStatus::Unverified,
            },
        )
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchTaskSpec {
    pub id: String,
    pub queries: Vec<String>,
    pub target_sources: Vec<String>,
    pub hypothesis_id: String,
    pub priority: f64,
    pub importance: f64,
    pub feasibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchPlan {
    pub tasks: Vec<ResearchTaskSpec>,
    /// Query text of the understanding this plan was built from.
    pub created_from: String,
}

impl ResearchPlan {
    pub fn task(&self, id: &str) -> Option<&ResearchTaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }
}

pub fn task_priority(importance: f64, feasibility: f64) -> f64 {
    IMPORTANCE_WEIGHT * importance.clamp(0.0, 1.0)
        + FEASIBILITY_WEIGHT * feasibility.clamp(0.0, 1.0)
}

struct Draft {
    queries: Vec<String>,
    categories: Vec<String>,
    importance: f64,
    feasibility: f64,
}

fn parse_tasks(reply: &str) -> Vec<Draft> {
    let Some(v) = extract_json(reply) else {
        return Vec::new();
    };
    let Some(items) = list_field(&v, &["tasks"]) else {
        return Vec::new();
    };
    items
        .iter()
        .filter_map(|t| {
            let mut queries: Vec<String> = string_list(t, &["queries"])
                .iter()
                .map(|q| tidy(q))
                .collect();
            if queries.is_empty() {
                queries.extend(str_field(t, &["query"]).map(tidy));
            }
            queries.dedup();
            if queries.is_empty() {
                return None;
            }
            let score = |k: &str| {
                f64_field(t, &[k])
                    .filter(|x| x.is_finite() && (0.0..=1.0).contains(x))
                    .unwrap_or(SCORE_FALLBACK)
            };
            Some(Draft {
                queries,
                categories: string_list(t, &["target_categories", "categories", "target_sources"])
                    .into_iter()
                    .map(|c| c.to_lowercase())
                    .collect(),
                importance: score("importance"),
                feasibility: score("feasibility"),
            })
        })
        .take(MAX_TASKS_PER_HYPOTHESIS)
        .collect()
}

fn target_sources(
    categories: &[String],
    understanding: &QueryUnderstanding,
    catalog: &SourceCatalog,
) -> Vec<String> {
    let mut wanted: Vec<String> = categories
        .iter()
        .filter(|c| catalog.has_category(c))
        .cloned()
        .collect();
    for extra in [understanding.query.domain.as_str(), "government"] {
        if catalog.has_category(extra) && !wanted.iter().any(|c| c == extra) {
            wanted.push(extra.to_string());
        }
    }
    let mut patterns = catalog.patterns_in(&wanted);
    patterns.truncate(MAX_TARGET_SOURCES);
    patterns
}

/// One planning call per hypothesis, 1 to 2 tasks each, truncated to
/// `n_tasks` by priority. Each hypothesis keeps its best task even when
/// that means exceeding `n_tasks` (only possible if there are more
/// hypotheses than task slots).
pub fn plan_research(
    hypotheses: &[Hypothesis],
    understanding: &QueryUnderstanding,
    catalog: &SourceCatalog,
    n_tasks: usize,
    llm: &LlmGateway,
) -> Result<ResearchPlan, PlanError> {
    if hypotheses.is_empty() {
        return Err(PlanError::NoHypotheses);
    }
    let categories = catalog.categories().join(", ");
    // (hypothesis index, draft index, task)
    let mut candidates: Vec<(usize, usize, ResearchTaskSpec)> = Vec::new();
    for (hi, h) in hypotheses.iter().enumerate() {
        let reply = llm.complete(
            &PromptRequest::new(TemplateId::ResearchPlanning)
                .var("query", &understanding.query.text)
                .var("hypothesis", &h.statement)
                .var("verification_method", &h.verification_method)
                .var("categories", &categories),
        )?;
        let mut drafts = parse_tasks(&reply.text);
        if drafts.is_empty() {
            tracing::warn!(hypothesis = %h.id, "unusable planning reply, deriving task from verification method");
            drafts.push(Draft {
                queries: vec![h.verification_method.clone()],
                categories: Vec::new(),
                importance: SCORE_FALLBACK,
                feasibility: SCORE_FALLBACK,
            });
        }
        for (di, d) in drafts.into_iter().enumerate() {
            candidates.push((
                hi,
                di,
                ResearchTaskSpec {
                    id: String::new(),
                    target_sources: target_sources(&d.categories, understanding, catalog),
                    queries: d.queries,
                    hypothesis_id: h.id.clone(),
                    priority: task_priority(d.importance, d.feasibility),
                    importance: d.importance,
                    feasibility: d.feasibility,
                },
            ));
        }
    }

    let by_priority = |a: &(usize, usize, ResearchTaskSpec),
                       b: &(usize, usize, ResearchTaskSpec)| {
        b.2.priority
            .total_cmp(&a.2.priority)
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    };
    candidates.sort_by(by_priority);

    let cap = n_tasks.max(hypotheses.len());
    let mut kept: Vec<bool> = vec![false; candidates.len()];
    let mut covered: BTreeMap<usize, ()> = BTreeMap::new();
    for (i, c) in candidates.iter().enumerate() {
        if covered.insert(c.0, ()).is_none() {
            kept[i] = true;
        }
    }
    let mut count = covered.len();
    for k in kept.iter_mut() {
        if count >= cap {
            break;
        }
        if !*k {
            *k = true;
            count += 1;
        }
    }
    let tasks = candidates
        .into_iter()
        .zip(kept)
        .filter(|(_, k)| *k)
        .enumerate()
        .map(|(i, ((_, _, mut t), _))| {
            t.id = format!("T{}", i + 1);
            t
        })
        .collect();
    Ok(ResearchPlan {
        tasks,
        created_from: understanding.query.text.clone(),
    })
}

/// Validation outcome of one fact linked to a hypothesis, as seen by the
/// status rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkedEvidence {
    pub accepted: bool,
    pub stance: Stance,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stance {
    Supports,
    Refutes,
    Neutral,
}

impl Stance {
    pub fn parse(s: &str) -> Self {
        match s.trim().to_lowercase().as_str() {
            "supports" | "support" | "supporting" | "confirms" => Stance::Supports,
            "refutes" | "refute" | "refuting" | "contradicts" => Stance::Refutes,
            _ => Stance::Neutral,
        }
    }
}

pub fn hypothesis_status(evidence: &[LinkedEvidence]) -> HypothesisStatus {
    let accepted = || evidence.iter().filter(|e| e.accepted);
    let supports = accepted().filter(|e| e.stance == Stance::Supports).count();
    let refutes = accepted().filter(|e| e.stance == Stance::Refutes).count();
    if supports >= 2 && refutes == 0 {
        HypothesisStatus::Confirmed
    } else if refutes >= 2 && supports == 0 {
        HypothesisStatus::Refuted
    } else if supports + refutes >= 1 {
        HypothesisStatus::Partial
    } else {
        HypothesisStatus::Unverified
    }
}

/// Recompute status and sigma from the linked facts. Depends only on the
/// evidence multiset and the prior sigma.
pub fn update_hypothesis_status(h: &Hypothesis, evidence: &[LinkedEvidence]) -> Hypothesis {
    let accepted: Vec<f64> = evidence
        .iter()
        .filter(|e| e.accepted)
        .map(|e| e.confidence)
        .collect();
    let mut out = h.clone();
    out.status = hypothesis_status(evidence);
    if !accepted.is_empty() {
        out.sigma = accepted.iter().sum::<f64>() / accepted.len() as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::parse_script;
    use crate::understanding::{understand, TemporalLexicon};
    use chrono::NaiveDate;
    use serde_json::json;

    fn hyp(statement: &str, vm: Option<&str>) -> Value {
        let mut v = json!({"statement": statement, "rationale": "r", "expected_outcomes": "e"});
        if let Some(vm) = vm {
            v["verification_method"] = json!(vm);
        }
        v
    }

    fn setup(replies: Vec<Value>) -> (QueryUnderstanding, LlmGateway) {
        let mut completions = vec![
            json!({"template_id": "IntentClassify", "response": {"intent": "Comprehensive", "confidence": 0.9, "domain": "enterprise"}}),
        ];
        completions.extend(replies);
        let bundle = parse_script(&json!({"completions": completions}).to_string()).unwrap();
        let llm = bundle.llm_gateway();
        let u = understand(
            "BYD business landscape",
            None,
            NaiveDate::from_ymd_opt(2026, 3, 15).unwrap(),
            &llm,
            &TemporalLexicon::default(),
        )
        .unwrap();
        (u, llm)
    }

    fn gen_reply(items: Vec<Value>) -> Value {
        json!({"template_id": "HypothesisGen", "temperature": 0.4, "response": {"hypotheses": items}})
    }

    #[test]
    fn three_well_formed_items() {
        let (u, llm) = setup(vec![gen_reply(vec![
            hyp("a", Some("va")),
            hyp("b", Some("vb")),
            hyp("c", Some("vc")),
        ])]);
        let hs = generate_hypotheses(&u, None, &llm).unwrap();
        assert_eq!(hs.len(), 3);
        assert!(hs
            .iter()
            .all(|h| h.status == HypothesisStatus::Unverified && h.sigma == 0.5));
        assert_eq!(hs[2].id, "H3");
    }

    #[test]
    fn item_missing_field_is_dropped() {
        let (u, llm) = setup(vec![gen_reply(vec![
            hyp("a", Some("va")),
            hyp("b", None),
            hyp("c", Some("vc")),
            hyp("d", Some("vd")),
        ])]);
        let hs = generate_hypotheses(&u, None, &llm).unwrap();
        assert_eq!(
            hs.iter().map(|h| h.statement.as_str()).collect::<Vec<_>>(),
            ["a", "c", "d"]
        );
    }

    #[test]
    fn shortfall_after_one_retry() {
        let two = || gen_reply(vec![hyp("a", Some("va")), hyp("b", Some("vb"))]);
        let (u, llm) = setup(vec![two(), two()]);
        assert!(matches!(
            generate_hypotheses(&u, None, &llm),
            Err(PlanError::HypothesisShortfall { found: 2 })
        ));
        assert_eq!(llm.stats().calls(TemplateId::HypothesisGen), 2);
    }

    #[test]
    fn regeneration_replaces_rather_than_accumulates() {
        let (u, llm) = setup(vec![
            gen_reply(vec![hyp("a", Some("va"))]),
            gen_reply((0..7).map(|i| hyp(&format!("h{i}"), Some("v"))).collect()),
        ]);
        let hs = generate_hypotheses(&u, None, &llm).unwrap();
        assert_eq!(hs.len(), MAX_HYPOTHESES);
        assert_eq!(hs[0].statement, "h0");
    }

    #[test]
    fn priority_weights() {
        assert_eq!(task_priority(1.0, 1.0), 1.0);
        assert!((task_priority(0.9, 0.5) - 0.74).abs() < 1e-12);
    }

    fn hypotheses(n: usize) -> Vec<Hypothesis> {
        (1..=n)
            .map(|i| Hypothesis {
                id: format!("H{i}"),
                statement: format!("s{i}"),
                rationale: "r".into(),
                verification_method: format!("verify {i}"),
                expected_outcomes: "e".into(),
                sigma: INITIAL_SIGMA,
                status: HypothesisStatus::Unverified,
            })
            .collect()
    }

    fn plan_reply(tasks: Value) -> Value {
        json!({"template_id": "ResearchPlanning", "response": {"tasks": tasks}})
    }

    #[test]
    fn every_hypothesis_gets_a_task() {
        let (u, llm) = setup(vec![
            plan_reply(
                json!([{"queries": ["q1"], "target_categories": ["registry"], "importance": 0.9, "feasibility": 0.5},
                               {"queries": ["q1b"], "importance": 0.2, "feasibility": 0.2}]),
            ),
            plan_reply(json!([{"queries": ["q2"], "importance": 0.7, "feasibility": 0.7}])),
            json!({"template_id": "ResearchPlanning", "response": "sorry"}),
        ]);
        let plan = plan_research(&hypotheses(3), &u, &SourceCatalog::default(), 8, &llm).unwrap();
        assert_eq!(plan.tasks.len(), 4);
        for h in ["H1", "H2", "H3"] {
            assert!(plan.tasks.iter().any(|t| t.hypothesis_id == h));
        }
        assert_eq!(plan.tasks[0].queries, ["q1"]);
        assert_eq!(plan.tasks[0].id, "T1");
        assert!(plan.tasks[0]
            .target_sources
            .contains(&"sec.gov".to_string()));
        let fallback = plan.tasks.iter().find(|t| t.hypothesis_id == "H3").unwrap();
        assert_eq!(fallback.queries, ["verify 3"]);
        assert_eq!(fallback.priority, 0.5);
        assert!(plan
            .tasks
            .windows(2)
            .all(|w| w[0].priority >= w[1].priority));
    }

    #[test]
    fn truncation_keeps_one_task_per_hypothesis() {
        let two = || {
            plan_reply(
                json!([{"queries": ["a"], "importance": 1.0, "feasibility": 1.0},
                              {"queries": ["b"], "importance": 0.9, "feasibility": 0.9}]),
            )
        };
        let weak = plan_reply(json!([{"queries": ["w"], "importance": 0.1, "feasibility": 0.1}]));
        let (u, llm) = setup(vec![two(), two(), weak]);
        let plan = plan_research(&hypotheses(3), &u, &SourceCatalog::default(), 4, &llm).unwrap();
        assert_eq!(plan.tasks.len(), 4);
        assert!(plan.tasks.iter().any(|t| t.hypothesis_id == "H3"));
    }

    fn ev(accepted: bool, stance: Stance) -> LinkedEvidence {
        LinkedEvidence {
            accepted,
            stance,
            confidence: 0.9,
        }
    }

    #[test]
    fn status_rule_table() {
        use Stance::*;
        assert_eq!(
            hypothesis_status(&[ev(true, Supports); 3]),
            HypothesisStatus::Confirmed
        );
        assert_eq!(hypothesis_status(&[]), HypothesisStatus::Unverified);
        assert_eq!(
            hypothesis_status(&[ev(true, Supports)]),
            HypothesisStatus::Partial
        );
        assert_eq!(
            hypothesis_status(&[ev(true, Refutes), ev(true, Refutes)]),
            HypothesisStatus::Refuted
        );
        assert_eq!(
            hypothesis_status(&[ev(true, Supports), ev(true, Supports), ev(true, Refutes)]),
            HypothesisStatus::Partial
        );
        assert_eq!(
            hypothesis_status(&[ev(false, Supports); 4]),
            HypothesisStatus::Unverified
        );
        assert_eq!(
            hypothesis_status(&[ev(true, Neutral)]),
            HypothesisStatus::Unverified
        );
    }

    #[test]
    fn sigma_unchanged_without_accepted_facts() {
        let h = &hypotheses(1)[0];
        assert_eq!(update_hypothesis_status(h, &[]).sigma, 0.5);
        let e = [
            LinkedEvidence {
                accepted: true,
                stance: Stance::Supports,
                confidence: 0.8,
            },
            LinkedEvidence {
                accepted: true,
                stance: Stance::Neutral,
                confidence: 0.9,
            },
        ];
        assert!((update_hypothesis_status(h, &e).sigma - 0.85).abs() < 1e-12);
    }
}
