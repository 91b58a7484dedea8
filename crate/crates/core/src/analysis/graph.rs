//! Knowledge-graph fragment built from the accepted fact base.

use serde::{Deserialize, Serialize};

use crate::gateway::{LlmGateway, PromptRequest, TemplateId};
use crate::json::{extract_json, f64_field, list_field, str_field};
use crate::text::tidy;

use super::{AnalysisError, Fact};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relationship {
    pub from: String,
    pub to: String,
    pub relation: String,
    pub fact_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub entities: Vec<Entity>,
    pub relationships: Vec<Relationship>,
}

impl KnowledgeGraph {
    fn find(&self, name: &str) -> Option<&Entity> {
        self.entities
            .iter()
            .find(|e| e.name.eq_ignore_ascii_case(name))
    }

    /// Drop relationships whose endpoints or cited fact do not exist.
    pub fn retain_valid(&mut self, fact_ids: &[String]) {
        let entities = self.entities.clone();
        let known = |n: &str| entities.iter().any(|e| e.name.eq_ignore_ascii_case(n));
        self.relationships
            .retain(|r| known(&r.from) && known(&r.to) && fact_ids.contains(&r.fact_id));
    }
}

pub fn numbered_facts(facts: &[Fact]) -> String {
    facts
        .iter()
        .enumerate()
        .map(|(i, f)| format!("{}. {}", i + 1, f.content))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_knowledge_graph(
    query: &str,
    facts: &[Fact],
    llm: &LlmGateway,
) -> Result<KnowledgeGraph, AnalysisError> {
    if facts.is_empty() {
        return Ok(KnowledgeGraph::default());
    }
    let reply = llm.complete(
        &PromptRequest::new(TemplateId::KnowledgeGraph)
            .var("query", query)
            .var("facts", numbered_facts(facts)),
    )?;
    let Some(v) = extract_json(&reply.text) else {
        tracing::warn!("unparseable knowledge-graph reply");
        return Ok(KnowledgeGraph::default());
    };
    let mut g = KnowledgeGraph::default();
    for e in list_field(&v, &["entities"]).into_iter().flatten() {
        let Some(name) = str_field(e, &["name"]).map(tidy) else {
            continue;
        };
        if g.find(&name).is_none() {
            g.entities.push(Entity {
                name,
                kind: str_field(e, &["type", "kind"])
                    .unwrap_or("entity")
                    .to_string(),
            });
        }
    }
    for r in list_field(&v, &["relationships"]).into_iter().flatten() {
        let (Some(from), Some(to)) = (str_field(r, &["from"]), str_field(r, &["to"])) else {
            continue;
        };
        let fact = f64_field(r, &["fact"])
            .filter(|x| x.fract() == 0.0 && *x >= 1.0 && (*x as usize) <= facts.len())
            .map(|x| facts[x as usize - 1].id.clone());
        let Some(fact_id) = fact else { continue };
        let (Some(from), Some(to)) = (
            g.find(from).map(|e| e.name.clone()),
            g.find(to).map(|e| e.name.clone()),
        ) else {
            continue;
        };
        g.relationships.push(Relationship {
            from,
            to,
            relation: str_field(r, &["relation"])
                .unwrap_or("related to")
                .to_string(),
            fact_id,
        });
    }
    Ok(g)
}
