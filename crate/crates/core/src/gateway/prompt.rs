use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::LlmError;

/// Version tag of the shipped prompt templates.
pub const TEMPLATE_VERSION: &str = "v1";

const DEFAULT_TEMPERATURE: f64 = 0.2;
const DEFAULT_MAX_OUTPUT_CHARS: usize = 8_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    /// Level 1: subject-action-object fact extraction.
    FactExtraction,
    /// Level 2: chain-reaction impact inference.
    ImpactInference,
    /// Level 3: business-oriented recommendations.
    DecisionRecommendation,
    /// Multi-step fact checking of one claim against the corpus.
    RumorVerification,
    HypothesisGen,
    Reasoning,
    GapIdentify,
    IntentClassify,
    ReportCompose,
    ResearchPlanning,
    ContradictionCheck,
    RequirementDecompose,
    KnowledgeGraph,
}

impl TemplateId {
    pub const ALL: [TemplateId; 13] = [
        TemplateId::FactExtraction,
        TemplateId::ImpactInference,
        TemplateId::DecisionRecommendation,
        TemplateId::RumorVerification,
        TemplateId::HypothesisGen,
        TemplateId::Reasoning,
        TemplateId::GapIdentify,
        TemplateId::IntentClassify,
        TemplateId::ReportCompose,
        TemplateId::ResearchPlanning,
        TemplateId::ContradictionCheck,
        TemplateId::RequirementDecompose,
        TemplateId::KnowledgeGraph,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::FactExtraction => "FactExtraction",
            TemplateId::ImpactInference => "ImpactInference",
            TemplateId::DecisionRecommendation => "DecisionRecommendation",
            TemplateId::RumorVerification => "RumorVerification",
            TemplateId::HypothesisGen => "HypothesisGen",
            TemplateId::Reasoning => "Reasoning",
            TemplateId::GapIdentify => "GapIdentify",
            TemplateId::IntentClassify => "IntentClassify",
            TemplateId::ReportCompose => "ReportCompose",
            TemplateId::ResearchPlanning => "ResearchPlanning",
            TemplateId::ContradictionCheck => "ContradictionCheck",
            TemplateId::RequirementDecompose => "RequirementDecompose",
            TemplateId::KnowledgeGraph => "KnowledgeGraph",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Template text as shipped with the engine.
    pub fn text(self) -> &'static str {
        match self {
            TemplateId::FactExtraction => include_str!("../../templates/fact_extraction.v1.txt"),
            TemplateId::ImpactInference => include_str!("../../templates/impact_inference.v1.txt"),
            TemplateId::DecisionRecommendation => {
                include_str!("../../templates/decision_recommendation.v1.txt")
            }
            TemplateId::RumorVerification => {
                include_str!("../../templates/rumor_verification.v1.txt")
            }
            TemplateId::HypothesisGen => include_str!("../../templates/hypothesis_gen.v1.txt"),
            TemplateId::Reasoning => include_str!("../../templates/reasoning.v1.txt"),
            TemplateId::GapIdentify => include_str!("../../templates/gap_identify.v1.txt"),
            TemplateId::IntentClassify => include_str!("../../templates/intent_classify.v1.txt"),
            TemplateId::ReportCompose => include_str!("../../templates/report_compose.v1.txt"),
            TemplateId::ResearchPlanning => {
                include_str!("../../templates/research_planning.v1.txt")
            }
            TemplateId::ContradictionCheck => {
                include_str!("../../templates/contradiction_check.v1.txt")
            }
            TemplateId::RequirementDecompose => {
                include_str!("../../templates/requirement_decompose.v1.txt")
            }
            TemplateId::KnowledgeGraph => include_str!("../../templates/knowledge_graph.v1.txt"),
        }
    }

    /// The variable whose value scripted providers match against.
    pub fn key_variable(self) -> &'static str {
        match self {
            TemplateId::FactExtraction => "url",
            TemplateId::ImpactInference | TemplateId::DecisionRecommendation => "subject",
            TemplateId::RumorVerification => "fact",
            TemplateId::ResearchPlanning => "hypothesis",
            TemplateId::ContradictionCheck => "pair",
            TemplateId::HypothesisGen
            | TemplateId::Reasoning
            | TemplateId::GapIdentify
            | TemplateId::IntentClassify
            | TemplateId::ReportCompose
            | TemplateId::RequirementDecompose
            | TemplateId::KnowledgeGraph => "query",
        }
    }

    pub fn default_temperature(self) -> f64 {
        match self {
            TemplateId::HypothesisGen => 0.4,
            TemplateId::Reasoning => 0.3,
            _ => DEFAULT_TEMPERATURE,
        }
    }

    /// Placeholder names referenced by the template, in first-use order.
    pub fn variables(self) -> Vec<&'static str> {
        let mut seen = Vec::new();
        for cap in placeholder_re().captures_iter(self.text()) {
            let name = cap.get(1).unwrap().as_str();
            if !seen.contains(&name) {
                seen.push(name);
            }
        }
        seen
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_][a-z0-9_]*)\}").unwrap())
}

/// Substitute `{name}` placeholders. Fails on the first unbound name.
pub fn render_template(text: &str, vars: &BTreeMap<String, String>) -> Result<String, String> {
    let re = placeholder_re();
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for cap in re.captures_iter(text) {
        let whole = cap.get(0).unwrap();
        let name = cap.get(1).unwrap().as_str();
        let value = vars.get(name).ok_or_else(|| name.to_string())?;
        out.push_str(&text[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptRequest {
    pub template_id: TemplateId,
    pub variables: BTreeMap<String, String>,
    pub temperature: f64,
    pub max_output_chars: usize,
}

impl PromptRequest {
    pub fn new(template_id: TemplateId) -> Self {
        Self {
            template_id,
            variables: BTreeMap::new(),
            temperature: template_id.default_temperature(),
            max_output_chars: DEFAULT_MAX_OUTPUT_CHARS,
        }
    }

    pub fn var(mut self, name: &str, value: impl Into<String>) -> Self {
        self.variables.insert(name.to_string(), value.into());
        self
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t.clamp(0.0, 1.0);
        self
    }

    pub fn render(&self) -> Result<RenderedPrompt, LlmError> {
        let text =
            render_template(self.template_id.text(), &self.variables).map_err(|variable| {
                LlmError::TemplateUnbound {
                    template: self.template_id,
                    variable,
                }
            })?;
        let key = self
            .variables
            .get(self.template_id.key_variable())
            .cloned()
            .unwrap_or_default();
        Ok(RenderedPrompt {
            template_id: self.template_id,
            key,
            text,
            temperature: self.temperature,
            max_output_chars: self.max_output_chars,
        })
    }
}

/// A fully substituted prompt ready to send to a provider.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub template_id: TemplateId,
    /// Value of the template's key variable.
    pub key: String,
    pub text: String,
    pub temperature: f64,
    pub max_output_chars: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_template_names_its_key_variable() {
        for id in TemplateId::ALL {
            assert!(
                id.variables().contains(&id.key_variable()),
                "{id} does not reference {}",
                id.key_variable()
            );
            assert_eq!(TemplateId::parse(id.as_str()), Some(id));
        }
    }

    #[test]
    fn json_examples_in_templates_are_not_placeholders() {
        assert_eq!(TemplateId::IntentClassify.variables(), ["query"]);
    }

    #[test]
    fn default_temperatures() {
        assert_eq!(
            PromptRequest::new(TemplateId::HypothesisGen).temperature,
            0.4
        );
        assert_eq!(PromptRequest::new(TemplateId::Reasoning).temperature, 0.3);
        assert_eq!(
            PromptRequest::new(TemplateId::Reasoning)
                .temperature(0.9)
                .temperature,
            0.9
        );
    }

    #[test]
    fn unbound_variable_is_reported() {
        let err = PromptRequest::new(TemplateId::Reasoning)
            .var("query", "q")
            .render()
            .unwrap_err();
        assert_eq!(
            err,
            LlmError::TemplateUnbound {
                template: TemplateId::Reasoning,
                variable: "facts".into()
            }
        );
    }

    #[test]
    fn render_substitutes_and_sets_key() {
        let p = PromptRequest::new(TemplateId::IntentClassify)
            .var("query", "BYD sales")
            .render()
            .unwrap();
        assert!(p.text.contains("Query: BYD sales"));
        assert_eq!(p.key, "BYD sales");
    }
}
