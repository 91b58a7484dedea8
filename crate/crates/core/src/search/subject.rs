//! Subject locking: score how strongly a piece of text is about the target
//! entity, blending exact name matches with descriptor similarity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::RawSearchResult;
use crate::text::{
    contains_token_run, content_token_set, content_tokens, cosine, term_vector, tokenize,
};
use crate::understanding::QueryUnderstanding;

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_LAMBDA: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("subject name is empty")]
    EmptyName,
    #[error("{0} must lie in [0, 1]")]
    OutOfRange(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub canonical_name: String,
    pub aliases: Vec<String>,
    pub descriptors: Vec<String>,
    pub theta: f64,
    pub lambda: f64,
}

impl SubjectProfile {
    pub fn new(canonical_name: &str) -> Result<Self, ProfileError> {
        let name = canonical_name.trim();
        if tokenize(name).is_empty() {
            return Err(ProfileError::EmptyName);
        }
        Ok(Self {
            canonical_name: name.to_string(),
            aliases: Vec::new(),
            descriptors: Vec::new(),
            theta: DEFAULT_THETA,
            lambda: DEFAULT_LAMBDA,
        })
    }

    pub fn with_aliases<I: IntoIterator<Item = S>, S: Into<String>>(mut self, aliases: I) -> Self {
        self.aliases = aliases.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_descriptors<I: IntoIterator<Item = S>, S: Into<String>>(
        mut self,
        descriptors: I,
    ) -> Self {
        self.descriptors = descriptors.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_threshold(mut self, theta: f64) -> Result<Self, ProfileError> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(ProfileError::OutOfRange("theta"));
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self, ProfileError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(ProfileError::OutOfRange("lambda"));
        }
        self.lambda = lambda;
        Ok(self)
    }

    /// Profile for the understanding's primary entity. Descriptors default
    /// to the query's content words other than the name itself.
    pub fn from_understanding(u: &QueryUnderstanding) -> Option<Self> {
        let name = u.primary_entity()?;
        let profile = Self::new(name).ok()?.with_aliases(u.aliases.clone());
        let descriptors = if u.descriptors.is_empty() {
            let own = profile.name_token_set();
            content_tokens(&u.query.text)
                .into_iter()
                .filter(|t| !own.contains(t))
                .collect()
        } else {
            u.descriptors.clone()
        };
        Some(profile.with_descriptors(descriptors))
    }

    fn names(&self) -> impl Iterator<Item = &String> {
        std::iter::once(&self.canonical_name).chain(self.aliases.iter())
    }

    /// Content tokens of the name and all aliases.
    pub fn name_token_set(&self) -> std::collections::BTreeSet<String> {
        self.names().flat_map(|n| content_tokens(n)).collect()
    }

    pub fn lexical(&self, title: &str, snippet: &str) -> f64 {
        let fields = [tokenize(title), tokenize(snippet)];
        let exact = self.names().any(|n| {
            let needle = tokenize(n);
            fields.iter().any(|f| contains_token_run(f, &needle))
        });
        if exact {
            return 1.0;
        }
        let name = tokenize(&self.canonical_name);
        let present = name
            .iter()
            .filter(|t| fields.iter().any(|f| f.contains(t)))
            .count();
        present as f64 / name.len() as f64
    }

    /// Cosine between the descriptor bag (the names, when there are no
    /// descriptors) and the text.
    pub fn semantic(&self, text: &str) -> f64 {
        let mut bag: Vec<String> = self
            .descriptors
            .iter()
            .flat_map(|d| content_tokens(d))
            .collect();
        if bag.is_empty() {
            bag.extend(self.names().flat_map(|n| content_tokens(n)));
        }
        cosine(&term_vector(bag), &term_vector(content_tokens(text))).clamp(0.0, 1.0)
    }

    pub fn relevance(&self, title: &str, snippet: &str) -> f64 {
        let text = format!("{title} {snippet}");
        subject_score(
            self.lexical(title, snippet),
            self.semantic(&text),
            self.lambda,
        )
    }

    pub fn accepts(&self, rho: f64) -> bool {
        rho >= self.theta
    }

    /// True when `text` shares at least one name token with the subject.
    pub fn mentions(&self, text: &str) -> bool {
        let toks = content_token_set(text);
        self.name_token_set().iter().any(|t| toks.contains(t))
    }
}

/// rho = lambda * lex + (1 - lambda) * sem
pub fn subject_score(lex: f64, sem: f64, lambda: f64) -> f64 {
    (lambda * lex + (1.0 - lambda) * sem).clamp(0.0, 1.0)
}

pub fn subject_relevance(result: &RawSearchResult, profile: &SubjectProfile) -> f64 {
    profile.relevance(&result.title, &result.snippet)
}
