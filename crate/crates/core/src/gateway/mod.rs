//! Provider gateway: the only entry point for nondeterminism.
//!
//! LLM completions, web search and the clock all come in through the traits
//! defined here. Production code wires HTTP-backed providers; tests and the
//! offline CLI wire scripted providers loaded from a JSON fixture, which makes
//! every run byte-for-byte reproducible.

mod clock;
mod live;
mod llm;
mod prompt;
mod script;
mod search;
mod url;

use thiserror::Error;

pub use clock::{Clock, FixedClock, ManualClock, SystemClock};
pub use live::{
    live_providers_from_env, HttpCompletionProvider, HttpSearchProvider, LiveConfigError,
};
pub use llm::{
    CallStats, Channel, ChannelPolicy, CompletionProvider, LlmGateway, ProviderResponse,
};
pub use prompt::{render_template, PromptRequest, RenderedPrompt, TemplateId, TEMPLATE_VERSION};
pub use script::{
    load_script, parse_script, ScriptBundle, ScriptError, ScriptedCompletions, ScriptedSearch,
};
pub use search::{RawSearchResult, SearchGateway, SearchProvider, SearchRequest, SearchStats};
pub use url::{is_valid_url, normalize_url, url_host};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("timed out after {0} ms")]
    Timeout(u64),
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("script miss: no scripted answer for {kind} call #{ordinal} (key {key:?})")]
    ScriptMiss {
        kind: String,
        key: String,
        ordinal: usize,
    },
}

impl ProviderError {
    /// Transient failures are worth a retry on the same channel.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            ProviderError::Timeout(_) | ProviderError::Unavailable(_) | ProviderError::Transport(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("template {template} references unbound variable {variable:?}")]
    TemplateUnbound {
        template: TemplateId,
        variable: String,
    },
    #[error("no LLM channel configured")]
    NoChannel,
    #[error("{channel:?} channel failed: {source}")]
    ChannelFailed {
        channel: Channel,
        source: ProviderError,
    },
    #[error("both LLM channels failed (primary: {primary}; fallback: {fallback})")]
    BothChannelsFailed {
        primary: ProviderError,
        fallback: ProviderError,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("no search provider configured")]
    NoProviders,
    #[error("search query is empty")]
    EmptyQuery,
    #[error("all search providers failed: {}", format_failures(.failures))]
    AllProvidersFailed {
        failures: Vec<(String, ProviderError)>,
    },
}

fn format_failures(failures: &[(String, ProviderError)]) -> String {
    failures
        .iter()
        .map(|(id, e)| format!("{id}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}
