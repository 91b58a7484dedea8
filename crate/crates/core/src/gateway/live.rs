//! HTTP-backed providers selected through environment variables.
//!
//! * `HDR_LLM_PRIMARY_URL`, `HDR_LLM_FALLBACK_URL`: OpenAI-compatible chat
//!   completion endpoints. `HDR_LLM_API_KEY` / `HDR_LLM_FALLBACK_API_KEY` are
//!   sent as bearer tokens, `HDR_LLM_MODEL` names the model.
//! * `HDR_SEARCH_PROVIDERS`: comma-separated JSON search endpoints, queried as
//!   `GET <url>?q=..&count=..` and expected to answer
//!   `{"results": [{"title", "url", "snippet", "published_at"}]}`.
//!   `HDR_SEARCH_API_KEY` is sent as a bearer token.

use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};
use thiserror::Error;

use super::{
    CompletionProvider, LlmGateway, ProviderError, RawSearchResult, RenderedPrompt, SearchGateway,
    SearchProvider, SearchRequest,
};

#[derive(Debug, Error)]
pub enum LiveConfigError {
    #[error("no LLM endpoint configured (set HDR_LLM_PRIMARY_URL or HDR_LLM_FALLBACK_URL)")]
    NoLlm,
    #[error("no search endpoint configured (set HDR_SEARCH_PROVIDERS)")]
    NoSearch,
    #[error("cannot build HTTP client: {0}")]
    Client(String),
}

fn classify(e: reqwest::Error) -> ProviderError {
    if e.is_timeout() {
        ProviderError::Timeout(0)
    } else if e.is_status() {
        ProviderError::Unavailable(e.to_string())
    } else if e.is_decode() {
        ProviderError::Malformed(e.to_string())
    } else {
        ProviderError::Transport(e.to_string())
    }
}

pub struct HttpCompletionProvider {
    id: String,
    url: String,
    token: Option<String>,
    model: String,
    client: Client,
}

impl HttpCompletionProvider {
    pub fn new(
        id: &str,
        url: &str,
        token: Option<String>,
        model: &str,
    ) -> Result<Self, LiveConfigError> {
        Ok(Self {
            id: id.to_string(),
            url: url.to_string(),
            token,
            model: model.to_string(),
            client: Client::builder()
                .build()
                .map_err(|e| LiveConfigError::Client(e.to_string()))?,
        })
    }
}

impl CompletionProvider for HttpCompletionProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        timeout: Duration,
    ) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": prompt.temperature,
            "max_tokens": (prompt.max_output_chars / 3).max(64),
        });
        let mut req = self.client.post(&self.url).timeout(timeout).json(&body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let reply: Value = req
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(classify)?;
        reply
            .pointer("/choices/0/message/content")
            .or_else(|| reply.get("text"))
            .and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| ProviderError::Malformed("no completion text in reply".into()))
    }
}

pub struct HttpSearchProvider {
    id: String,
    url: String,
    token: Option<String>,
    timeout: Duration,
    client: Client,
}

impl HttpSearchProvider {
    pub fn new(url: &str, token: Option<String>) -> Result<Self, LiveConfigError> {
        let id = super::url_host(url).unwrap_or_else(|| url.to_string());
        Ok(Self {
            id,
            url: url.to_string(),
            token,
            timeout: Duration::from_secs(30),
            client: Client::builder()
                .build()
                .map_err(|e| LiveConfigError::Client(e.to_string()))?,
        })
    }
}

impl SearchProvider for HttpSearchProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn search(&self, request: &SearchRequest) -> Result<Vec<RawSearchResult>, ProviderError> {
        let mut params = vec![
            ("q", request.query.clone()),
            ("count", request.max_results.to_string()),
        ];
        if let Some(d) = request.after_date {
            params.push(("after", d.to_string()));
        }
        if let Some(site) = &request.site_restrict {
            params.push(("site", site.clone()));
        }
        let mut req = self
            .client
            .get(&self.url)
            .timeout(self.timeout)
            .query(&params);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let reply: Value = req
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(classify)?;
        let items = reply
            .get("results")
            .cloned()
            .ok_or_else(|| ProviderError::Malformed("missing results".into()))?;
        let mut results: Vec<RawSearchResult> =
            serde_json::from_value(items).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        for r in &mut results {
            r.provider_id = self.id.clone();
        }
        results.truncate(request.max_results);
        Ok(results)
    }
}

fn env(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

/// Build gateways from `HDR_*` environment variables.
pub fn live_providers_from_env() -> Result<(LlmGateway, SearchGateway), LiveConfigError> {
    let model = env("HDR_LLM_MODEL").unwrap_or_else(|| "default".to_string());
    let mut llm = LlmGateway::new();
    if let Some(url) = env("HDR_LLM_PRIMARY_URL") {
        llm = llm.with_primary(Arc::new(HttpCompletionProvider::new(
            "primary",
            &url,
            env("HDR_LLM_API_KEY"),
            &model,
        )?));
    }
    if let Some(url) = env("HDR_LLM_FALLBACK_URL") {
        llm = llm.with_fallback(Arc::new(HttpCompletionProvider::new(
            "fallback",
            &url,
            env("HDR_LLM_FALLBACK_API_KEY"),
            &model,
        )?));
    }
    if !llm.has_channel() {
        return Err(LiveConfigError::NoLlm);
    }
    let token = env("HDR_SEARCH_API_KEY");
    let providers = env("HDR_SEARCH_PROVIDERS")
        .map(|list| {
            list.split(',')
                .map(str::trim)
                .filter(|u| !u.is_empty())
                .map(|u| {
                    HttpSearchProvider::new(u, token.clone())
                        .map(|p| Arc::new(p) as Arc<dyn SearchProvider>)
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?
        .unwrap_or_default();
    if providers.is_empty() {
        return Err(LiveConfigError::NoSearch);
    }
    Ok((llm, SearchGateway::new(providers)))
}
