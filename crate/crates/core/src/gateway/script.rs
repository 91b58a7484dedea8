//! Scripted providers that replay a JSON fixture.
//!
//! ```json
//! { "completions": [ {"template_id": "IntentClassify", "match": "prefix:BYD", "response": {...}} ],
//!   "searches":    [ {"query_match": "BYD overseas sales", "results": [ {...} ]} ] }
//! ```
//!
//! `match` / `query_match` is compared with the call's key (the template's key
//! variable, or the search query): an exact string, or `prefix:<text>`. An
//! absent `match` accepts any key. Each call takes the first entry, in file
//! order, that matches and has not been used yet; `"sticky": true` entries are
//! never used up. Entries may carry `"error"` (`timeout`, `unavailable`,
//! `transport`, `malformed`) instead of a response, and completions may pin
//! `"channel"` (`primary` or `fallback`) and `"temperature"`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use super::{
    is_valid_url, normalize_url, CompletionProvider, LlmGateway, ProviderError, RawSearchResult,
    RenderedPrompt, SearchGateway, SearchProvider, SearchRequest, TemplateId,
};

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid script: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
enum KeyMatch {
    Any,
    Exact(String),
    Prefix(String),
}

impl KeyMatch {
    fn parse(raw: Option<String>) -> Self {
        match raw {
            None => KeyMatch::Any,
            Some(s) => match s.strip_prefix("prefix:") {
                Some(p) => KeyMatch::Prefix(p.to_string()),
                None => KeyMatch::Exact(s),
            },
        }
    }

    fn accepts(&self, key: &str) -> bool {
        match self {
            KeyMatch::Any => true,
            KeyMatch::Exact(s) => s == key,
            KeyMatch::Prefix(p) => key.starts_with(p.as_str()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScriptedFailure {
    Timeout,
    Unavailable,
    Transport,
    Malformed,
}

impl ScriptedFailure {
    fn parse(s: &str) -> Result<Self, ScriptError> {
        match s {
            "timeout" => Ok(Self::Timeout),
            "unavailable" => Ok(Self::Unavailable),
            "transport" => Ok(Self::Transport),
            "malformed" => Ok(Self::Malformed),
            other => Err(ScriptError::Parse(format!(
                "unknown scripted error {other:?}"
            ))),
        }
    }

    fn to_error(self, timeout: Duration) -> ProviderError {
        match self {
            Self::Timeout => ProviderError::Timeout(timeout.as_millis() as u64),
            Self::Unavailable => ProviderError::Unavailable("scripted outage".into()),
            Self::Transport => ProviderError::Transport("scripted transport failure".into()),
            Self::Malformed => ProviderError::Malformed("scripted malformed reply".into()),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompletion {
    template_id: String,
    #[serde(rename = "match")]
    key_match: Option<String>,
    response: Option<Value>,
    error: Option<String>,
    channel: Option<String>,
    temperature: Option<f64>,
    #[serde(default)]
    sticky: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSearch {
    query_match: Option<String>,
    provider: Option<String>,
    #[serde(default)]
    results: Vec<RawSearchResult>,
    error: Option<String>,
    #[serde(default)]
    sticky: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScript {
    #[serde(default)]
    completions: Vec<RawCompletion>,
    #[serde(default)]
    searches: Vec<RawSearch>,
}

#[derive(Debug, Clone)]
struct CompletionEntry {
    template: TemplateId,
    key: KeyMatch,
    outcome: Result<String, ScriptedFailure>,
    temperature: Option<f64>,
    sticky: bool,
}

#[derive(Debug, Clone)]
struct SearchEntry {
    key: KeyMatch,
    outcome: Result<Vec<RawSearchResult>, ScriptedFailure>,
    sticky: bool,
}

#[derive(Debug, Default)]
struct Cursor {
    used: Vec<bool>,
    ordinals: BTreeMap<String, usize>,
}

impl Cursor {
    fn new(n: usize) -> Self {
        Self {
            used: vec![false; n],
            ordinals: BTreeMap::new(),
        }
    }

    fn next_ordinal(&mut self, kind: &str) -> usize {
        let n = self.ordinals.entry(kind.to_string()).or_insert(0);
        *n += 1;
        *n
    }
}

/// Replays scripted completions for one LLM channel.
#[derive(Debug)]
pub struct ScriptedCompletions {
    id: String,
    entries: Vec<CompletionEntry>,
    cursor: Mutex<Cursor>,
}

impl ScriptedCompletions {
    fn new(id: &str, entries: Vec<CompletionEntry>) -> Self {
        let n = entries.len();
        Self {
            id: id.to_string(),
            entries,
            cursor: Mutex::new(Cursor::new(n)),
        }
    }

    /// Number of non-sticky entries not yet replayed.
    pub fn remaining(&self) -> usize {
        let cursor = self.cursor.lock().unwrap();
        self.entries
            .iter()
            .zip(&cursor.used)
            .filter(|(e, used)| !e.sticky && !**used)
            .count()
    }

    pub fn reset(&self) {
        *self.cursor.lock().unwrap() = Cursor::new(self.entries.len());
    }
}

impl CompletionProvider for ScriptedCompletions {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        timeout: Duration,
    ) -> Result<String, ProviderError> {
        let mut cursor = self.cursor.lock().unwrap();
        let ordinal = cursor.next_ordinal(prompt.template_id.as_str());
        let hit = self.entries.iter().enumerate().find(|(i, e)| {
            !cursor.used[*i]
                && e.template == prompt.template_id
                && e.key.accepts(&prompt.key)
                && e.temperature
                    .is_none_or(|t| (t - prompt.temperature).abs() < 1e-9)
        });
        match hit {
            Some((i, entry)) => {
                if !entry.sticky {
                    cursor.used[i] = true;
                }
                entry.outcome.clone().map_err(|f| f.to_error(timeout))
            }
            None => Err(ProviderError::ScriptMiss {
                kind: prompt.template_id.as_str().to_string(),
                key: prompt.key.clone(),
                ordinal,
            }),
        }
    }
}

/// Replays scripted search answers for one provider id.
#[derive(Debug)]
pub struct ScriptedSearch {
    id: String,
    entries: Vec<SearchEntry>,
    cursor: Mutex<Cursor>,
}

impl ScriptedSearch {
    fn new(id: &str, entries: Vec<SearchEntry>) -> Self {
        let n = entries.len();
        Self {
            id: id.to_string(),
            entries,
            cursor: Mutex::new(Cursor::new(n)),
        }
    }

    pub fn reset(&self) {
        *self.cursor.lock().unwrap() = Cursor::new(self.entries.len());
    }
}

impl SearchProvider for ScriptedSearch {
    fn id(&self) -> &str {
        &self.id
    }

    fn search(&self, request: &SearchRequest) -> Result<Vec<RawSearchResult>, ProviderError> {
        let mut cursor = self.cursor.lock().unwrap();
        let ordinal = cursor.next_ordinal("search");
        let hit = self
            .entries
            .iter()
            .enumerate()
            .find(|(i, e)| !cursor.used[*i] && e.key.accepts(&request.query));
        match hit {
            Some((i, entry)) => {
                if !entry.sticky {
                    cursor.used[i] = true;
                }
                entry
                    .outcome
                    .clone()
                    .map(|mut rs| {
                        rs.truncate(request.max_results);
                        rs
                    })
                    .map_err(|f| f.to_error(Duration::ZERO))
            }
            None => Err(ProviderError::ScriptMiss {
                kind: format!("search[{}]", self.id),
                key: request.query.clone(),
                ordinal,
            }),
        }
    }
}

/// Providers built from one script fixture.
#[derive(Debug, Clone)]
pub struct ScriptBundle {
    pub primary: Arc<ScriptedCompletions>,
    pub fallback: Option<Arc<ScriptedCompletions>>,
    pub search: Vec<Arc<ScriptedSearch>>,
}

impl ScriptBundle {
    pub fn llm_gateway(&self) -> LlmGateway {
        let mut gw = LlmGateway::new().with_primary(self.primary.clone());
        if let Some(fb) = &self.fallback {
            gw = gw.with_fallback(fb.clone());
        }
        gw
    }

    pub fn search_gateway(&self) -> SearchGateway {
        SearchGateway::new(
            self.search
                .iter()
                .map(|s| s.clone() as Arc<dyn SearchProvider>)
                .collect(),
        )
    }

    /// Rewind every ordinal counter, as if freshly loaded.
    pub fn reset(&self) {
        self.primary.reset();
        if let Some(fb) = &self.fallback {
            fb.reset();
        }
        for s in &self.search {
            s.reset();
        }
    }
}

pub fn load_script(path: impl AsRef<Path>) -> Result<ScriptBundle, ScriptError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_script(&text)
}

pub fn parse_script(text: &str) -> Result<ScriptBundle, ScriptError> {
    let raw: RawScript =
        serde_json::from_str(text).map_err(|e| ScriptError::Parse(e.to_string()))?;

    let mut primary = Vec::new();
    let mut fallback = Vec::new();
    for (i, c) in raw.completions.into_iter().enumerate() {
        let at = |msg: String| ScriptError::Parse(format!("completions[{i}]: {msg}"));
        let template = TemplateId::parse(&c.template_id)
            .ok_or_else(|| at(format!("unknown template_id {:?}", c.template_id)))?;
        if let Some(t) = c.temperature {
            if !(0.0..=1.0).contains(&t) {
                return Err(at(format!("temperature {t} outside [0, 1]")));
            }
        }
        let outcome = match (c.response, c.error) {
            (Some(_), Some(_)) => return Err(at("both response and error given".into())),
            (None, None) => return Err(at("needs a response or an error".into())),
            (Some(Value::String(s)), None) => Ok(s),
            (Some(v), None) => Ok(v.to_string()),
            (None, Some(e)) => Err(ScriptedFailure::parse(&e).map_err(|e| at(e.to_string()))?),
        };
        let entry = CompletionEntry {
            template,
            key: KeyMatch::parse(c.key_match),
            outcome,
            temperature: c.temperature,
            sticky: c.sticky,
        };
        match c.channel.as_deref() {
            None | Some("primary") => primary.push(entry),
            Some("fallback") => fallback.push(entry),
            Some(other) => return Err(at(format!("unknown channel {other:?}"))),
        }
    }

    let mut by_provider: Vec<(String, Vec<SearchEntry>)> = Vec::new();
    for (i, s) in raw.searches.into_iter().enumerate() {
        let at = |msg: String| ScriptError::Parse(format!("searches[{i}]: {msg}"));
        let outcome = match s.error {
            Some(e) => {
                if !s.results.is_empty() {
                    return Err(at("both results and error given".into()));
                }
                Err(ScriptedFailure::parse(&e).map_err(|e| at(e.to_string()))?)
            }
            None => {
                let mut seen = std::collections::HashSet::new();
                for r in &s.results {
                    if !is_valid_url(&r.url) {
                        return Err(at(format!("invalid url {:?}", r.url)));
                    }
                    if !seen.insert(normalize_url(&r.url)) {
                        return Err(at(format!("duplicate url {:?}", r.url)));
                    }
                }
                Ok(s.results)
            }
        };
        let provider = s.provider.unwrap_or_else(|| "script".to_string());
        let entry = SearchEntry {
            key: KeyMatch::parse(s.query_match),
            outcome: outcome.map(|rs| {
                rs.into_iter()
                    .map(|mut r| {
                        if r.provider_id.is_empty() {
                            r.provider_id = provider.clone();
                        }
                        r
                    })
                    .collect()
            }),
            sticky: s.sticky,
        };
        match by_provider.iter_mut().find(|(id, _)| *id == provider) {
            Some((_, entries)) => entries.push(entry),
            None => by_provider.push((provider, vec![entry])),
        }
    }
    if by_provider.is_empty() {
        by_provider.push(("script".to_string(), Vec::new()));
    }

    Ok(ScriptBundle {
        primary: Arc::new(ScriptedCompletions::new("script-primary", primary)),
        fallback: (!fallback.is_empty())
            .then(|| Arc::new(ScriptedCompletions::new("script-fallback", fallback))),
        search: by_provider
            .into_iter()
            .map(|(id, entries)| Arc::new(ScriptedSearch::new(&id, entries)))
            .collect(),
    })
}
