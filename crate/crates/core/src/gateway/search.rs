use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::{is_valid_url, normalize_url, ProviderError, SearchError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    pub after_date: Option<NaiveDate>,
    pub site_restrict: Option<String>,
    pub max_results: usize,
}

impl SearchRequest {
    pub fn new(query: impl Into<String>, max_results: usize) -> Self {
        Self {
            query: query.into(),
            after_date: None,
            site_restrict: None,
            max_results: max_results.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSearchResult {
    pub title: String,
    pub url: String,
    #[serde(default)]
    pub snippet: String,
    #[serde(default, with = "flexible_datetime")]
    pub published_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub provider_id: String,
}

pub trait SearchProvider: Send + Sync {
    fn id(&self) -> &str;
    fn search(&self, request: &SearchRequest) -> Result<Vec<RawSearchResult>, ProviderError>;
}

#[derive(Debug, Default)]
pub struct SearchStats {
    searches: AtomicU64,
    provider_calls: AtomicU64,
    provider_failures: AtomicU64,
    queries: Mutex<Vec<String>>,
}

impl SearchStats {
    /// Calls to [`SearchGateway::search`].
    pub fn searches(&self) -> u64 {
        self.searches.load(Ordering::Relaxed)
    }

    /// Individual provider invocations (searches × providers).
    pub fn provider_calls(&self) -> u64 {
        self.provider_calls.load(Ordering::Relaxed)
    }

    pub fn provider_failures(&self) -> u64 {
        self.provider_failures.load(Ordering::Relaxed)
    }

    /// Query strings in the order they were searched.
    pub fn queries(&self) -> Vec<String> {
        self.queries.lock().unwrap().clone()
    }
}

/// Fans a query out to every configured provider and merges the answers.
/// Provider order is priority order.
#[derive(Clone, Default)]
pub struct SearchGateway {
    providers: Vec<Arc<dyn SearchProvider>>,
    stats: Arc<SearchStats>,
}

impl SearchGateway {
    pub fn new(providers: Vec<Arc<dyn SearchProvider>>) -> Self {
        Self {
            providers,
            stats: Arc::default(),
        }
    }

    pub fn provider_count(&self) -> usize {
        self.providers.len()
    }

    pub fn stats(&self) -> &SearchStats {
        &self.stats
    }

    pub fn search(&self, request: &SearchRequest) -> Result<Vec<RawSearchResult>, SearchError> {
        if request.query.trim().is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        if self.providers.is_empty() {
            return Err(SearchError::NoProviders);
        }
        self.stats.searches.fetch_add(1, Ordering::Relaxed);
        self.stats
            .queries
            .lock()
            .unwrap()
            .push(request.query.clone());
        self.stats
            .provider_calls
            .fetch_add(self.providers.len() as u64, Ordering::Relaxed);

        let answers: Vec<Result<Vec<RawSearchResult>, ProviderError>> = if self.providers.len() == 1
        {
            vec![self.providers[0].search(request)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = self
                    .providers
                    .iter()
                    .map(|p| s.spawn(move || p.search(request)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| {
                        h.join().unwrap_or_else(|_| {
                            Err(ProviderError::Transport("provider panicked".into()))
                        })
                    })
                    .collect()
            })
        };

        let mut seen = HashSet::new();
        let mut merged = Vec::new();
        let mut failures = Vec::new();
        for (provider, answer) in self.providers.iter().zip(answers) {
            match answer {
                Ok(results) => {
                    for mut r in results {
                        let Some(key) = normalize_url(&r.url).filter(|_| is_valid_url(&r.url))
                        else {
                            tracing::warn!(provider = provider.id(), url = %r.url, "dropping result with invalid url");
                            continue;
                        };
                        if seen.insert(key) {
                            if r.provider_id.is_empty() {
                                r.provider_id = provider.id().to_string();
                            }
                            merged.push(r);
                        }
                    }
                }
                Err(e) => {
                    self.stats.provider_failures.fetch_add(1, Ordering::Relaxed);
                    tracing::warn!(provider = provider.id(), query = %request.query, error = %e, "search provider failed");
                    failures.push((provider.id().to_string(), e));
                }
            }
        }
        if failures.len() == self.providers.len() {
            return Err(SearchError::AllProvidersFailed { failures });
        }
        Ok(merged)
    }
}

/// Accepts RFC 3339 timestamps or bare `YYYY-MM-DD` dates (taken as midnight UTC).
pub(crate) mod flexible_datetime {
    use chrono::{DateTime, NaiveDate, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn parse(s: &str) -> Option<DateTime<Utc>> {
        let s = s.trim();
        DateTime::parse_from_rfc3339(s)
            .map(|d| d.with_timezone(&Utc))
            .ok()
            .or_else(|| {
                NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .ok()
                    .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
            })
    }

    pub fn serialize<S: Serializer>(v: &Option<DateTime<Utc>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(d) => s.serialize_str(&d.to_rfc3339()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DateTime<Utc>>, D::Error> {
        let raw: Option<String> = Option::deserialize(d)?;
        match raw {
            None => Ok(None),
            Some(s) if s.trim().is_empty() => Ok(None),
            Some(s) => parse(&s)
                .map(Some)
                .ok_or_else(|| serde::de::Error::custom(format!("invalid timestamp {s:?}"))),
        }
    }
}
