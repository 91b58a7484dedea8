use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{LlmError, PromptRequest, ProviderError, RenderedPrompt, TemplateId};

pub trait CompletionProvider: Send + Sync {
    fn id(&self) -> &str;

    /// Produce a completion within `timeout`. Implementations that cannot
    /// enforce the deadline themselves may return late; the gateway then
    /// treats the call as timed out.
    fn complete(&self, prompt: &RenderedPrompt, timeout: Duration)
        -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Primary,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelPolicy {
    pub timeout: Duration,
    pub retries: u32,
}

impl ChannelPolicy {
    pub const PRIMARY: ChannelPolicy = ChannelPolicy {
        timeout: Duration::from_secs(30),
        retries: 1,
    };
    pub const FALLBACK: ChannelPolicy = ChannelPolicy {
        timeout: Duration::from_secs(60),
        retries: 0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderResponse {
    pub text: String,
    pub channel: Channel,
    pub latency_ms: u64,
}

/// Counters for budget assertions.
#[derive(Debug, Default)]
pub struct CallStats {
    per_template: Mutex<BTreeMap<TemplateId, u64>>,
    served_primary: AtomicU64,
    served_fallback: AtomicU64,
    fallback_attempts: AtomicU64,
}

impl CallStats {
    pub fn calls(&self, template: TemplateId) -> u64 {
        self.per_template
            .lock()
            .unwrap()
            .get(&template)
            .copied()
            .unwrap_or(0)
    }

    pub fn total_calls(&self) -> u64 {
        self.per_template.lock().unwrap().values().sum()
    }

    pub fn snapshot(&self) -> BTreeMap<TemplateId, u64> {
        self.per_template.lock().unwrap().clone()
    }

    pub fn served(&self, channel: Channel) -> u64 {
        match channel {
            Channel::Primary => self.served_primary.load(Ordering::Relaxed),
            Channel::Fallback => self.served_fallback.load(Ordering::Relaxed),
        }
    }

    pub fn fallback_attempts(&self) -> u64 {
        self.fallback_attempts.load(Ordering::Relaxed)
    }
}

type ChannelSlot = (Arc<dyn CompletionProvider>, ChannelPolicy);

/// Dual-channel completion gateway: a primary (usually cloud) provider with
/// automatic fallback to a secondary (usually local) one.
#[derive(Clone, Default)]
pub struct LlmGateway {
    primary: Option<ChannelSlot>,
    fallback: Option<ChannelSlot>,
    stats: Arc<CallStats>,
}

impl LlmGateway {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_primary(mut self, provider: Arc<dyn CompletionProvider>) -> Self {
        self.primary = Some((provider, ChannelPolicy::PRIMARY));
        self
    }

    pub fn with_fallback(mut self, provider: Arc<dyn CompletionProvider>) -> Self {
        self.fallback = Some((provider, ChannelPolicy::FALLBACK));
        self
    }

    pub fn with_policies(mut self, primary: ChannelPolicy, fallback: ChannelPolicy) -> Self {
        if let Some(slot) = self.primary.as_mut() {
            slot.1 = primary;
        }
        if let Some(slot) = self.fallback.as_mut() {
            slot.1 = fallback;
        }
        self
    }

    pub fn stats(&self) -> &CallStats {
        &self.stats
    }

    pub fn has_channel(&self) -> bool {
        self.primary.is_some() || self.fallback.is_some()
    }

    pub fn complete(&self, request: &PromptRequest) -> Result<ProviderResponse, LlmError> {
        let prompt = request.render()?;
        if !self.has_channel() {
            return Err(LlmError::NoChannel);
        }
        *self
            .stats
            .per_template
            .lock()
            .unwrap()
            .entry(prompt.template_id)
            .or_insert(0) += 1;

        let primary_err = match &self.primary {
            Some(slot) => match attempt(slot, &prompt) {
                Ok((text, latency_ms)) => {
                    self.stats.served_primary.fetch_add(1, Ordering::Relaxed);
                    return Ok(ProviderResponse {
                        text,
                        channel: Channel::Primary,
                        latency_ms,
                    });
                }
                Err(e) => Some(e),
            },
            None => None,
        };

        let Some(slot) = &self.fallback else {
            return Err(LlmError::ChannelFailed {
                channel: Channel::Primary,
                source: primary_err.expect("primary configured when fallback is absent"),
            });
        };
        if let Some(e) = &primary_err {
            tracing::warn!(template = %prompt.template_id, error = %e, "primary LLM channel failed, using fallback");
        }
        self.stats.fallback_attempts.fetch_add(1, Ordering::Relaxed);
        match attempt(slot, &prompt) {
            Ok((text, latency_ms)) => {
                self.stats.served_fallback.fetch_add(1, Ordering::Relaxed);
                Ok(ProviderResponse {
                    text,
                    channel: Channel::Fallback,
                    latency_ms,
                })
            }
            Err(fallback) => Err(match primary_err {
                Some(primary) => LlmError::BothChannelsFailed { primary, fallback },
                None => LlmError::ChannelFailed {
                    channel: Channel::Fallback,
                    source: fallback,
                },
            }),
        }
    }
}

fn attempt(
    (provider, policy): &ChannelSlot,
    prompt: &RenderedPrompt,
) -> Result<(String, u64), ProviderError> {
    let timeout_ms = policy.timeout.as_millis() as u64;
    let mut tries = 0;
    loop {
        let started = Instant::now();
        let outcome = provider.complete(prompt, policy.timeout).and_then(|text| {
            let elapsed = started.elapsed().as_millis() as u64;
            if elapsed > timeout_ms {
                Err(ProviderError::Timeout(timeout_ms))
            } else if text.trim().is_empty() {
                Err(ProviderError::Malformed("empty completion".into()))
            } else {
                Ok((text, elapsed))
            }
        });
        match outcome {
            Err(e) if e.is_transient() && tries < policy.retries => {
                tries += 1;
                tracing::debug!(provider = provider.id(), error = %e, "retrying LLM call");
            }
            other => return other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    struct Fixed {
        replies: Mutex<Vec<Result<String, ProviderError>>>,
        calls: AtomicUsize,
    }

    impl Fixed {
        fn new(replies: Vec<Result<String, ProviderError>>) -> Arc<Self> {
            Arc::new(Self {
                replies: Mutex::new(replies.into_iter().rev().collect()),
                calls: AtomicUsize::new(0),
            })
        }
    }

    impl CompletionProvider for Fixed {
        fn id(&self) -> &str {
            "fixed"
        }
        fn complete(&self, _: &RenderedPrompt, _: Duration) -> Result<String, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies
                .lock()
                .unwrap()
                .pop()
                .unwrap_or(Err(ProviderError::Unavailable("exhausted".into())))
        }
    }

    fn req() -> PromptRequest {
        PromptRequest::new(TemplateId::IntentClassify).var("query", "q")
    }

    #[test]
    fn healthy_primary_serves() {
        let p = Fixed::new(vec![Ok("hi".into())]);
        let f = Fixed::new(vec![Ok("fb".into())]);
        let gw = LlmGateway::new().with_primary(p).with_fallback(f.clone());
        let r = gw.complete(&req()).unwrap();
        assert_eq!(r.channel, Channel::Primary);
        assert_eq!(
            f.calls.load(Ordering::SeqCst),
            0,
            "fallback only on primary failure"
        );
    }

    #[test]
    fn transient_primary_error_is_retried_once() {
        let p = Fixed::new(vec![
            Err(ProviderError::Timeout(30_000)),
            Ok("second".into()),
        ]);
        let gw = LlmGateway::new().with_primary(p.clone());
        let r = gw.complete(&req()).unwrap();
        assert_eq!(r.text, "second");
        assert_eq!(p.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn timeout_falls_back() {
        let p = Fixed::new(vec![
            Err(ProviderError::Timeout(30_000)),
            Err(ProviderError::Timeout(30_000)),
        ]);
        let f = Fixed::new(vec![Ok("local".into())]);
        let gw = LlmGateway::new().with_primary(p.clone()).with_fallback(f);
        let r = gw.complete(&req()).unwrap();
        assert_eq!(r.channel, Channel::Fallback);
        assert_eq!(r.text, "local");
        assert_eq!(p.calls.load(Ordering::SeqCst), 2);
        assert_eq!(gw.stats().served(Channel::Fallback), 1);
    }

    #[test]
    fn both_failing_carries_both_causes() {
        let p = Fixed::new(vec![Err(ProviderError::Malformed("x".into()))]);
        let f = Fixed::new(vec![Err(ProviderError::Unavailable("down".into()))]);
        let gw = LlmGateway::new().with_primary(p).with_fallback(f);
        match gw.complete(&req()).unwrap_err() {
            LlmError::BothChannelsFailed { primary, fallback } => {
                assert_eq!(primary, ProviderError::Malformed("x".into()));
                assert_eq!(fallback, ProviderError::Unavailable("down".into()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_text_is_a_failure() {
        let p = Fixed::new(vec![Ok("   ".into())]);
        let gw = LlmGateway::new().with_primary(p);
        assert!(matches!(
            gw.complete(&req()),
            Err(LlmError::ChannelFailed {
                channel: Channel::Primary,
                source: ProviderError::Malformed(_)
            })
        ));
    }

    #[test]
    fn no_channel_and_unbound_template() {
        assert_eq!(
            LlmGateway::new().complete(&req()).unwrap_err(),
            LlmError::NoChannel
        );
        let gw = LlmGateway::new().with_primary(Fixed::new(vec![]));
        let err = gw
            .complete(&PromptRequest::new(TemplateId::Reasoning))
            .unwrap_err();
        assert!(matches!(err, LlmError::TemplateUnbound { .. }));
        assert_eq!(gw.stats().total_calls(), 0);
    }
}
