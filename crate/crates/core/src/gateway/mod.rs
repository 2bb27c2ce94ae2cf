//! Chat-completion gateway with first-token log-probabilities.
//!
//! Every request is content-addressed by [`cache_key`] and answered from
//! the [`ResponseCache`] when possible. Misses go to either the remote
//! endpoint or the deterministic mock backend, bounded by a shared in-flight
//! limit.

mod cache;
mod mock;
mod remote;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prompt::PromptMessages;

pub use cache::ResponseCache;
pub use mock::{mock_complete, ConfidenceStyle, MockElicitation, MockProfile};
pub use remote::{RemoteClient, RemoteConfig, RemoteSettings};

pub const DEFAULT_TOP_LOGPROBS: u32 = 20;
pub const RISK_MAX_TOKENS: u32 = 8;
pub const VERBALIZED_MAX_TOKENS: u32 = 64;
pub const ELICITATION_MAX_TOKENS: u32 = 16;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: PromptMessages,
    pub temperature: f64,
    pub max_tokens: u32,
    /// `Some(k)` requests the top-`k` alternatives for the first token.
    pub top_logprobs: Option<u32>,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if matches!(self.top_logprobs, Some(k) if k < 2) {
            return Err(Error::InvalidArgument("top_logprobs must be at least 2".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidArgument("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    /// Alternatives for the first generated token, most likely first.
    pub first_token_logprobs: Vec<TokenLogprob>,
    #[serde(skip)]
    pub from_cache: bool,
}

impl Completion {
    pub(crate) fn new(text: String, mut logprobs: Vec<TokenLogprob>) -> Result<Self> {
        if logprobs.iter().any(|t| t.logprob.is_nan()) {
            return Err(Error::MalformedResponse("NaN logprob".into()));
        }
        for t in &mut logprobs {
            t.logprob = t.logprob.min(0.0);
        }
        logprobs.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
        Ok(Completion {
            text,
            first_token_logprobs: logprobs,
            from_cache: false,
        })
    }
}

/// Canonical byte form hashed by [`cache_key`]: a JSON array with a version
/// tag and the request fields in fixed order. `-0.0` is folded into `0.0`.
pub fn canonical_request(request: &CompletionRequest) -> Vec<u8> {
    let temperature = if request.temperature == 0.0 {
        0.0
    } else {
        request.temperature
    };
    serde_json::to_vec(&serde_json::json!([
        "tabprobe-request-v1",
        request.model,
        request.messages.system,
        request.messages.user,
        temperature,
        request.max_tokens,
        request.top_logprobs,
    ]))
    .expect("request serializes")
}

/// Hex SHA-256 of the canonical request.
pub fn cache_key(request: &CompletionRequest) -> String {
    hex::encode(Sha256::digest(canonical_request(request)))
}

pub enum Backend {
    Remote(RemoteClient),
    Mock(MockProfile),
}

impl Backend {
    pub fn model(&self) -> String {
        match self {
            Backend::Remote(c) => c.model().to_string(),
            Backend::Mock(p) => p.model_id(),
        }
    }

    fn call(&self, request: &CompletionRequest) -> Result<Completion> {
        match self {
            Backend::Remote(c) => c.complete(request),
            Backend::Mock(p) => mock_complete(request, p),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub upstream_calls: u64,
}

/// Counting semaphore bounding concurrent upstream calls.
struct Limiter {
    capacity: usize,
    state: Mutex<(usize, usize)>, // (in flight, peak)
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(capacity: usize) -> Self {
        Limiter {
            capacity: capacity.max(1),
            state: Mutex::new((0, 0)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut s = self.state.lock().expect("limiter poisoned");
        while s.0 >= self.capacity {
            s = self.freed.wait(s).expect("limiter poisoned");
        }
        s.0 += 1;
        s.1 = s.1.max(s.0);
        Permit(self)
    }

    fn peak(&self) -> usize {
        self.state.lock().expect("limiter poisoned").1
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut s = self.0.state.lock().expect("limiter poisoned");
        s.0 -= 1;
        self.0.freed.notify_one();
    }
}

pub struct Gateway {
    backend: Backend,
    cache: ResponseCache,
    limiter: Limiter,
    hits: AtomicU64,
    misses: AtomicU64,
    upstream: AtomicU64,
    consumed: Mutex<BTreeSet<String>>,
}

impl Gateway {
    pub fn new(backend: Backend, cache: ResponseCache, max_in_flight: usize) -> Self {
        Gateway {
            backend,
            cache,
            limiter: Limiter::new(max_in_flight),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            upstream: AtomicU64::new(0),
            consumed: Mutex::new(BTreeSet::new()),
        }
    }

    /// Mock gateway with an in-memory cache; convenient in tests.
    pub fn mock(profile: MockProfile) -> Self {
        Gateway::new(Backend::Mock(profile), ResponseCache::memory(), DEFAULT_MAX_IN_FLIGHT)
    }

    /// Model identifier to put into requests.
    pub fn model(&self) -> String {
        self.backend.model()
    }

    pub fn max_in_flight(&self) -> usize {
        self.limiter.capacity
    }

    /// Highest number of concurrent upstream calls observed so far.
    pub fn peak_in_flight(&self) -> usize {
        self.limiter.peak()
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            upstream_calls: self.upstream.load(Ordering::Relaxed),
        }
    }

    /// Cache keys of every response handed out, sorted.
    pub fn consumed_keys(&self) -> Vec<String> {
        self.consumed
            .lock()
            .expect("consumed set poisoned")
            .iter()
            .cloned()
            .collect()
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        self.complete_keyed(request).map(|(c, _)| c)
    }

    /// Like [`Gateway::complete`], also returning the cache key used.
    pub fn complete_keyed(&self, request: &CompletionRequest) -> Result<(Completion, String)> {
        request.validate()?;
        let key = cache_key(request);
        if let Some(mut hit) = self.cache.get(&key)? {
            self.hits.fetch_add(1, Ordering::Relaxed);
            hit.from_cache = true;
            self.record(&key);
            return Ok((hit, key));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let completion = {
            let _permit = self.limiter.acquire();
            self.upstream.fetch_add(1, Ordering::Relaxed);
            self.backend.call(request)?
        };
        if request.top_logprobs.is_some() && completion.first_token_logprobs.is_empty() {
            return Err(Error::MalformedResponse("no first-token logprobs".into()));
        }
        self.cache.put(&key, request, &completion)?;
        self.record(&key);
        Ok((completion, key))
    }

    fn record(&self, key: &str) {
        self.consumed
            .lock()
            .expect("consumed set poisoned")
            .insert(key.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(temperature: f64) -> CompletionRequest {
        CompletionRequest {
            model: "m".into(),
            messages: PromptMessages {
                system: "s".into(),
                user: "u".into(),
            },
            temperature,
            max_tokens: 8,
            top_logprobs: Some(20),
        }
    }

    #[test]
    fn cache_key_is_deterministic_and_field_sensitive() {
        assert_eq!(cache_key(&request(0.0)), cache_key(&request(0.0)));
        assert_eq!(cache_key(&request(0.0)), cache_key(&request(-0.0)));
        assert_ne!(cache_key(&request(0.0)), cache_key(&request(0.7)));
        let mut r = request(0.0);
        r.max_tokens = 9;
        assert_ne!(cache_key(&r), cache_key(&request(0.0)));
        assert_eq!(cache_key(&r).len(), 64);
    }

    #[test]
    fn request_validation() {
        assert!(request(-1.0).validate().is_err());
        let mut r = request(0.0);
        r.top_logprobs = Some(1);
        assert!(r.validate().is_err());
        r.top_logprobs = None;
        assert!(r.validate().is_ok());
    }

    #[test]
    fn limiter_tracks_peak() {
        let l = Limiter::new(2);
        {
            let _a = l.acquire();
            let _b = l.acquire();
            assert_eq!(l.peak(), 2);
        }
        let _c = l.acquire();
        assert_eq!(l.peak(), 2);
    }
}
