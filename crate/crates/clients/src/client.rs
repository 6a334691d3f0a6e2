use std::collections::HashMap;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cache::{CacheEntry, ReplayCache};
use crate::error::{ClientError, Result};
use crate::pool::FifoSemaphore;
use crate::request::ChatRequest;
use crate::retry::{RetryPolicy, Sleeper, ThreadSleeper};
use crate::transport::Transport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        }
    }
}

impl FromStr for Mode {
    type Err = ClientError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(ClientError::Precondition(format!("unknown client mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub base_url: String,
    pub api_key: Option<String>,
}

impl Endpoint {
    /// Reads `SLIME_BASE_URL_<P>` and `SLIME_API_KEY_<P>`, where `<P>` is the
    /// provider id upper-cased with non-alphanumerics turned into `_`.
    pub fn from_env(provider: &str) -> Result<Self> {
        let key: String = provider
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
            .collect();
        let url_var = format!("SLIME_BASE_URL_{key}");
        let base_url = std::env::var(&url_var).map_err(|_| ClientError::UnknownProvider(provider.into(), url_var))?;
        Ok(Self {
            base_url,
            api_key: std::env::var(format!("SLIME_API_KEY_{key}")).ok(),
        })
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Counters for audit and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ClientStats {
    pub cache_hits: usize,
    pub network_attempts: usize,
    pub retries: usize,
}

pub struct ChatClient {
    mode: Mode,
    transport: Arc<dyn Transport>,
    cache: Arc<ReplayCache>,
    endpoints: HashMap<String, Endpoint>,
    pool: FifoSemaphore,
    retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
    cache_hits: AtomicUsize,
    attempts: AtomicUsize,
    retries: AtomicUsize,
}

impl ChatClient {
    pub fn new(mode: Mode, transport: Arc<dyn Transport>, cache: Arc<ReplayCache>) -> Self {
        Self {
            mode,
            transport,
            cache,
            endpoints: HashMap::new(),
            pool: FifoSemaphore::new(4),
            retry: RetryPolicy::default(),
            sleeper: Arc::new(ThreadSleeper),
            cache_hits: AtomicUsize::new(0),
            attempts: AtomicUsize::new(0),
            retries: AtomicUsize::new(0),
        }
    }

    pub fn with_endpoint(mut self, provider: impl Into<String>, endpoint: Endpoint) -> Self {
        self.endpoints.insert(provider.into(), endpoint);
        self
    }

    pub fn with_concurrency(mut self, c: usize) -> Self {
        self.pool = FifoSemaphore::new(c);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn cache(&self) -> &ReplayCache {
        &self.cache
    }

    pub fn peak_in_flight(&self) -> usize {
        self.pool.peak()
    }

    pub fn stats(&self) -> ClientStats {
        ClientStats {
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            network_attempts: self.attempts.load(Ordering::SeqCst),
            retries: self.retries.load(Ordering::SeqCst),
        }
    }

    pub fn chat(&self, request: &ChatRequest) -> Result<String> {
        let hash = request.hash();
        if self.mode != Mode::Live {
            if let Some(hit) = self.cache.get(&hash) {
                self.cache_hits.fetch_add(1, Ordering::SeqCst);
                return Ok(hit);
            }
            if self.mode == Mode::Replay {
                return Err(ClientError::CacheMiss(hash));
            }
        }
        let text = self.call(request)?;
        if self.mode == Mode::Record {
            let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            self.cache.insert(CacheEntry {
                hash,
                request: serde_json::to_value(request)?,
                response: text.clone(),
                timestamp,
                provider: request.provider.clone(),
            })?;
        }
        Ok(text)
    }

    fn endpoint(&self, provider: &str) -> Result<Endpoint> {
        match self.endpoints.get(provider) {
            Some(e) => Ok(e.clone()),
            None => Endpoint::from_env(provider),
        }
    }

    fn call(&self, request: &ChatRequest) -> Result<String> {
        let endpoint = self.endpoint(&request.provider)?;
        let url = endpoint.completions_url();
        let body = request.wire_body().to_string();
        let _permit = self.pool.acquire();
        let mut retry = 0;
        loop {
            self.attempts.fetch_add(1, Ordering::SeqCst);
            let err = match self.transport.post_json(&url, endpoint.api_key.as_deref(), &body) {
                Ok(resp) if (200..300).contains(&resp.status) => return completion_text(&resp.body),
                Ok(resp) => ClientError::Provider {
                    status: resp.status,
                    message: truncate(&resp.body, 500),
                },
                Err(e) => e,
            };
            let retryable = err.is_retryable() || matches!(err, ClientError::Transport(_));
            if !retryable || retry >= self.retry.max_retries {
                return Err(err);
            }
            self.sleeper.sleep(self.retry.delay(retry));
            self.retries.fetch_add(1, Ordering::SeqCst);
            retry += 1;
        }
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

/// Pulls `choices[0].message.content` out of a chat-completions body.
pub fn completion_text(body: &str) -> Result<String> {
    let parse_err = |reason: &str| ClientError::Parse {
        reason: reason.into(),
        raw: body.into(),
    };
    let v: Value = serde_json::from_str(body).map_err(|e| parse_err(&e.to_string()))?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        // content-part arrays: concatenate the text parts
        Value::Array(parts) => Ok(parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join("")),
        _ => Err(parse_err("response lacks choices[0].message.content")),
    }
}
