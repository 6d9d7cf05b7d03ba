//! Chat-completion access: hosted providers over HTTP, deterministic mocks,
//! and record/replay cassettes. Everything above this module talks to a
//! [`Gateway`] and never knows which of the three answered.

mod cassette;
mod live;
pub mod mock;
mod retry;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Config, ProviderConfig};

pub use cassette::{fingerprint, Cassette, CassetteRecord};
pub use live::LiveClient;
pub use mock::{MockKind, ScriptBook, REFUSAL_TEXT};
pub use retry::{RetryPolicy, Semaphore};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProviderId(pub String);

impl ProviderId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_mock(&self) -> bool {
        self.0.starts_with("mock:")
    }
}

impl fmt::Display for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProviderId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Self { temperature: 1.0, max_tokens: 400 }
    }
}

impl From<crate::config::DecodingConfig> for Decoding {
    fn from(c: crate::config::DecodingConfig) -> Self {
        Self { temperature: c.temperature, max_tokens: c.max_tokens }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: String,
    pub user_text: String,
    pub decoding: Decoding,
    pub provider: ProviderId,
    /// Correlation id, `<kind>/<scope>#<seq>`.
    pub tag: String,
}

impl ChatRequest {
    pub fn new(
        provider: ProviderId,
        system_text: impl Into<String>,
        user_text: impl Into<String>,
        decoding: Decoding,
        tag: impl Into<String>,
    ) -> Result<Self, GatewayError> {
        let req = Self {
            system_text: system_text.into(),
            user_text: user_text.into(),
            decoding,
            provider,
            tag: tag.into(),
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.user_text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("user_text is empty".into()));
        }
        if !(self.decoding.temperature >= 0.0) || self.decoding.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("bad decoding parameters".into()));
        }
        Ok(())
    }
}

/// Parsed form of a request tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tag<'a> {
    pub kind: &'a str,
    pub scope: &'a str,
    pub seq: u64,
}

impl<'a> Tag<'a> {
    /// Lenient: a missing scope or sequence number yields "" and 1.
    pub fn parse(tag: &'a str) -> Self {
        let (head, seq) = match tag.rsplit_once('#') {
            Some((h, s)) => (h, s.parse().unwrap_or(1)),
            None => (tag, 1),
        };
        let (kind, scope) = head.split_once('/').unwrap_or((head, ""));
        Tag { kind, scope, seq: seq.max(1) }
    }
}

pub fn make_tag(kind: &str, scope: &str, seq: u64) -> String {
    format!("{kind}/{scope}#{seq}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("authentication failed for {provider}: {message}")]
    Auth { provider: String, message: String },
    #[error("rate limited by {provider} after {attempts} attempts")]
    RateLimited { provider: String, attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider {provider} returned HTTP {status}: {body}")]
    Http { provider: String, status: u16, body: String },
    #[error("no cassette entry for fingerprint {fingerprint} (tag {tag})")]
    ReplayMiss { fingerprint: String, tag: String },
    #[error("unknown provider {0}")]
    UnknownProvider(String),
    #[error("live provider {0} called in offline mode")]
    OfflineViolation(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cassette error: {0}")]
    Cassette(String),
}

impl GatewayError {
    /// Worth another attempt with backoff.
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::RateLimited { .. } | GatewayError::Transport(_))
    }

    /// Short machine-readable label used in persisted records.
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::Auth { .. } => "auth",
            GatewayError::RateLimited { .. } => "rate_limited",
            GatewayError::Transport(_) => "transport",
            GatewayError::Http { .. } => "http",
            GatewayError::ReplayMiss { .. } => "replay_miss",
            GatewayError::UnknownProvider(_) => "unknown_provider",
            GatewayError::OfflineViolation(_) => "offline_violation",
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::Cassette(_) => "cassette",
        }
    }
}

/// Anything that turns a request into a completion.
pub trait Completer: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

impl<F> Completer for F
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, GatewayError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self(request)
    }
}

struct Backend {
    completer: Arc<dyn Completer>,
    live: bool,
    limit: Arc<Semaphore>,
}

enum CassetteMode {
    Off,
    Record(Mutex<Cassette>),
    Replay(Mutex<Cassette>),
}

/// Routes requests to backends with per-provider concurrency caps and retry.
pub struct Gateway {
    backends: HashMap<ProviderId, Backend>,
    retry: RetryPolicy,
    offline: bool,
    cassette: CassetteMode,
    live_calls: AtomicU64,
    attempts: AtomicU64,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<_> = self.backends.keys().map(|k| k.as_str()).collect();
        names.sort_unstable();
        f.debug_struct("Gateway").field("providers", &names).field("offline", &self.offline).finish()
    }
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder::default()
    }

    /// Gateway for the named providers. Mock ids are resolved to built-in
    /// mocks; other names must appear in `config`.
    pub fn from_config(config: &Config, providers: &[ProviderId], offline: bool) -> Result<Self, GatewayError> {
        Ok(Self::builder_from_config(config, providers, offline)?.build())
    }

    /// Like [`Gateway::from_config`], leaving the builder open for a cassette.
    pub fn builder_from_config(
        config: &Config,
        providers: &[ProviderId],
        offline: bool,
    ) -> Result<GatewayBuilder, GatewayError> {
        let mut b = Gateway::builder().retry(RetryPolicy::from(config.retry)).offline(offline);
        let book = match &config.mocks.script {
            Some(path) => ScriptBook::load(path).map_err(|e| GatewayError::InvalidRequest(e.to_string()))?,
            None => ScriptBook::builtin().clone(),
        };
        for id in providers {
            if b.has(id) {
                continue;
            }
            if id.is_mock() {
                let kind = MockKind::parse(id.as_str(), config.mocks.noise_sigma)
                    .ok_or_else(|| GatewayError::UnknownProvider(id.to_string()))?;
                b = b.mock(id.clone(), kind.build(config.seed, &book));
            } else {
                let pc: &ProviderConfig =
                    config.provider(id.as_str()).ok_or_else(|| GatewayError::UnknownProvider(id.to_string()))?;
                // in offline mode the client is never invoked, so a missing key is fine
                let client = LiveClient::from_config(pc, offline)?;
                b = b.live(id.clone(), Arc::new(client), pc.max_concurrency);
            }
        }
        Ok(b)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        if let CassetteMode::Replay(c) = &self.cassette {
            return c.lock().expect("cassette lock").replay(request);
        }
        let backend =
            self.backends.get(&request.provider).ok_or_else(|| GatewayError::UnknownProvider(request.provider.to_string()))?;
        if backend.live && self.offline {
            return Err(GatewayError::OfflineViolation(request.provider.to_string()));
        }
        let response = {
            let _permit = backend.limit.acquire();
            self.with_retry(backend, request)?
        };
        if let CassetteMode::Record(c) = &self.cassette {
            c.lock().expect("cassette lock").record(request, &response)?;
        }
        Ok(response)
    }

    fn with_retry(&self, backend: &Backend, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.attempts.fetch_add(1, Ordering::Relaxed);
            if backend.live {
                self.live_calls.fetch_add(1, Ordering::Relaxed);
            }
            let started = Instant::now();
            match backend.completer.complete(request) {
                Ok(mut r) => {
                    if backend.live && r.latency_ms == 0 {
                        r.latency_ms = started.elapsed().as_millis() as u64;
                    }
                    return Ok(r);
                }
                Err(e) if e.is_transient() && attempt < self.retry.max_attempts => {
                    std::thread::sleep(self.retry.delay(attempt));
                }
                Err(GatewayError::RateLimited { provider, .. }) => {
                    return Err(GatewayError::RateLimited { provider, attempts: attempt });
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Requests that reached a network-backed client (including retries).
    pub fn live_calls(&self) -> u64 {
        self.live_calls.load(Ordering::Relaxed)
    }

    /// Backend invocations of any kind, retries included. Replayed
    /// responses are not counted.
    pub fn backend_calls(&self) -> u64 {
        self.attempts.load(Ordering::Relaxed)
    }

    pub fn providers(&self) -> Vec<ProviderId> {
        let mut v: Vec<_> = self.backends.keys().cloned().collect();
        v.sort();
        v
    }

    /// Flushes a recording cassette; a no-op otherwise.
    pub fn flush(&self) -> Result<(), GatewayError> {
        if let CassetteMode::Record(c) = &self.cassette {
            c.lock().expect("cassette lock").flush()?;
        }
        Ok(())
    }
}

impl Completer for Gateway {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        Gateway::complete(self, request)
    }
}

#[derive(Default)]
pub struct GatewayBuilder {
    backends: HashMap<ProviderId, Backend>,
    retry: RetryPolicy,
    offline: bool,
    cassette: Option<(bool, Cassette)>,
}

impl GatewayBuilder {
    fn has(&self, id: &ProviderId) -> bool {
        self.backends.contains_key(id)
    }

    pub fn mock(mut self, id: ProviderId, completer: Arc<dyn Completer>) -> Self {
        // mocks are pure functions; a wide cap keeps them from serializing runs
        self.backends.insert(id, Backend { completer, live: false, limit: Arc::new(Semaphore::new(64)) });
        self
    }

    pub fn live(mut self, id: ProviderId, completer: Arc<dyn Completer>, max_concurrency: usize) -> Self {
        self.backends
            .insert(id, Backend { completer, live: true, limit: Arc::new(Semaphore::new(max_concurrency.max(1))) });
        self
    }

    pub fn retry(mut self, policy: RetryPolicy) -> Self {
        self.retry = policy;
        self
    }

    /// Refuse to call any live backend.
    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn record_to(mut self, path: &Path) -> Result<Self, GatewayError> {
        self.cassette = Some((true, Cassette::open_for_record(path)?));
        Ok(self)
    }

    /// Serve every request from the cassette. No backend is called.
    pub fn replay_from(mut self, path: &Path) -> Result<Self, GatewayError> {
        self.cassette = Some((false, Cassette::load(path)?));
        Ok(self)
    }

    pub fn build(self) -> Gateway {
        let cassette = match self.cassette {
            None => CassetteMode::Off,
            Some((true, c)) => CassetteMode::Record(Mutex::new(c)),
            Some((false, c)) => CassetteMode::Replay(Mutex::new(c)),
        };
        Gateway {
            backends: self.backends,
            retry: self.retry,
            offline: self.offline,
            cassette,
            live_calls: AtomicU64::new(0),
            attempts: AtomicU64::new(0),
        }
    }
}

/// Configured hosted providers followed by the built-in mock families.
pub fn provider_roster(config: &Config) -> Vec<ProviderId> {
    config
        .providers
        .iter()
        .map(|p| ProviderId::new(p.name.clone()))
        .chain(MockKind::ROSTER.iter().map(|m| ProviderId::from(*m)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_parsing() {
        let t = Tag::parse("bfi/openai|zero_shot|HHHHH|r1#7");
        assert_eq!(t.kind, "bfi");
        assert_eq!(t.scope, "openai|zero_shot|HHHHH|r1");
        assert_eq!(t.seq, 7);
        assert_eq!(Tag::parse("decide").seq, 1);
        assert_eq!(Tag::parse(&make_tag("generate", "c1", 3)), Tag { kind: "generate", scope: "c1", seq: 3 });
    }

    #[test]
    fn empty_user_text_rejected() {
        let r = ChatRequest::new("mock:anchor".into(), "", "  ", Decoding::default(), "bfi/x#1");
        assert!(matches!(r, Err(GatewayError::InvalidRequest(_))));
    }

    #[test]
    fn roster_lists_mocks_after_hosted() {
        let names: Vec<String> = provider_roster(&Config::builtin()).into_iter().map(|p| p.0).collect();
        assert_eq!(&names[..4], ["openai", "anthropic", "google", "xai"]);
        assert_eq!(&names[4..], ["mock:anchor", "mock:anchor-noise", "mock:refuser", "mock:script"]);
        let mock_only: Vec<String> = provider_roster(&Config::mock_only()).into_iter().map(|p| p.0).collect();
        assert_eq!(mock_only, ["mock:anchor", "mock:anchor-noise", "mock:refuser", "mock:script"]);
    }

    fn flaky(fail_first: u32, err: GatewayError) -> Arc<dyn Completer> {
        let n = AtomicU64::new(0);
        Arc::new(move |_: &ChatRequest| {
            if n.fetch_add(1, Ordering::SeqCst) < u64::from(fail_first) {
                Err(err.clone())
            } else {
                Ok(ChatResponse { text: "ok".into(), latency_ms: 1, usage: None })
            }
        })
    }

    fn req(provider: &str) -> ChatRequest {
        ChatRequest::new(provider.into(), "", "hi", Decoding::default(), "bfi/t#1").unwrap()
    }

    #[test]
    fn transient_errors_are_retried() {
        let g = Gateway::builder()
            .live("p".into(), flaky(2, GatewayError::Transport("reset".into())), 1)
            .retry(RetryPolicy::immediate(5))
            .build();
        assert_eq!(g.complete(&req("p")).unwrap().text, "ok");
        assert_eq!(g.live_calls(), 3);
    }

    #[test]
    fn rate_limit_gives_up_after_cap() {
        let e = GatewayError::RateLimited { provider: "p".into(), attempts: 1 };
        let g = Gateway::builder().live("p".into(), flaky(10, e), 1).retry(RetryPolicy::immediate(3)).build();
        assert_eq!(g.complete(&req("p")), Err(GatewayError::RateLimited { provider: "p".into(), attempts: 3 }));
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let e = GatewayError::Auth { provider: "p".into(), message: "bad key".into() };
        let g = Gateway::builder().live("p".into(), flaky(10, e), 1).retry(RetryPolicy::immediate(5)).build();
        assert!(matches!(g.complete(&req("p")), Err(GatewayError::Auth { .. })));
        assert_eq!(g.live_calls(), 1);
    }

    #[test]
    fn offline_mode_blocks_live_backends() {
        let g = Gateway::builder().live("p".into(), flaky(0, GatewayError::Transport(String::new())), 1).offline(true).build();
        assert_eq!(g.complete(&req("p")), Err(GatewayError::OfflineViolation("p".into())));
        assert_eq!(g.live_calls(), 0);
    }

    #[test]
    fn concurrency_cap_is_honored() {
        use std::sync::atomic::AtomicUsize;
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (i2, p2) = (in_flight.clone(), peak.clone());
        let slow = Arc::new(move |_: &ChatRequest| {
            let now = i2.fetch_add(1, Ordering::SeqCst) + 1;
            p2.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(15));
            i2.fetch_sub(1, Ordering::SeqCst);
            Ok(ChatResponse { text: "x".into(), latency_ms: 15, usage: None })
        });
        let g = Arc::new(Gateway::builder().live("p".into(), slow, 2).build());
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let g = g.clone();
                std::thread::spawn(move || g.complete(&req("p")).unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(peak.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn unknown_mock_id_is_an_error() {
        let e = Gateway::from_config(&Config::mock_only(), &["mock:nope".into()], true).unwrap_err();
        assert_eq!(e, GatewayError::UnknownProvider("mock:nope".into()));
    }
}
