//! Provider abstraction for the two model roles.
//!
//! Every prompt goes through a [`Gateway`], which binds `(role, model_id)` pairs
//! to concrete [`Provider`]s and adds caching, retry with backoff and a bound on
//! in-flight live requests. Sessions are plain values owned by the caller; the
//! gateway never shares transcripts between them.

mod cache;
mod limiter;
#[cfg(feature = "live")]
pub mod live;
mod replay;
mod retry;
mod scripted;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheEntry, ResponseCache};
pub use limiter::RateLimiter;
pub use replay::{FixtureRecord, RecordingProvider, ReplayProvider};
pub use retry::RetryPolicy;
pub use scripted::ScriptedProvider;

/// Prefix a provider uses to signal a content-filter refusal in plain text.
pub const REFUSAL_MARKER: &str = "[refused]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Verification, extraction, variant generation and annotation.
    Preprocessor,
    /// Multiple-choice prediction only.
    Predictor,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Preprocessor => f.write_str("preprocessor"),
            Role::Predictor => f.write_str("predictor"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProviderRole {
    pub role: Role,
    pub model_id: String,
}

impl ProviderRole {
    pub fn new(role: Role, model_id: impl Into<String>) -> Self {
        Self {
            role,
            model_id: model_id.into(),
        }
    }
}

impl fmt::Display for ProviderRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.role, self.model_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Model,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

/// An isolated conversation bound to one role.
///
/// The transcript always alternates user/model, starting with the user.
#[derive(Debug, Clone)]
pub struct ChatSession {
    role: ProviderRole,
    transcript: Vec<Turn>,
}

impl ChatSession {
    pub fn role(&self) -> &ProviderRole {
        &self.role
    }

    pub fn transcript(&self) -> &[Turn] {
        &self.transcript
    }

    /// Number of completed user/model exchanges.
    pub fn turns(&self) -> usize {
        self.transcript.len() / 2
    }

    /// Rejects sessions opened for a different role.
    pub fn require_role(&self, expected: Role) -> Result<(), GatewayError> {
        if self.role.role == expected {
            Ok(())
        } else {
            Err(GatewayError::RoleMismatch {
                expected,
                actual: self.role.role,
            })
        }
    }
}

/// What a provider sees for one completion.
#[derive(Debug)]
pub struct CompletionRequest<'a> {
    pub role: &'a ProviderRole,
    /// Full transcript including the new user message as its last turn.
    pub transcript: &'a [Turn],
    pub attempt_index: u32,
    /// The cache key for this exchange, also the fixture key.
    pub key: &'a str,
}

impl CompletionRequest<'_> {
    /// The newest user message.
    pub fn prompt(&self) -> &str {
        self.transcript.last().map(|t| t.text.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Text(String),
    /// Content-filter refusal with the provider's reason.
    Refused(String),
}

impl Reply {
    /// Converts a raw response text, recognising the refusal marker.
    pub fn from_text(text: impl Into<String>) -> Self {
        let text = text.into();
        match text.trim_start().strip_prefix(REFUSAL_MARKER) {
            Some(reason) => Reply::Refused(reason.trim().to_string()),
            None => Reply::Text(text),
        }
    }

    /// Serialized form used in transcripts, caches and fixtures.
    pub fn to_wire(&self) -> String {
        match self {
            Reply::Text(t) => t.clone(),
            Reply::Refused(reason) if reason.is_empty() => REFUSAL_MARKER.to_string(),
            Reply::Refused(reason) => format!("{REFUSAL_MARKER} {reason}"),
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            Reply::Text(t) => Some(t),
            Reply::Refused(_) => None,
        }
    }

    pub fn is_refused(&self) -> bool {
        matches!(self, Reply::Refused(_))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    /// Worth retrying: rate limits, timeouts, 5xx.
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider failure: {0}")]
    Fatal(String),
    #[error("no recorded exchange for key {0}")]
    MissingFixture(String),
}

pub trait Provider: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Reply, ProviderError>;

    /// Live providers are subject to the gateway's rate limiter and the
    /// distinct-model rule between roles.
    fn is_live(&self) -> bool {
        false
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no provider configured for {0}")]
    Unconfigured(ProviderRole),
    #[error("session opened for {actual} used on a {expected} call path")]
    RoleMismatch { expected: Role, actual: Role },
    #[error("refusing to send an empty message")]
    EmptyMessage,
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("{0}")]
    Provider(String),
    #[error("no recorded exchange for key {key}")]
    MissingFixture { key: String },
    #[error("live preprocessor and predictor share model `{0}`")]
    SharedLiveModel(String),
    #[error("cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

impl GatewayError {
    pub fn is_fixture_miss(&self) -> bool {
        matches!(self, GatewayError::MissingFixture { .. })
    }
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    role: Role,
    model_id: &'a str,
    transcript: &'a [Turn],
    attempt_index: u32,
}

/// Hex SHA-256 over the role, model, full transcript and attempt index.
pub fn cache_key(role: Role, model_id: &str, transcript: &[Turn], attempt_index: u32) -> String {
    let material = KeyMaterial {
        role,
        model_id,
        transcript,
        attempt_index,
    };
    let bytes = serde_json::to_vec(&material).expect("key material is always serializable");
    hex::encode(Sha256::digest(&bytes))
}

/// Routes sessions to providers.
pub struct Gateway {
    bindings: HashMap<ProviderRole, Arc<dyn Provider>>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    limiter: RateLimiter,
}

pub struct GatewayBuilder {
    bindings: HashMap<ProviderRole, Arc<dyn Provider>>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    max_in_flight: usize,
}

impl Default for GatewayBuilder {
    fn default() -> Self {
        Self {
            bindings: HashMap::new(),
            cache: None,
            retry: RetryPolicy::default(),
            max_in_flight: 8,
        }
    }
}

impl GatewayBuilder {
    pub fn bind(mut self, role: ProviderRole, provider: Arc<dyn Provider>) -> Self {
        self.bindings.insert(role, provider);
        self
    }

    pub fn cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn build(self) -> Result<Gateway, GatewayError> {
        for (pre, pre_provider) in &self.bindings {
            if pre.role != Role::Preprocessor || !pre_provider.is_live() {
                continue;
            }
            let clash = self.bindings.iter().any(|(pred, p)| {
                pred.role == Role::Predictor && p.is_live() && pred.model_id == pre.model_id
            });
            if clash {
                return Err(GatewayError::SharedLiveModel(pre.model_id.clone()));
            }
        }
        Ok(Gateway {
            bindings: self.bindings,
            cache: self.cache,
            retry: self.retry,
            limiter: RateLimiter::new(self.max_in_flight),
        })
    }
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder::default()
    }

    pub fn open_session(&self, role: &ProviderRole) -> Result<ChatSession, GatewayError> {
        if !self.bindings.contains_key(role) {
            return Err(GatewayError::Unconfigured(role.clone()));
        }
        Ok(ChatSession {
            role: role.clone(),
            transcript: Vec::new(),
        })
    }

    pub fn is_configured(&self, role: &ProviderRole) -> bool {
        self.bindings.contains_key(role)
    }

    /// Sends one user message and appends the exchange to the session.
    ///
    /// The transcript is left untouched when the call fails.
    pub fn send(
        &self,
        session: &mut ChatSession,
        message: &str,
        attempt_index: u32,
    ) -> Result<Reply, GatewayError> {
        if message.trim().is_empty() {
            return Err(GatewayError::EmptyMessage);
        }
        let provider = self
            .bindings
            .get(&session.role)
            .ok_or_else(|| GatewayError::Unconfigured(session.role.clone()))?;

        let mut transcript = session.transcript.clone();
        transcript.push(Turn {
            speaker: Speaker::User,
            text: message.to_string(),
        });
        let key = cache_key(
            session.role.role,
            &session.role.model_id,
            &transcript,
            attempt_index,
        );

        let cached = self.cache.as_ref().and_then(|c| c.get(&key));
        let reply = match cached {
            Some(text) => Reply::from_text(text),
            None => {
                let request = CompletionRequest {
                    role: &session.role,
                    transcript: &transcript,
                    attempt_index,
                    key: &key,
                };
                let reply = self.call_with_retry(provider.as_ref(), &request)?;
                if let Some(cache) = &self.cache {
                    cache.put(&key, &reply.to_wire())?;
                }
                reply
            }
        };

        transcript.push(Turn {
            speaker: Speaker::Model,
            text: reply.to_wire(),
        });
        session.transcript = transcript;
        Ok(reply)
    }

    fn call_with_retry(
        &self,
        provider: &dyn Provider,
        request: &CompletionRequest<'_>,
    ) -> Result<Reply, GatewayError> {
        let mut rng = rand::rng();
        let mut attempt = 0u32;
        loop {
            let outcome = if provider.is_live() {
                let _permit = self.limiter.acquire();
                provider.complete(request)
            } else {
                provider.complete(request)
            };
            match outcome {
                Ok(Reply::Text(text)) => return Ok(Reply::from_text(text)),
                Ok(refused) => return Ok(refused),
                Err(ProviderError::MissingFixture(key)) => {
                    return Err(GatewayError::MissingFixture { key })
                }
                Err(ProviderError::Fatal(msg)) => return Err(GatewayError::Provider(msg)),
                Err(ProviderError::Transient(msg)) => {
                    if attempt >= self.retry.max_retries {
                        return Err(GatewayError::RetriesExhausted {
                            attempts: attempt + 1,
                            last: msg,
                        });
                    }
                    let delay = self.retry.delay(attempt, &mut rng);
                    log::warn!(
                        "transient failure for {} (retry {} in {:?}): {msg}",
                        request.role,
                        attempt + 1,
                        delay
                    );
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::time::Duration;

    use super::*;

    fn predictor() -> ProviderRole {
        ProviderRole::new(Role::Predictor, "gpt-test")
    }

    fn preprocessor() -> ProviderRole {
        ProviderRole::new(Role::Preprocessor, "claude-test")
    }

    fn no_wait() -> RetryPolicy {
        RetryPolicy {
            base_delay: Duration::ZERO,
            ..RetryPolicy::default()
        }
    }

    #[test]
    fn open_session_configured_and_not() {
        let gw = Gateway::builder()
            .bind(predictor(), Arc::new(ScriptedProvider::constant("Option 1")))
            .build()
            .unwrap();
        let s = gw.open_session(&predictor()).unwrap();
        assert!(s.transcript().is_empty());
        assert!(matches!(
            gw.open_session(&preprocessor()),
            Err(GatewayError::Unconfigured(_))
        ));
    }

    #[test]
    fn sessions_are_independent() {
        let gw = Gateway::builder()
            .bind(predictor(), Arc::new(ScriptedProvider::constant("Option 1")))
            .build()
            .unwrap();
        let mut a = gw.open_session(&predictor()).unwrap();
        let b = gw.open_session(&predictor()).unwrap();
        gw.send(&mut a, "hello", 0).unwrap();
        assert_eq!(a.transcript().len(), 2);
        assert!(b.transcript().is_empty());
    }

    #[test]
    fn scripted_reply_and_transcript_alternates() {
        let gw = Gateway::builder()
            .bind(predictor(), Arc::new(ScriptedProvider::constant("Option 1")))
            .build()
            .unwrap();
        let mut s = gw.open_session(&predictor()).unwrap();
        assert_eq!(gw.send(&mut s, "pick", 0).unwrap(), Reply::Text("Option 1".into()));
        gw.send(&mut s, "again", 0).unwrap();
        let speakers: Vec<_> = s.transcript().iter().map(|t| t.speaker).collect();
        assert_eq!(
            speakers,
            [Speaker::User, Speaker::Model, Speaker::User, Speaker::Model]
        );
    }

    #[test]
    fn empty_message_rejected() {
        let gw = Gateway::builder()
            .bind(predictor(), Arc::new(ScriptedProvider::constant("x")))
            .build()
            .unwrap();
        let mut s = gw.open_session(&predictor()).unwrap();
        assert!(matches!(gw.send(&mut s, "  ", 0), Err(GatewayError::EmptyMessage)));
    }

    #[test]
    fn cache_hit_skips_provider() {
        let provider = Arc::new(ScriptedProvider::constant("Option 2"));
        let gw = Gateway::builder()
            .bind(predictor(), provider.clone())
            .cache(ResponseCache::in_memory())
            .build()
            .unwrap();
        let mut s1 = gw.open_session(&predictor()).unwrap();
        gw.send(&mut s1, "same prompt", 0).unwrap();
        let mut s2 = gw.open_session(&predictor()).unwrap();
        let reply = gw.send(&mut s2, "same prompt", 0).unwrap();
        assert_eq!(reply, Reply::Text("Option 2".into()));
        assert_eq!(provider.calls(), 1);

        // a different attempt index is a different key
        let mut s3 = gw.open_session(&predictor()).unwrap();
        gw.send(&mut s3, "same prompt", 1).unwrap();
        assert_eq!(provider.calls(), 2);
    }

    #[test]
    fn refusal_marker_becomes_refused() {
        let gw = Gateway::builder()
            .bind(
                preprocessor(),
                Arc::new(ScriptedProvider::constant("[refused] content policy")),
            )
            .build()
            .unwrap();
        let mut s = gw.open_session(&preprocessor()).unwrap();
        let reply = gw.send(&mut s, "label this", 0).unwrap();
        assert_eq!(reply, Reply::Refused("content policy".into()));
    }

    #[test]
    fn transient_failures_are_retried_then_exhausted() {
        let calls = Arc::new(AtomicU32::new(0));
        let c = calls.clone();
        let flaky = ScriptedProvider::from_fn(move |_| {
            if c.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(ProviderError::Transient("429".into()))
            } else {
                Ok(Reply::Text("ok".into()))
            }
        });
        let gw = Gateway::builder()
            .bind(predictor(), Arc::new(flaky))
            .retry(no_wait())
            .build()
            .unwrap();
        let mut s = gw.open_session(&predictor()).unwrap();
        assert_eq!(gw.send(&mut s, "hi", 0).unwrap(), Reply::Text("ok".into()));
        assert_eq!(calls.load(Ordering::SeqCst), 3);

        let always = ScriptedProvider::from_fn(|_| Err(ProviderError::Transient("503".into())));
        let gw = Gateway::builder()
            .bind(predictor(), Arc::new(always))
            .retry(no_wait())
            .build()
            .unwrap();
        let mut s = gw.open_session(&predictor()).unwrap();
        match gw.send(&mut s, "hi", 0) {
            Err(GatewayError::RetriesExhausted { attempts, .. }) => assert_eq!(attempts, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(s.transcript().is_empty());
    }

    #[test]
    fn fatal_and_missing_fixture_are_not_retried() {
        let p = Arc::new(ScriptedProvider::from_fn(|r| {
            Err(ProviderError::MissingFixture(r.key.to_string()))
        }));
        let gw = Gateway::builder()
            .bind(predictor(), p.clone())
            .retry(no_wait())
            .build()
            .unwrap();
        let mut s = gw.open_session(&predictor()).unwrap();
        let err = gw.send(&mut s, "hi", 0).unwrap_err();
        assert!(err.is_fixture_miss());
        assert_eq!(p.calls(), 1);
    }

    #[test]
    fn cache_key_sensitivity() {
        let t = vec![Turn {
            speaker: Speaker::User,
            text: "prompt".into(),
        }];
        let a = cache_key(Role::Predictor, "m", &t, 0);
        assert_eq!(a, cache_key(Role::Predictor, "m", &t, 0));
        assert_ne!(a, cache_key(Role::Predictor, "m", &t, 1));
        assert_ne!(a, cache_key(Role::Predictor, "m2", &t, 0));
        assert_ne!(a, cache_key(Role::Preprocessor, "m", &t, 0));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn role_mismatch_is_rejected() {
        let gw = Gateway::builder()
            .bind(preprocessor(), Arc::new(ScriptedProvider::constant("x")))
            .build()
            .unwrap();
        let s = gw.open_session(&preprocessor()).unwrap();
        assert!(matches!(
            s.require_role(Role::Predictor),
            Err(GatewayError::RoleMismatch { .. })
        ));
    }

    struct LiveStub;
    impl Provider for LiveStub {
        fn complete(&self, _: &CompletionRequest<'_>) -> Result<Reply, ProviderError> {
            Ok(Reply::Text("x".into()))
        }
        fn is_live(&self) -> bool {
            true
        }
    }

    #[test]
    fn live_roles_need_distinct_models() {
        let err = Gateway::builder()
            .bind(ProviderRole::new(Role::Preprocessor, "same"), Arc::new(LiveStub))
            .bind(ProviderRole::new(Role::Predictor, "same"), Arc::new(LiveStub))
            .build();
        assert!(matches!(err, Err(GatewayError::SharedLiveModel(m)) if m == "same"));
        // offline stand-ins may share a label
        assert!(Gateway::builder()
            .bind(ProviderRole::new(Role::Preprocessor, "same"), Arc::new(ScriptedProvider::constant("x")))
            .bind(ProviderRole::new(Role::Predictor, "same"), Arc::new(LiveStub))
            .build()
            .is_ok());
    }
}
