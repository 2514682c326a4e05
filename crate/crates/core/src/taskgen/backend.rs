//! Completion backends and the retrying client around them.
//!
//! Wire protocol: `POST {"prompt", "temperature", "max_tokens"}` answered by
//! `{"text"}`. [`StubBackend`] replays canned responses keyed by
//! [`CompletionRequest::hash`] for reproducible runs.

use std::collections::HashMap;
use std::path::Path;
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TaskgenError;
use crate::mixtures::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, temperature: f64, max_tokens: u32) -> Result<Self, TaskgenError> {
        if max_tokens == 0 {
            return Err(TaskgenError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !(temperature.is_finite() && temperature >= 0.0) {
            return Err(TaskgenError::InvalidRequest(format!("temperature {temperature} must be >= 0")));
        }
        Ok(Self { prompt: prompt.into(), temperature, max_tokens })
    }

    /// Compact JSON body sent over the wire.
    pub fn wire_body(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }

    /// SHA-256 (hex) of [`Self::wire_body`].
    pub fn hash(&self) -> String {
        sha256_hex(self.wire_body().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub backend: String,
    pub attempts: u32,
}

/// Failure of a single attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("permanent backend failure: {0}")]
    Permanent(String),
    #[error("request timed out")]
    Timeout,
}

/// Failure after retries are exhausted or a permanent error.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompletionError {
    #[error("backend failed after {attempts} attempt(s): {message}")]
    Failed { attempts: u32, message: String },
    #[error("backend timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
}

pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete_once(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    /// Adds up to 100% random extra delay per retry.
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30), jitter: true }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO, jitter: false }
    }

    fn delay(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << retry.min(16)).min(self.max_delay);
        if self.jitter && !exp.is_zero() {
            exp.mul_f64(1.0 + rng.gen::<f64>()).min(self.max_delay)
        } else {
            exp
        }
    }
}

/// Sends `request`, retrying transient failures and timeouts with
/// exponential backoff. Backoff jitter is drawn from a generator seeded with
/// `seed`, so delays are reproducible.
pub fn complete(
    backend: &dyn CompletionBackend,
    request: &CompletionRequest,
    policy: &RetryPolicy,
    seed: u64,
) -> Result<CompletionResult, CompletionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_attempts = policy.max_attempts.max(1);
    let mut last = BackendError::Transient("no attempt made".into());
    for attempt in 1..=max_attempts {
        match backend.complete_once(request) {
            Ok(text) => return Ok(CompletionResult { text, backend: backend.id().to_owned(), attempts: attempt }),
            Err(BackendError::Permanent(message)) => return Err(CompletionError::Failed { attempts: attempt, message }),
            Err(e) => {
                log::debug!("attempt {attempt} on {} failed: {e}", backend.id());
                last = e;
            }
        }
        if attempt < max_attempts {
            let d = policy.delay(attempt - 1, &mut rng);
            if !d.is_zero() {
                thread::sleep(d);
            }
        }
    }
    Err(match last {
        BackendError::Timeout => CompletionError::Timeout { attempts: max_attempts },
        e => CompletionError::Failed { attempts: max_attempts, message: e.to_string() },
    })
}

#[derive(Debug, Deserialize)]
struct StubEntry {
    hash: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct StubLine<'a> {
    hash: String,
    text: &'a str,
}

/// Replays canned completions from a JSONL file of
/// `{"hash": ..., "text": ...}` or `{"hash": ..., "error": "transient" | "permanent" | "timeout"}`.
#[derive(Debug, Clone, Default)]
pub struct StubBackend {
    responses: HashMap<String, Result<String, BackendError>>,
}

impl StubBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_file(path: &Path) -> Result<Self, TaskgenError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TaskgenError::Stub(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TaskgenError> {
        let mut stub = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: StubEntry =
                serde_json::from_str(line).map_err(|e| TaskgenError::Stub(format!("line {}: {e}", i + 1)))?;
            let response = match (entry.text, entry.error.as_deref()) {
                (Some(t), None) => Ok(t),
                (None, Some("transient")) => Err(BackendError::Transient("stubbed".into())),
                (None, Some("permanent")) => Err(BackendError::Permanent("stubbed".into())),
                (None, Some("timeout")) => Err(BackendError::Timeout),
                _ => return Err(TaskgenError::Stub(format!("line {}: need exactly one of text or a known error", i + 1))),
            };
            stub.responses.insert(entry.hash, response);
        }
        Ok(stub)
    }

    pub fn insert(&mut self, request: &CompletionRequest, text: impl Into<String>) {
        self.responses.insert(request.hash(), Ok(text.into()));
    }

    pub fn insert_error(&mut self, request: &CompletionRequest, error: BackendError) {
        self.responses.insert(request.hash(), Err(error));
    }

    /// One JSONL line for a canned text response.
    pub fn line_for(request: &CompletionRequest, text: &str) -> String {
        serde_json::to_string(&StubLine { hash: request.hash(), text }).expect("stub line serializes")
    }
}

impl CompletionBackend for StubBackend {
    fn id(&self) -> &str {
        "stub"
    }

    fn complete_once(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        match self.responses.get(&request.hash()) {
            Some(r) => r.clone(),
            None => Err(BackendError::Permanent(format!("no canned response for request {}", request.hash()))),
        }
    }
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

/// JSON-over-HTTP backend.
pub struct HttpBackend {
    url: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { url: url.into(), agent }
    }
}

impl CompletionBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.url
    }

    fn complete_once(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let mut response = self.agent.post(&self.url).send_json(request).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout,
            e => BackendError::Transient(e.to_string()),
        })?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(BackendError::Transient(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(BackendError::Permanent(format!("HTTP {status}")));
        }
        let body: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Permanent(format!("bad response body: {e}")))?;
        Ok(body.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        error: BackendError,
    }

    impl CompletionBackend for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }

        fn complete_once(&self, _: &CompletionRequest) -> Result<String, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.error.clone())
            } else {
                Ok("done".into())
            }
        }
    }

    fn req() -> CompletionRequest {
        CompletionRequest::new("hello", 0.0, 16).unwrap()
    }

    #[test]
    fn echo_stub() {
        let mut stub = StubBackend::new();
        stub.insert(&req(), "canned");
        let r = complete(&stub, &req(), &RetryPolicy::no_delay(3), 0).unwrap();
        assert_eq!(r.text, "canned");
        assert_eq!(r.attempts, 1);
    }

    #[test]
    fn recovers_after_two_failures() {
        let b = Flaky { failures: 2, calls: AtomicU32::new(0), error: BackendError::Transient("503".into()) };
        let r = complete(&b, &req(), &RetryPolicy::no_delay(3), 0).unwrap();
        assert_eq!(r.attempts, 3);
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_at_cap() {
        let b = Flaky { failures: u32::MAX, calls: AtomicU32::new(0), error: BackendError::Transient("503".into()) };
        let err = complete(&b, &req(), &RetryPolicy::no_delay(3), 0).unwrap_err();
        assert!(matches!(err, CompletionError::Failed { attempts: 3, .. }));
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn timeouts_are_retried_then_reported() {
        let b = Flaky { failures: u32::MAX, calls: AtomicU32::new(0), error: BackendError::Timeout };
        assert_eq!(complete(&b, &req(), &RetryPolicy::no_delay(2), 0).unwrap_err(), CompletionError::Timeout { attempts: 2 });
    }

    #[test]
    fn permanent_is_not_retried() {
        let b = Flaky { failures: u32::MAX, calls: AtomicU32::new(0), error: BackendError::Permanent("400".into()) };
        assert!(matches!(complete(&b, &req(), &RetryPolicy::no_delay(5), 0), Err(CompletionError::Failed { attempts: 1, .. })));
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy { max_attempts: 5, base_delay: Duration::from_millis(10), max_delay: Duration::from_millis(50), jitter: false };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d: Vec<u128> = (0..4).map(|i| p.delay(i, &mut rng).as_millis()).collect();
        assert_eq!(d, vec![10, 20, 40, 50]);
        let j = RetryPolicy { jitter: true, max_delay: Duration::from_secs(1), ..p };
        let d = j.delay(1, &mut rng).as_millis();
        assert!((20..=40).contains(&d));
    }

    #[test]
    fn stub_file_format() {
        let r = req();
        let other = CompletionRequest::new("other", 0.0, 16).unwrap();
        let text = format!(
            "{}\n\n{{\"hash\":\"{}\",\"error\":\"permanent\"}}\n",
            StubBackend::line_for(&r, "x"),
            other.hash()
        );
        let stub = StubBackend::from_jsonl(&text).unwrap();
        assert_eq!(stub.complete_once(&r).unwrap(), "x");
        assert!(matches!(stub.complete_once(&other), Err(BackendError::Permanent(_))));
        let unknown = CompletionRequest::new("nope", 0.0, 16).unwrap();
        assert!(matches!(stub.complete_once(&unknown), Err(BackendError::Permanent(_))));
        assert!(StubBackend::from_jsonl("{\"hash\":\"a\"}").is_err());
    }

    #[test]
    fn request_validation_and_hash() {
        assert!(CompletionRequest::new("p", 0.0, 0).is_err());
        assert!(CompletionRequest::new("p", -1.0, 1).is_err());
        assert_eq!(req().wire_body(), r#"{"prompt":"hello","temperature":0.0,"max_tokens":16}"#);
        assert_ne!(req().hash(), CompletionRequest::new("hello", 0.5, 16).unwrap().hash());
    }
}
