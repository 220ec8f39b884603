//! Provider-agnostic chat completions with retries, bounded fan-out and cassettes.

pub mod adapter;
pub mod cassette;
pub mod transport;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use adapter::Provider;
pub use cassette::{Cassette, CassetteEntry, CassetteError, CassetteMode, RecordedError};
pub use transport::{HttpConfig, HttpTransport, NoNetwork, ScriptedTransport, Transport, TransportError};

use crate::model::RunParams;

pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub params: RunParams,
    pub messages: Vec<Message>,
    /// 1-based repetition index; distinct attempts get distinct keys.
    pub attempt: u32,
}

impl CompletionRequest {
    pub fn user(params: RunParams, prompt: impl Into<String>) -> Self {
        Self {
            params,
            messages: vec![Message {
                role: Role::User,
                content: prompt.into(),
            }],
            attempt: 1,
        }
    }

    pub fn with_attempt(mut self, attempt: u32) -> Self {
        self.attempt = attempt;
        self
    }

    /// SHA-256 over canonical JSON of params, messages and attempt.
    pub fn idempotency_key(&self) -> String {
        sha256_json(&json!({
            "params": self.params,
            "messages": self.messages,
            "attempt": self.attempt,
        }))
    }

    /// Like the key, but ignoring the attempt index.
    pub fn request_digest(&self) -> String {
        sha256_json(&json!({
            "params": self.params,
            "messages": self.messages,
        }))
    }

    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

fn sha256_json(v: &Value) -> String {
    // serde_json maps are sorted by key, so this encoding is canonical
    hex::encode(Sha256::digest(serde_json::to_vec(v).expect("json encodes")))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub total_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provider_meta: BTreeMap<String, Value>,
    #[serde(default)]
    pub latency_ms: u64,
}

impl CompletionResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            usage: None,
            provider_meta: BTreeMap::new(),
            latency_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum GatewayError {
    #[error("replay-miss: no cassette entry for key {key}")]
    ReplayMiss { key: String },
    #[error("provider-error{}: {body}", status.map(|s| format!(" {s}")).unwrap_or_default())]
    ProviderError { status: Option<u16>, body: String },
    #[error("timeout: no response within the deadline")]
    Timeout,
    #[error("connection: {message}")]
    Connection { message: String },
    #[error("credentials: {message}")]
    Credentials { message: String },
    #[error("invalid-request: {message}")]
    InvalidRequest { message: String },
    #[error("cassette: {message}")]
    Cassette { message: String },
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::ReplayMiss { .. } => "replay-miss",
            GatewayError::ProviderError { .. } => "provider-error",
            GatewayError::Timeout => "timeout",
            GatewayError::Connection { .. } => "connection",
            GatewayError::Credentials { .. } => "credentials",
            GatewayError::InvalidRequest { .. } => "invalid-request",
            GatewayError::Cassette { .. } => "cassette",
        }
    }
}

impl From<TransportError> for GatewayError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Status { status, body } => GatewayError::ProviderError {
                status: Some(status),
                body,
            },
            TransportError::Timeout => GatewayError::Timeout,
            TransportError::Connect(message) => GatewayError::Connection { message },
            TransportError::Decode(message) => GatewayError::ProviderError {
                status: None,
                body: message,
            },
            TransportError::Credentials(message) => GatewayError::Credentials { message },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        Self {
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    fn delay(&self, retry: u32) -> Duration {
        self.base_delay.saturating_mul(1 << retry.min(16)).min(self.max_delay)
    }
}

/// Sends requests through a transport, mediated by a cassette.
#[derive(Clone)]
pub struct Gateway {
    cassette: Arc<Cassette>,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    max_in_flight: usize,
}

impl Gateway {
    pub fn new(cassette: Arc<Cassette>, transport: Arc<dyn Transport>) -> Self {
        Self {
            cassette,
            transport,
            retry: RetryPolicy::default(),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }

    /// Replay-only gateway; any transport use fails.
    pub fn replay(cassette: Arc<Cassette>) -> Self {
        Self::new(cassette, Arc::new(NoNetwork))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, cap: usize) -> Self {
        self.max_in_flight = cap.max(1);
        self
    }

    pub fn cassette(&self) -> &Arc<Cassette> {
        &self.cassette
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    fn send_with_retries(&self, req: &CompletionRequest) -> Result<CompletionResponse, TransportError> {
        let mut retry = 0;
        loop {
            match self.transport.send(req) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retryable() && retry < self.retry.max_retries => {
                    tracing::warn!(attempt = req.attempt, retry, error = %e, "transient provider failure, retrying");
                    std::thread::sleep(self.retry.delay(retry));
                    retry += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        if !req.messages.iter().any(|m| m.role == Role::User) {
            return Err(GatewayError::InvalidRequest {
                message: "request has no user message".into(),
            });
        }
        let key = req.idempotency_key();
        match self.cassette.mode() {
            CassetteMode::Replay => match self.cassette.get(&key) {
                Some(entry) => entry.outcome().cloned().map_err(|e| GatewayError::ProviderError {
                    status: e.status,
                    body: e.body.clone(),
                }),
                None => Err(GatewayError::ReplayMiss { key }),
            },
            CassetteMode::Live => self.send_with_retries(req).map_err(GatewayError::from),
            CassetteMode::Record => {
                let outcome = self.send_with_retries(req);
                let entry = match &outcome {
                    Ok(resp) => Some(CassetteEntry {
                        key: key.clone(),
                        request_digest: req.request_digest(),
                        response: Some(resp.clone()),
                        error: None,
                    }),
                    Err(TransportError::Status { status, body }) => Some(CassetteEntry {
                        key: key.clone(),
                        request_digest: req.request_digest(),
                        response: None,
                        error: Some(RecordedError {
                            status: Some(*status),
                            body: body.clone(),
                        }),
                    }),
                    Err(_) => None,
                };
                if let Some(entry) = entry {
                    self.cassette
                        .record(entry)
                        .map_err(|e| GatewayError::Cassette { message: e.to_string() })?;
                }
                outcome.map_err(GatewayError::from)
            }
        }
    }

    /// Completes every request, at most `max_in_flight` at a time. Results keep input order.
    pub fn complete_all(&self, reqs: &[CompletionRequest]) -> Vec<Result<CompletionResponse, GatewayError>> {
        let slots: Vec<Mutex<Option<Result<CompletionResponse, GatewayError>>>> =
            reqs.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.max_in_flight.min(reqs.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(req) = reqs.get(i) else { break };
                    let r = self.complete(req);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
            .collect()
    }

    /// `n` independent attempts of the same request, positioned by attempt index 1..=n.
    pub fn fan_out(&self, req: &CompletionRequest, n: u32) -> Vec<Result<CompletionResponse, GatewayError>> {
        let reqs: Vec<_> = (1..=n).map(|a| req.clone().with_attempt(a)).collect();
        self.complete_all(&reqs)
    }
}
