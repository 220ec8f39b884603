//! Wire transports: HTTP chat-completions and an in-process scripted stand-in.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::adapter::Provider;
use super::{CompletionRequest, CompletionResponse};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("undecodable provider response: {0}")]
    Decode(String),
    #[error("credentials: {0}")]
    Credentials(String),
}

impl TransportError {
    /// 429, 5xx, timeouts and connection failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => *status == 429 || (500..600).contains(status),
            TransportError::Timeout | TransportError::Connect(_) => true,
            TransportError::Decode(_) | TransportError::Credentials(_) => false,
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &CompletionRequest) -> Result<CompletionResponse, TransportError>;
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub provider: Provider,
    pub base_url: String,
    pub path: String,
    /// Environment variable holding the API key; never read from pipeline files.
    pub api_key_env: String,
    pub auth_header: String,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(provider: Provider, base_url: impl Into<String>) -> Self {
        Self {
            provider,
            base_url: base_url.into(),
            path: "/chat/completions".into(),
            api_key_env: provider.default_key_env().into(),
            auth_header: "Authorization".into(),
            timeout: Duration::from_secs(120),
        }
    }

    pub fn url(&self) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), self.path)
    }
}

pub struct HttpTransport {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(config: HttpConfig) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        Ok(Self { config, client })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &CompletionRequest) -> Result<CompletionResponse, TransportError> {
        let key = std::env::var(&self.config.api_key_env)
            .map_err(|_| TransportError::Credentials(format!("{} is not set", self.config.api_key_env)))?;
        let body = self.config.provider.request_body(request);
        let started = Instant::now();
        let header_value = if self.config.auth_header.eq_ignore_ascii_case("authorization") {
            format!("Bearer {key}")
        } else {
            key
        };
        let resp = self
            .client
            .post(self.config.url())
            .header(self.config.auth_header.as_str(), header_value)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Connect(e.to_string())
                }
            })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body: text });
        }
        let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| TransportError::Decode(e.to_string()))?;
        let latency_ms = started.elapsed().as_millis() as u64;
        self.config.provider.parse_response(&json, latency_ms)
    }
}

type Script = dyn Fn(&CompletionRequest) -> Result<CompletionResponse, TransportError> + Send + Sync;

/// Answers requests from a closure; counts calls. For tests and fixture generation.
pub struct ScriptedTransport {
    script: Box<Script>,
    calls: AtomicUsize,
}

impl ScriptedTransport {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<CompletionResponse, TransportError> + Send + Sync + 'static,
    {
        Self {
            script: Box::new(f),
            calls: AtomicUsize::new(0),
        }
    }

    /// Replies with the text chosen by `f`.
    pub fn text<F>(f: F) -> Self
    where
        F: Fn(&CompletionRequest) -> String + Send + Sync + 'static,
    {
        Self::new(move |r| Ok(CompletionResponse::text(f(r))))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, request: &CompletionRequest) -> Result<CompletionResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.script)(request)
    }
}

/// Always fails; stands in where no network access is allowed.
pub struct NoNetwork;

impl Transport for NoNetwork {
    fn send(&self, _: &CompletionRequest) -> Result<CompletionResponse, TransportError> {
        Err(TransportError::Connect("network access disabled".into()))
    }
}
