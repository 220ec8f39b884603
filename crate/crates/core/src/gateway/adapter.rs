//! Per-provider differences in the chat-completions body.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::transport::TransportError;
use super::{CompletionRequest, CompletionResponse, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    OpenAi,
    DeepSeek,
    Generic,
}

impl std::str::FromStr for Provider {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "openai" => Ok(Provider::OpenAi),
            "deepseek" => Ok(Provider::DeepSeek),
            "generic" => Ok(Provider::Generic),
            other => Err(format!("unknown provider `{other}` (expected openai|deepseek|generic)")),
        }
    }
}

impl Provider {
    pub fn default_key_env(self) -> &'static str {
        match self {
            Provider::OpenAi => "OPENAI_API_KEY",
            Provider::DeepSeek => "DEEPSEEK_API_KEY",
            Provider::Generic => "LEASH_API_KEY",
        }
    }

    pub fn request_body(self, req: &CompletionRequest) -> Value {
        let p = &req.params;
        let mut body = Map::new();
        body.insert("model".into(), json!(p.model));
        body.insert("messages".into(), json!(req.messages));
        if let Some(t) = p.temperature {
            body.insert("temperature".into(), json!(t));
        }
        match self {
            Provider::OpenAi => {
                if let Some(e) = p.reasoning_effort {
                    body.insert("reasoning_effort".into(), json!(e.as_str()));
                }
                if let Some(v) = p.verbosity {
                    body.insert("verbosity".into(), json!(v.as_str()));
                }
                if let Some(m) = p.max_output {
                    body.insert("max_completion_tokens".into(), json!(m));
                }
            }
            Provider::DeepSeek | Provider::Generic => {
                if let Some(m) = p.max_output {
                    body.insert("max_tokens".into(), json!(m));
                }
            }
        }
        Value::Object(body)
    }

    pub fn parse_response(self, json: &Value, latency_ms: u64) -> Result<CompletionResponse, TransportError> {
        let choice = json
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| TransportError::Decode("response has no choices".into()))?;
        let text = match choice.pointer("/message/content") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Null) | None => String::new(),
            Some(other) => return Err(TransportError::Decode(format!("unexpected content {other}"))),
        };
        let usage = json.get("usage").map(|u| Usage {
            prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64),
            completion_tokens: u.get("completion_tokens").and_then(Value::as_u64),
            total_tokens: u.get("total_tokens").and_then(Value::as_u64),
        });
        let mut meta = BTreeMap::new();
        for k in ["id", "model", "system_fingerprint"] {
            if let Some(v) = json.get(k).filter(|v| !v.is_null()) {
                meta.insert(k.to_string(), v.clone());
            }
        }
        if let Some(f) = choice.get("finish_reason").filter(|v| !v.is_null()) {
            meta.insert("finish_reason".into(), f.clone());
        }
        Ok(CompletionResponse {
            text,
            usage,
            provider_meta: meta,
            latency_ms,
        })
    }
}
