use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, Completer, GatewayError, Usage};
use crate::config::{ApiStyle, ProviderConfig};

const ANTHROPIC_VERSION: &str = "2023-06-01";

/// Blocking HTTP client for one hosted model.
pub struct LiveClient {
    name: String,
    style: ApiStyle,
    endpoint: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for LiveClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveClient")
            .field("name", &self.name)
            .field("style", &self.style)
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl LiveClient {
    pub fn new(name: &str, style: ApiStyle, endpoint: &str, model: &str, api_key: &str) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(180)))
            .build()
            .into();
        Self {
            name: name.to_string(),
            style,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key: api_key.to_string(),
            agent,
        }
    }

    /// Reads the key from the provider's env var. A missing key is an
    /// error unless `allow_missing_key` (offline construction).
    pub fn from_config(pc: &ProviderConfig, allow_missing_key: bool) -> Result<Self, GatewayError> {
        let var = pc.key_env();
        let key = match std::env::var(&var) {
            Ok(k) if !k.is_empty() => k,
            _ if allow_missing_key => String::new(),
            _ => {
                return Err(GatewayError::Auth { provider: pc.name.clone(), message: format!("{var} is not set") });
            }
        };
        Ok(Self::new(&pc.name, pc.api_style, &pc.endpoint, &pc.model, &key))
    }

    pub fn payload(&self, req: &ChatRequest) -> Value {
        match self.style {
            ApiStyle::Openai => {
                let mut messages = Vec::new();
                if !req.system_text.is_empty() {
                    messages.push(json!({"role": "system", "content": req.system_text}));
                }
                messages.push(json!({"role": "user", "content": req.user_text}));
                json!({
                    "model": self.model,
                    "messages": messages,
                    "temperature": req.decoding.temperature,
                    "max_tokens": req.decoding.max_tokens,
                })
            }
            ApiStyle::Anthropic => {
                let mut body = json!({
                    "model": self.model,
                    "max_tokens": req.decoding.max_tokens,
                    "temperature": req.decoding.temperature,
                    "messages": [{"role": "user", "content": req.user_text}],
                });
                if !req.system_text.is_empty() {
                    body["system"] = json!(req.system_text);
                }
                body
            }
        }
    }

    fn parse_body(&self, body: &Value) -> Result<(String, Usage), GatewayError> {
        let malformed = || GatewayError::Transport(format!("{}: unexpected response shape", self.name));
        match self.style {
            ApiStyle::Openai => {
                let text = body
                    .pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .ok_or_else(malformed)?
                    .to_string();
                let usage = Usage {
                    prompt_tokens: body.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
                    completion_tokens: body.pointer("/usage/completion_tokens").and_then(Value::as_u64),
                };
                Ok((text, usage))
            }
            ApiStyle::Anthropic => {
                let blocks = body.get("content").and_then(Value::as_array).ok_or_else(malformed)?;
                let text: String = blocks
                    .iter()
                    .filter(|b| b.get("type").and_then(Value::as_str) == Some("text"))
                    .filter_map(|b| b.get("text").and_then(Value::as_str))
                    .collect();
                let usage = Usage {
                    prompt_tokens: body.pointer("/usage/input_tokens").and_then(Value::as_u64),
                    completion_tokens: body.pointer("/usage/output_tokens").and_then(Value::as_u64),
                };
                Ok((text, usage))
            }
        }
    }
}

impl Completer for LiveClient {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let started = Instant::now();
        let call = self.agent.post(&self.endpoint).header("content-type", "application/json");
        let call = match self.style {
            ApiStyle::Openai => call.header("authorization", &format!("Bearer {}", self.api_key)),
            ApiStyle::Anthropic => {
                call.header("x-api-key", &self.api_key).header("anthropic-version", ANTHROPIC_VERSION)
            }
        };
        let mut resp = call
            .send_json(self.payload(req))
            .map_err(|e| GatewayError::Transport(format!("{}: {e}", self.name)))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Transport(format!("{}: {e}", self.name)))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(GatewayError::Auth { provider: self.name.clone(), message: text }),
            429 => return Err(GatewayError::RateLimited { provider: self.name.clone(), attempts: 1 }),
            500..=599 => return Err(GatewayError::Transport(format!("{}: HTTP {status}", self.name))),
            _ => return Err(GatewayError::Http { provider: self.name.clone(), status, body: text }),
        }
        let body: Value =
            serde_json::from_str(&text).map_err(|e| GatewayError::Transport(format!("{}: {e}", self.name)))?;
        let (text, usage) = self.parse_body(&body)?;
        Ok(ChatResponse { text, latency_ms: started.elapsed().as_millis() as u64, usage: Some(usage) })
    }
}
