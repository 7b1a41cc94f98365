use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::transport::{HttpReply, Transport, TransportError};
use super::{ChatProvider, ChatRequest, ChatResponse, LlmError, TokenProb};

const TOP_LOGPROBS: u32 = 10;

/// Provider speaking the OpenAI `chat/completions` JSON shape.
pub struct OpenAiProvider {
    base_url: String,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    timeout: Duration,
}

impl OpenAiProvider {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        transport: Arc<dyn Transport>,
        timeout: Duration,
    ) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            transport,
            timeout,
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }
}

/// Reasoning models (`o1`, `o3-mini`, ...) take `max_completion_tokens` and
/// reject a temperature.
fn is_reasoning_model(model: &str) -> bool {
    let mut chars = model.chars();
    chars.next() == Some('o') && chars.next().is_some_and(|c| c.is_ascii_digit())
}

pub(crate) fn request_body(req: &ChatRequest) -> Value {
    let mut messages = Vec::new();
    if !req.system.is_empty() {
        messages.push(json!({"role": "system", "content": req.system}));
    }
    messages.push(json!({"role": "user", "content": req.user}));
    let mut body = json!({
        "model": req.model,
        "messages": messages,
    });
    if is_reasoning_model(&req.model) {
        body["max_completion_tokens"] = json!(req.max_output_tokens);
    } else {
        body["max_tokens"] = json!(req.max_output_tokens);
        body["temperature"] = json!(req.temperature);
    }
    if req.want_token_probs {
        body["logprobs"] = json!(true);
        body["top_logprobs"] = json!(TOP_LOGPROBS);
    }
    body
}

fn looks_like_overflow(body: &str) -> bool {
    let lower = body.to_ascii_lowercase();
    lower.contains("context_length_exceeded")
        || lower.contains("maximum context length")
        || lower.contains("context window")
        || lower.contains("too many tokens")
}

pub(crate) fn classify(reply: HttpReply) -> Result<String, LlmError> {
    match reply.status {
        200..=299 => Ok(reply.body),
        401 | 403 => Err(LlmError::Auth(reply.body)),
        429 => Err(LlmError::RateLimited {
            retry_after_ms: reply.retry_after.map(|d| d.as_millis() as u64),
        }),
        408 | 504 => Err(LlmError::Timeout),
        400 | 413 if looks_like_overflow(&reply.body) => Err(LlmError::ContextOverflow(reply.body)),
        status @ 500..=599 => Err(LlmError::Server {
            status,
            body: reply.body,
        }),
        status => Err(LlmError::BadRequest {
            status,
            body: reply.body,
        }),
    }
}

pub(crate) fn parse_response(body: &str) -> Result<ChatResponse, LlmError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| LlmError::InvalidResponse(e.to_string()))?;
    let choice = value
        .pointer("/choices/0")
        .ok_or_else(|| LlmError::InvalidResponse("no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let usage = |key: &str| {
        value
            .pointer(&format!("/usage/{key}"))
            .and_then(Value::as_u64)
            .unwrap_or(0)
    };
    let token_probs = choice.pointer("/logprobs/content/0").map(|first| {
        let alternatives = first
            .get("top_logprobs")
            .and_then(Value::as_array)
            .filter(|a| !a.is_empty())
            .cloned()
            .unwrap_or_else(|| vec![first.clone()]);
        alternatives
            .iter()
            .filter_map(|alt| {
                let token = alt.get("token")?.as_str()?.to_string();
                let logprob = alt.get("logprob")?.as_f64()?;
                Some(TokenProb {
                    token,
                    prob: logprob.exp().clamp(0.0, 1.0),
                })
            })
            .collect()
    });
    Ok(ChatResponse {
        text,
        prompt_tokens: usage("prompt_tokens"),
        completion_tokens: usage("completion_tokens"),
        token_probs,
    })
}

impl ChatProvider for OpenAiProvider {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut headers = Vec::new();
        if let Some(key) = &self.api_key {
            headers.push(("Authorization".to_string(), format!("Bearer {key}")));
        }
        let body = request_body(request).to_string();
        let reply = self
            .transport
            .post_json(&self.endpoint(), &headers, &body, self.timeout)
            .map_err(|e| match e {
                TransportError::Timeout => LlmError::Timeout,
                TransportError::Other(msg) => LlmError::Transport(msg),
            })?;
        parse_response(&classify(reply)?)
    }
}
