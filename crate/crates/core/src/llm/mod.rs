//! Chat-completion client: one OpenAI-compatible wire shape, plus a mock.
//!
//! [`LlmClient`] wraps a [`ChatProvider`] with retry/backoff, a client-side
//! tokens-per-minute budget and an append-only usage ledger. It is `Sync` and
//! meant to be shared across worker threads.

mod client;
mod cost;
mod limiter;
mod mock;
mod openai;
mod sanitize;
mod transport;

pub use client::{Completion, LlmClient, RetryPolicy, UsageLabels};
pub use cost::{
    estimate_cost, from_picos, sum_usd, summarize_usage, to_picos, total_cost, CostError, CostRow,
    CostTable, ModelRates, UsageLedger, UsageRecord,
};
pub use limiter::{Clock, ManualClock, SystemClock, TokenBudget};
pub use mock::MockProvider;
pub use openai::OpenAiProvider;
pub use sanitize::sanitize_code_reply;
pub use transport::{HttpReply, RecordingTransport, Transport, TransportError, UreqTransport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub want_token_probs: bool,
    /// Caller-side tag (e.g. the file being migrated). Never sent on the wire.
    #[serde(default)]
    pub label: Option<String>,
}

impl ChatRequest {
    pub fn new(
        model: impl Into<String>,
        system: impl Into<String>,
        user: impl Into<String>,
    ) -> Self {
        Self {
            model: model.into(),
            system: system.into(),
            user: user.into(),
            temperature: 1.0,
            max_output_tokens: 16_384,
            want_token_probs: false,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest(
                "max_output_tokens must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProb {
    pub token: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Alternatives for the first answer position, when requested and offered.
    pub token_probs: Option<Vec<TokenProb>>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LlmError {
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("credential variable `{0}` is not set")]
    MissingCredential(String),
    #[error("rate limited")]
    RateLimited { retry_after_ms: Option<u64> },
    #[error("prompt exceeds the model context window: {0}")]
    ContextOverflow(String),
    #[error("request timed out")]
    Timeout,
    #[error("server error {status}: {body}")]
    Server { status: u16, body: String },
    #[error("request rejected {status}: {body}")]
    BadRequest { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    InvalidResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl LlmError {
    /// Worth another attempt after a pause.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            LlmError::RateLimited { .. }
                | LlmError::Timeout
                | LlmError::Server { .. }
                | LlmError::Transport(_)
        )
    }
}

/// One attempt at a chat completion. Retrying is the client's job.
pub trait ChatProvider: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}
