use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{ChatProvider, ChatRequest, ChatResponse, LlmError, TokenProb};
use crate::tokens::heuristic_count;

#[derive(Debug, Clone)]
enum Reply {
    Canned(String),
    /// Answers with `<dir>/<label>`; unlabeled or missing files echo the prompt.
    FromDir(PathBuf),
    Echo,
}

/// Deterministic offline provider. Token counts use the `bytes/4` heuristic
/// on the prompt and the reply.
#[derive(Debug)]
pub struct MockProvider {
    reply: Reply,
    script: Mutex<VecDeque<Result<String, LlmError>>>,
    per_label: HashMap<String, Result<String, LlmError>>,
    token_probs: Option<Vec<TokenProb>>,
    calls: AtomicUsize,
}

impl MockProvider {
    fn with_reply(reply: Reply) -> Self {
        Self {
            reply,
            script: Mutex::new(VecDeque::new()),
            per_label: HashMap::new(),
            token_probs: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn canned(text: impl Into<String>) -> Self {
        Self::with_reply(Reply::Canned(text.into()))
    }

    pub fn from_dir(dir: impl Into<PathBuf>) -> Self {
        Self::with_reply(Reply::FromDir(dir.into()))
    }

    pub fn echo() -> Self {
        Self::with_reply(Reply::Echo)
    }

    /// Outcomes consumed in order, one per call, before the default reply.
    pub fn then(self, outcome: Result<String, LlmError>) -> Self {
        self.script
            .lock()
            .expect("mock poisoned")
            .push_back(outcome);
        self
    }

    /// Fixed outcome for requests carrying this label.
    pub fn for_label(
        mut self,
        label: impl Into<String>,
        outcome: Result<String, LlmError>,
    ) -> Self {
        self.per_label.insert(label.into(), outcome);
        self
    }

    pub fn with_token_probs(mut self, probs: Vec<TokenProb>) -> Self {
        self.token_probs = Some(probs);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn default_reply(&self, req: &ChatRequest) -> String {
        match &self.reply {
            Reply::Canned(text) => text.clone(),
            Reply::Echo => req.user.clone(),
            Reply::FromDir(dir) => req
                .label
                .as_ref()
                .and_then(|label| std::fs::read_to_string(dir.join(label)).ok())
                .unwrap_or_else(|| req.user.clone()),
        }
    }
}

impl ChatProvider for MockProvider {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let scripted = self.script.lock().expect("mock poisoned").pop_front();
        let outcome = match scripted {
            Some(outcome) => outcome,
            None => match req.label.as_ref().and_then(|l| self.per_label.get(l)) {
                Some(outcome) => outcome.clone(),
                None => Ok(self.default_reply(req)),
            },
        };
        let text = outcome?;
        Ok(ChatResponse {
            prompt_tokens: (heuristic_count(&req.system) + heuristic_count(&req.user)) as u64,
            completion_tokens: heuristic_count(&text) as u64,
            token_probs: if req.want_token_probs {
                self.token_probs.clone()
            } else {
                None
            },
            text,
        })
    }
}
