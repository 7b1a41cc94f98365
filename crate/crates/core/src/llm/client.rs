use std::sync::Arc;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::cost::{CostTable, UsageLedger, UsageRecord};
use super::limiter::{Clock, SystemClock, TokenBudget};
use super::{ChatProvider, ChatRequest, ChatResponse, LlmError};
use crate::tokens::heuristic_count;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            base_delay: Duration::from_secs(2),
            max_delay: Duration::from_secs(120),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Pause before retry number `attempt` (0-based): `base * 2^attempt`, capped.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay
            .checked_mul(factor)
            .map_or(self.max_delay, |d| d.min(self.max_delay))
    }
}

/// How a request is filed in the usage ledger.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UsageLabels {
    pub case: String,
    pub method: String,
}

impl UsageLabels {
    pub fn new(case: impl Into<String>, method: impl Into<String>) -> Self {
        Self {
            case: case.into(),
            method: method.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub response: ChatResponse,
    pub retries: u32,
}

pub struct LlmClient {
    provider: Arc<dyn ChatProvider>,
    retry: RetryPolicy,
    budget: Option<TokenBudget>,
    clock: Arc<dyn Clock>,
    ledger: UsageLedger,
    costs: CostTable,
}

impl LlmClient {
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        Self {
            provider,
            retry: RetryPolicy::default(),
            budget: None,
            clock: Arc::new(SystemClock::default()),
            ledger: UsageLedger::new(),
            costs: CostTable::openai_defaults(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_budget(mut self, tokens_per_minute: Option<u64>) -> Self {
        self.budget = tokens_per_minute.map(TokenBudget::new);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_costs(mut self, costs: CostTable) -> Self {
        self.costs = costs;
        self
    }

    pub fn with_ledger(mut self, ledger: UsageLedger) -> Self {
        self.ledger = ledger;
        self
    }

    pub fn ledger(&self) -> &UsageLedger {
        &self.ledger
    }

    pub fn costs(&self) -> &CostTable {
        &self.costs
    }

    pub fn complete(
        &self,
        req: &ChatRequest,
        labels: &UsageLabels,
    ) -> Result<Completion, LlmError> {
        req.validate()?;
        if let Some(budget) = &self.budget {
            let estimate = heuristic_count(&req.system) + heuristic_count(&req.user);
            budget.acquire(estimate as u64, self.clock.as_ref());
        }
        let mut retries = 0;
        let response = loop {
            match self.provider.chat(req) {
                Ok(response) => break response,
                Err(e) if e.is_transient() && retries < self.retry.max_retries => {
                    let pause = match &e {
                        LlmError::RateLimited {
                            retry_after_ms: Some(ms),
                        } => Duration::from_millis(*ms),
                        _ => self.retry.delay(retries),
                    };
                    warn!("{e}; retry {} in {:?}", retries + 1, pause);
                    self.clock.sleep(pause);
                    retries += 1;
                }
                Err(e) => return Err(e),
            }
        };
        if let Some(budget) = &self.budget {
            budget.record(response.completion_tokens, self.clock.as_ref());
        }
        let cost_usd = self
            .costs
            .rates(&req.model)
            .map(|r| r.cost(response.prompt_tokens, response.completion_tokens));
        if cost_usd.is_none() {
            debug!("no price for model {}", req.model);
        }
        self.ledger.append(UsageRecord {
            model: req.model.clone(),
            case: labels.case.clone(),
            method: labels.method.clone(),
            prompt_tokens: response.prompt_tokens,
            completion_tokens: response.completion_tokens,
            cost_usd,
        });
        Ok(Completion { response, retries })
    }
}
