use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Fake clock for tests. `sleep` advances time instantly and is recorded.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
    sleeps: Mutex<Vec<Duration>>,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().expect("clock poisoned") += d;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().expect("clock poisoned").clone()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().expect("clock poisoned")
    }

    fn sleep(&self, d: Duration) {
        self.sleeps.lock().expect("clock poisoned").push(d);
        self.advance(d);
    }
}

const WINDOW: Duration = Duration::from_secs(60);

/// Sliding one-minute token budget shared by all workers.
#[derive(Debug)]
pub struct TokenBudget {
    per_minute: u64,
    spent: Mutex<VecDeque<(Duration, u64)>>,
}

impl TokenBudget {
    pub fn new(per_minute: u64) -> Self {
        assert!(per_minute > 0, "token budget must be positive");
        Self {
            per_minute,
            spent: Mutex::new(VecDeque::new()),
        }
    }

    pub fn per_minute(&self) -> u64 {
        self.per_minute
    }

    /// Blocks until `tokens` fit in the current window, then books them.
    /// A request larger than the whole budget waits for an empty window and
    /// then goes through alone.
    pub fn acquire(&self, tokens: u64, clock: &dyn Clock) {
        loop {
            let wait = {
                let mut spent = self.spent.lock().expect("budget poisoned");
                let now = clock.now();
                while spent.front().is_some_and(|(t, _)| now >= *t + WINDOW) {
                    spent.pop_front();
                }
                let used: u64 = spent.iter().map(|(_, n)| n).sum();
                if spent.is_empty() || used + tokens <= self.per_minute {
                    spent.push_back((now, tokens));
                    return;
                }
                // free the oldest entry, then re-check
                spent[0].0 + WINDOW - now
            };
            clock.sleep(wait);
        }
    }

    /// Books tokens already spent (e.g. completion output) without waiting.
    pub fn record(&self, tokens: u64, clock: &dyn Clock) {
        if tokens > 0 {
            let mut spent = self.spent.lock().expect("budget poisoned");
            spent.push_back((clock.now(), tokens));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delays_once_budget_is_spent() {
        let clock = ManualClock::new();
        let budget = TokenBudget::new(1000);
        budget.acquire(600, &clock);
        clock.advance(Duration::from_secs(10));
        budget.acquire(300, &clock);
        assert!(clock.sleeps().is_empty());
        budget.acquire(200, &clock);
        // waits until the first booking (t=0) leaves the window
        assert_eq!(clock.sleeps(), [Duration::from_secs(50)]);
        assert_eq!(clock.now(), Duration::from_secs(60));
    }

    #[test]
    fn oversize_request_runs_alone() {
        let clock = ManualClock::new();
        let budget = TokenBudget::new(100);
        budget.acquire(500, &clock);
        assert!(clock.sleeps().is_empty());
        budget.acquire(1, &clock);
        assert_eq!(clock.sleeps(), [Duration::from_secs(60)]);
    }
}
