use serde::{Deserialize, Serialize};
use std::time::Duration;

/// Bounded retries with exponential backoff.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff_ms: 1000,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        Self {
            attempts,
            initial_backoff_ms: 0,
        }
    }

    /// Run `op` until it succeeds or the attempts are spent. On failure returns
    /// the number of attempts made and the last error message.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, String>) -> Result<T, (u32, String)> {
        let attempts = self.attempts.max(1);
        let mut backoff = Duration::from_millis(self.initial_backoff_ms);
        let mut last = String::new();
        for i in 0..attempts {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::warn!("attempt {}/{} failed: {e}", i + 1, attempts);
                    last = e;
                    if i + 1 < attempts && !backoff.is_zero() {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err((attempts, last))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stops_after_configured_attempts() {
        let mut calls = 0;
        let r: Result<(), _> = RetryPolicy::immediate(3).run(|| {
            calls += 1;
            Err("down".to_string())
        });
        assert_eq!(r.unwrap_err(), (3, "down".to_string()));
        assert_eq!(calls, 3);
    }

    #[test]
    fn returns_first_success() {
        let mut calls = 0;
        let r = RetryPolicy::immediate(3).run(|| {
            calls += 1;
            if calls < 2 {
                Err("flaky".to_string())
            } else {
                Ok(calls)
            }
        });
        assert_eq!(r.unwrap(), 2);
    }
}
