//! Exponential backoff shared by the embedding and chat paths.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub initial_delay_ms: u64,
    pub multiplier: f64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_delay_ms: 500,
            multiplier: 2.0,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            initial_delay_ms: 0,
            ..Self::default()
        }
    }

    /// Delay before attempt `attempt + 1` (attempts are 1-based).
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        let ms = (self.initial_delay_ms as f64 * factor).min(self.max_delay_ms as f64);
        Duration::from_millis(ms as u64)
    }
}

/// Errors that may or may not be worth another attempt.
pub trait Retryable {
    fn is_retryable(&self) -> bool;
}

/// Final error from [`with_backoff`], with the number of attempts made.
#[derive(Debug)]
pub struct Exhausted<E> {
    pub attempts: u32,
    pub last: E,
}

/// Runs `op` until it succeeds, fails with a non-retryable error, or the
/// policy's attempts are used up. Returns the value and the attempt count.
pub fn with_backoff<T, E, F>(policy: &RetryPolicy, mut op: F) -> Result<(T, u32), Exhausted<E>>
where
    E: Retryable,
    F: FnMut() -> Result<T, E>,
{
    let max = policy.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        match op() {
            Ok(v) => return Ok((v, attempt)),
            Err(e) if e.is_retryable() && attempt < max => {
                log::debug!("attempt {attempt}/{max} failed; backing off");
                let delay = policy.delay_after(attempt);
                if !delay.is_zero() {
                    thread::sleep(delay);
                }
                attempt += 1;
            }
            Err(last) => {
                return Err(Exhausted {
                    attempts: attempt,
                    last,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Flaky(bool);

    impl Retryable for Flaky {
        fn is_retryable(&self) -> bool {
            self.0
        }
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let mut calls = 0;
        let res: Result<((), u32), _> = with_backoff(&RetryPolicy::no_delay(5), || {
            calls += 1;
            Err(Flaky(true))
        });
        assert_eq!(res.unwrap_err().attempts, 5);
        assert_eq!(calls, 5);
    }

    #[test]
    fn succeeds_on_last_attempt() {
        let mut calls = 0;
        let res = with_backoff(&RetryPolicy::no_delay(5), || {
            calls += 1;
            if calls < 5 {
                Err(Flaky(true))
            } else {
                Ok(calls)
            }
        });
        assert_eq!(res.unwrap(), (5, 5));
    }

    #[test]
    fn fatal_errors_stop_immediately() {
        let mut calls = 0;
        let res: Result<((), u32), _> = with_backoff(&RetryPolicy::no_delay(5), || {
            calls += 1;
            Err(Flaky(false))
        });
        assert_eq!(res.unwrap_err().attempts, 1);
        assert_eq!(calls, 1);
    }

    #[test]
    fn delays_grow_and_cap() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_after(1), Duration::from_millis(500));
        assert_eq!(p.delay_after(2), Duration::from_millis(1000));
        assert_eq!(p.delay_after(20), Duration::from_millis(30_000));
    }
}
