//! Shared retry policy for the remote embedding and chat backends.

use std::time::Duration;

/// Exponential backoff: `base * 2^attempt`, capped. Attempt numbering starts
/// at 0 for the first retry.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay_before_retry(&self, retry_index: u32) -> Duration {
        let scaled = self.base_delay.saturating_mul(2u32.saturating_pow(retry_index));
        scaled.min(self.max_delay)
    }
}

/// Rate limits and transient server errors are retryable; everything else is
/// a terminal failure.
pub fn is_retryable_status(status: u16) -> bool {
    status == 429 || (500..=599).contains(&status)
}

/// Run `op` under the policy, sleeping between attempts. Returns the last
/// error with the attempt count when every try fails. `Err((message, None))`
/// from `op` means a non-retryable failure.
pub fn with_retries<T>(
    policy: &RetryPolicy,
    mut op: impl FnMut() -> Result<T, (String, Option<u16>)>,
) -> Result<T, (u32, String)> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match op() {
            Ok(v) => return Ok(v),
            Err((message, status)) => {
                let retryable = status.map(is_retryable_status).unwrap_or(true);
                if !retryable || attempts >= policy.max_attempts {
                    return Err((attempts, message));
                }
                std::thread::sleep(self_delay(policy, attempts - 1));
            }
        }
    }
}

fn self_delay(policy: &RetryPolicy, retry_index: u32) -> Duration {
    policy.delay_before_retry(retry_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_attempts: 6,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(10),
        };
        let delays: Vec<u64> =
            (0..5).map(|i| p.delay_before_retry(i).as_secs()).collect();
        assert_eq!(delays, [1, 2, 4, 8, 10]);
    }

    #[test]
    fn retryable_statuses() {
        assert!(is_retryable_status(429));
        assert!(is_retryable_status(500));
        assert!(is_retryable_status(503));
        assert!(!is_retryable_status(400));
        assert!(!is_retryable_status(401));
    }

    #[test]
    fn with_retries_counts_attempts() {
        let policy = RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(0),
            max_delay: Duration::from_millis(0),
        };
        let mut calls = 0;
        let result: Result<(), _> = with_retries(&policy, || {
            calls += 1;
            Err(("boom".to_string(), Some(429)))
        });
        let (attempts, message) = result.unwrap_err();
        assert_eq!(attempts, 3);
        assert_eq!(calls, 3);
        assert_eq!(message, "boom");
    }

    #[test]
    fn non_retryable_fails_immediately() {
        let policy = RetryPolicy::default();
        let mut calls = 0;
        let result: Result<(), _> = with_retries(&policy, || {
            calls += 1;
            Err(("denied".to_string(), Some(401)))
        });
        assert_eq!(result.unwrap_err().0, 1);
        assert_eq!(calls, 1);
    }

    #[test]
    fn success_passes_through() {
        let policy = RetryPolicy::default();
        let result = with_retries(&policy, || Ok(7));
        assert_eq!(result.unwrap(), 7);
    }
}
