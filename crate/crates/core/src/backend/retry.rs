use std::time::Duration;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};

/// Retries for transient backend failures, with exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { retries: 2, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    /// Same retry count, no sleeping. Used with the scripted backend.
    pub fn immediate() -> Self {
        RetryPolicy { base_delay: Duration::ZERO, ..Default::default() }
    }

    /// Delay before retry number `attempt` (0-based): base, 2x base, 4x base...
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(2u32.saturating_pow(attempt))
    }
}

pub fn complete_with_retry(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
    policy: RetryPolicy,
) -> Result<ChatResponse, BackendError> {
    let mut attempt = 0;
    loop {
        match backend.complete(request) {
            Ok(resp) => return Ok(resp),
            Err(e) if e.is_retryable() && attempt < policy.retries => {
                tracing::debug!(backend = %backend.id(), attempt, error = %e, "retrying chat completion");
                std::thread::sleep(policy.delay(attempt));
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}
