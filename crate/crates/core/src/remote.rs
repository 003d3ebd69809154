//! Shared plumbing for the remote encoder and generator backends: retry
//! policy, bearer-token lookup, JSON POSTs with retry classification, and a
//! small bounded-concurrency map for fanning out independent requests.
//!
//! Retries apply only to failures that plausibly heal on their own —
//! transport errors, HTTP 429, and HTTP 5xx. Anything else (auth failures,
//! malformed bodies, contract violations like a wrong embedding width) fails
//! fast so misconfiguration surfaces immediately instead of after five
//! back-offs.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HydeError, Result};

/// Retry schedule for remote calls: up to `max_attempts` tries with
/// exponential backoff starting at `base_delay_ms` and full jitter (each
/// sleep is uniform in `0..=current_delay`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.max_attempts == 0 {
            return Err(HydeError::Config(
                "retry max_attempts must be at least 1".to_string(),
            ));
        }
        Ok(())
    }

    /// Backoff delay before retrying after the given 1-based failed attempt:
    /// `base * 2^(attempt-1)`, capped at 30s, then fully jittered.
    fn jittered_delay(&self, attempt: u32) -> Duration {
        const CAP_MS: u64 = 30_000;
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << (attempt - 1).min(16));
        let cap = exp.min(CAP_MS);
        let sleep_ms = rand::rng().random_range(0..=cap);
        Duration::from_millis(sleep_ms)
    }
}

/// How a single attempt failed, as classified by the caller.
pub(crate) enum RequestError {
    /// Transient (transport error, 429, 5xx): worth another attempt.
    Retryable(String),
    /// Permanent (4xx other than 429, malformed body, contract violation):
    /// abort immediately.
    Fatal(String),
}

/// Run `attempt` until it succeeds, fails fatally, or the retry budget is
/// spent. `what` names the operation for error messages and logs.
pub(crate) fn with_retries<T>(
    policy: &RetryPolicy,
    what: &str,
    mut attempt: impl FnMut() -> std::result::Result<T, RequestError>,
) -> Result<T> {
    policy.validate()?;
    let mut tries = 0u32;
    loop {
        tries += 1;
        match attempt() {
            Ok(value) => return Ok(value),
            Err(RequestError::Fatal(message)) => {
                return Err(HydeError::Remote {
                    attempts: tries,
                    message: format!("{what}: {message}"),
                })
            }
            Err(RequestError::Retryable(message)) => {
                if tries >= policy.max_attempts {
                    return Err(HydeError::Remote {
                        attempts: tries,
                        message: format!("{what}: {message}"),
                    });
                }
                let delay = policy.jittered_delay(tries);
                log::warn!(
                    "{what}: attempt {tries}/{} failed ({message}); retrying in {delay:?}",
                    policy.max_attempts
                );
                std::thread::sleep(delay);
            }
        }
    }
}

/// Bearer token from the named environment variable, if set and non-empty.
/// Secrets are only ever read from the environment, never from config files.
pub(crate) fn bearer_from_env(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|v| !v.is_empty())
}

/// Build the shared blocking HTTP client.
pub(crate) fn http_client() -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .connect_timeout(Duration::from_secs(10))
        .timeout(Duration::from_secs(120))
        .build()
        .map_err(|e| HydeError::Config(format!("failed to build HTTP client: {e}")))
}

/// POST a JSON body and classify the outcome. Success returns the parsed
/// JSON response; transport errors and 429/5xx are retryable, any other
/// non-2xx status (and a non-JSON success body) is fatal.
pub(crate) fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
) -> std::result::Result<serde_json::Value, RequestError> {
    let mut req = client.post(url).json(body);
    if let Some(token) = bearer {
        req = req.bearer_auth(token);
    }
    let resp = req
        .send()
        .map_err(|e| RequestError::Retryable(format!("transport error: {e}")))?;
    let status = resp.status();
    if status.as_u16() == 429 || status.is_server_error() {
        return Err(RequestError::Retryable(format!(
            "HTTP {status}: {}",
            snippet(&resp.text().unwrap_or_default())
        )));
    }
    if !status.is_success() {
        return Err(RequestError::Fatal(format!(
            "HTTP {status}: {}",
            snippet(&resp.text().unwrap_or_default())
        )));
    }
    resp.json::<serde_json::Value>()
        .map_err(|e| RequestError::Fatal(format!("response was not valid JSON: {e}")))
}

fn snippet(body: &str) -> String {
    const MAX: usize = 200;
    let trimmed = body.trim();
    if trimmed.len() <= MAX {
        trimmed.to_string()
    } else {
        let mut end = MAX;
        while !trimmed.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &trimmed[..end])
    }
}

/// Apply `f` to every item with at most `limit` worker threads, preserving
/// input order in the result. Used to bound in-flight remote requests; local
/// CPU-bound work goes through rayon instead.
pub(crate) fn bounded_map<T, R, F>(items: Vec<T>, limit: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, T) -> R + Sync,
{
    let n = items.len();
    if n == 0 {
        return Vec::new();
    }
    let limit = limit.max(1).min(n);
    if limit == 1 {
        return items
            .into_iter()
            .enumerate()
            .map(|(i, t)| f(i, t))
            .collect();
    }
    let queue: Mutex<VecDeque<(usize, T)>> = Mutex::new(items.into_iter().enumerate().collect());
    let slots: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..limit {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue lock").pop_front();
                let Some((i, item)) = next else { break };
                let result = f(i, item);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("slot lock")
                .expect("worker filled slot")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn fast_policy(max_attempts: u32) -> RetryPolicy {
        RetryPolicy {
            max_attempts,
            base_delay_ms: 1,
        }
    }

    #[test]
    fn retries_until_success() {
        let calls = AtomicU32::new(0);
        let out = with_retries(&fast_policy(5), "op", || {
            if calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(RequestError::Retryable("try again".into()))
            } else {
                Ok(7)
            }
        })
        .unwrap();
        assert_eq!(out, 7);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhausts_budget_and_reports_attempts() {
        let calls = AtomicU32::new(0);
        let err = with_retries::<()>(&fast_policy(4), "op", || {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(RequestError::Retryable("still down".into()))
        })
        .unwrap_err();
        assert_eq!(calls.load(Ordering::SeqCst), 4);
        match err {
            HydeError::Remote { attempts, message } => {
                assert_eq!(attempts, 4);
                assert!(message.contains("still down"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn fatal_errors_do_not_retry() {
        let calls = AtomicU32::new(0);
        let err = with_retries::<()>(&fast_policy(5), "op", || {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(RequestError::Fatal("HTTP 400".into()))
        })
        .unwrap_err();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert!(matches!(err, HydeError::Remote { attempts: 1, .. }));
    }

    #[test]
    fn zero_attempts_rejected() {
        let policy = RetryPolicy {
            max_attempts: 0,
            base_delay_ms: 1,
        };
        assert!(matches!(
            with_retries::<()>(&policy, "op", || Ok(())),
            Err(HydeError::Config(_))
        ));
    }

    #[test]
    fn bounded_map_preserves_order() {
        let items: Vec<u32> = (0..37).collect();
        for limit in [1, 2, 4, 64] {
            let out = bounded_map(items.clone(), limit, |i, x| {
                // Stagger finish order so slow-first exposes reordering bugs.
                std::thread::sleep(Duration::from_micros(u64::from(97 - x)));
                (i, x * 2)
            });
            let expected: Vec<(usize, u32)> = (0..37).map(|x| (x as usize, x * 2)).collect();
            assert_eq!(out, expected, "limit={limit}");
        }
    }

    #[test]
    fn bounded_map_empty_input() {
        let out: Vec<u32> = bounded_map(Vec::<u32>::new(), 4, |_, x| x);
        assert!(out.is_empty());
    }

    #[test]
    fn snippet_truncates_on_char_boundary() {
        let long = "é".repeat(300);
        let s = snippet(&long);
        assert!(s.len() <= 204);
        assert!(s.ends_with("..."));
    }
}
