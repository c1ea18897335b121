//! Backend traits, retry policy and batched embedding fetches.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::task::Task;
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
}

impl BackendError {
    /// Transport failures, rate limiting and server errors are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { code, .. } => *code == 429 || *code >= 500,
            BackendError::Protocol(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

/// Where a call sits in a workflow. Real backends ignore it; the mock uses it
/// to derive deterministic answers.
#[derive(Debug, Clone, Copy)]
pub struct CallContext<'a> {
    pub task: &'a Task,
    pub agent_index: usize,
    pub type_label: &'a str,
    pub persona_id: Option<&'a str>,
    /// Position of this agent among earlier agents with the same type label.
    pub replica_index: usize,
    pub round: u32,
    pub call_index: usize,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, ctx: &CallContext<'_>, request: &ChatRequest) -> Result<String, BackendError>;
}

pub trait EmbeddingBackend: Send + Sync {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;

    /// Largest batch accepted in one request.
    fn max_batch(&self) -> usize {
        usize::MAX
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay: Duration::ZERO,
        }
    }

    /// Runs `op` until it succeeds, fails with a non-retryable error, or the
    /// retry budget is spent. Sleeps `base · 2^attempt` between attempts.
    /// Returns the result and the number of attempts made.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, BackendError>) -> (Result<T, BackendError>, u32) {
        let mut attempt = 0;
        loop {
            let result = op();
            attempt += 1;
            match result {
                Err(e) if e.is_retryable() && attempt <= self.max_retries => {
                    let delay = self.base_delay.saturating_mul(1 << (attempt - 1).min(16));
                    log::debug!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                }
                other => return (other, attempt),
            }
        }
    }
}

/// Embeds `texts`, splitting into chunks of the backend's batch limit.
/// Order is preserved and every vector must share one dimension.
pub fn fetch_embeddings(
    texts: &[String],
    backend: &dyn EmbeddingBackend,
    retry: &RetryPolicy,
) -> Result<Vec<Vec<f64>>, HarnessError> {
    if texts.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let chunk = backend.max_batch().max(1);
    let mut out = Vec::with_capacity(texts.len());
    for batch in texts.chunks(chunk) {
        let (result, _) = retry.run(|| backend.embed_batch(batch));
        let vectors = result?;
        if vectors.len() != batch.len() {
            return Err(HarnessError::Backend(BackendError::Protocol(format!(
                "requested {} embeddings, received {}",
                batch.len(),
                vectors.len()
            ))));
        }
        out.extend(vectors);
    }
    let dim = out[0].len();
    if let Some((index, v)) = out.iter().enumerate().find(|(_, v)| v.len() != dim) {
        return Err(HarnessError::DimensionMismatch {
            index,
            expected: dim,
            found: v.len(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn retry_stops_after_budget() {
        let calls = AtomicU32::new(0);
        let (res, attempts) = RetryPolicy::no_delay(3).run(|| -> Result<(), _> {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(BackendError::Transport("down".into()))
        });
        assert!(res.is_err());
        assert_eq!(attempts, 4);
        assert_eq!(calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn retry_recovers_and_skips_fatal() {
        let calls = AtomicU32::new(0);
        let (res, attempts) = RetryPolicy::no_delay(3).run(|| {
            if calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(BackendError::Status {
                    code: 503,
                    body: String::new(),
                })
            } else {
                Ok(7)
            }
        });
        assert_eq!(res, Ok(7));
        assert_eq!(attempts, 3);

        let (res, attempts) = RetryPolicy::no_delay(3).run(|| -> Result<(), _> {
            Err(BackendError::Status {
                code: 401,
                body: "no".into(),
            })
        });
        assert!(res.is_err());
        assert_eq!(attempts, 1);
    }

    struct Ragged;

    impl EmbeddingBackend for Ragged {
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
            Ok(texts.iter().map(|t| vec![1.0; t.len()]).collect())
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let texts = vec!["ab".to_string(), "ab".into(), "abc".into()];
        let err = fetch_embeddings(&texts, &Ragged, &RetryPolicy::no_delay(0)).unwrap_err();
        assert!(matches!(
            err,
            HarnessError::DimensionMismatch {
                index: 2,
                expected: 2,
                found: 3
            }
        ));
    }
}
