//! Uniform access to chat-completion backends.
//!
//! A [`Gateway`] wraps a [`ChatBackend`] with request validation, bounded
//! in-flight concurrency and retries with capped exponential backoff. Two
//! backends ship with the crate: an OpenAI-compatible HTTP client and a
//! scripted mock keyed on request digests.

pub mod mock;
pub mod openai;
pub mod parse;
pub mod templates;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use mock::{MockBackend, MockEntry, MockFailure};
pub use openai::{EndpointConfig, OpenAiBackend, API_KEY_ENV};
pub use parse::{
    parse_index_array, parse_index_array_lenient, parse_yes_no, step_numbers, strip_step_markers,
    ParseError,
};
pub use templates::{render_prompt, task_instruction, PromptTemplate, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    /// Multimodal model: sees video media.
    Mllm,
    /// Text-only model.
    Llm,
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelRole::Mllm => "mllm",
            ModelRole::Llm => "llm",
        })
    }
}

/// A video, or a time span of one, attached to a message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaRef {
    pub video_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_s: Option<(f64, f64)>,
}

impl fmt::Display for MediaRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.span_s {
            Some((start, end)) => write!(f, "<media {}@{start:.3}-{end:.3}>", self.video_id),
            None => write!(f, "<media {}>", self.video_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub media: Vec<MediaRef>,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            text: text.into(),
            media: Vec::new(),
        }
    }

    pub fn with_media(mut self, media: Vec<MediaRef>) -> Self {
        self.media = media;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_role: ModelRole,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(model_role: ModelRole, message: Message) -> Self {
        Self {
            model_role,
            messages: vec![message],
            temperature: 0.0,
            max_tokens: 1024,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_tokens must be > 0".into(),
            ));
        }
        if self.model_role == ModelRole::Llm && self.messages.iter().any(|m| !m.media.is_empty()) {
            return Err(GatewayError::InvalidRequest(
                "media references require the mllm role".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the request's canonical JSON.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(canonical))
    }

    /// Plain-text view of the request used for mock rule matching:
    /// `role: text` per message, media markers appended.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&m.role);
            out.push_str(": ");
            out.push_str(&m.text);
            for media in &m.media {
                out.push(' ');
                out.push_str(&media.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Failure reported by a backend for one attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendFailure {
    /// Worth retrying: rate limits, server errors, dropped connections.
    Transient {
        reason: String,
        timeout: bool,
    },
    Auth(String),
    /// Not worth retrying.
    Permanent(String),
}

pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, BackendFailure>;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend unavailable after {attempts} attempt(s): {reason}")]
    BackendUnavailable { attempts: u32, reason: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
}

/// Capped exponential backoff: delay before retry `k` (0-based) is
/// `min(initial * 2^k, max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.min(63)).unwrap_or(u64::MAX);
        let ms = self
            .initial_backoff_ms
            .saturating_mul(factor)
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

struct Semaphore {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.freed.notify_one();
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    retry: RetryPolicy,
    limiter: Semaphore,
    sleeper: Sleeper,
    calls: AtomicUsize,
}

impl Gateway {
    pub fn new(backend: Box<dyn ChatBackend>, retry: RetryPolicy, max_in_flight: usize) -> Self {
        Self {
            backend,
            retry,
            limiter: Semaphore::new(max_in_flight),
            sleeper: Arc::new(std::thread::sleep),
            calls: AtomicUsize::new(0),
        }
    }

    /// Replaces the function used to wait between attempts.
    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    /// Backend attempts made so far, retries included.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let _permit = self.limiter.acquire();
        let cap = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.backend.send(request) {
                Ok(text) => return Ok(text),
                Err(BackendFailure::Auth(reason)) => return Err(GatewayError::Auth(reason)),
                Err(BackendFailure::Permanent(reason)) => {
                    return Err(GatewayError::BackendUnavailable {
                        attempts: attempt,
                        reason,
                    })
                }
                Err(BackendFailure::Transient { reason, timeout }) => {
                    if attempt >= cap {
                        return Err(if timeout {
                            GatewayError::Timeout { attempts: attempt }
                        } else {
                            GatewayError::BackendUnavailable {
                                attempts: attempt,
                                reason,
                            }
                        });
                    }
                    log::debug!("attempt {attempt} failed ({reason}); retrying");
                    (self.sleeper)(self.retry.delay(attempt - 1));
                }
            }
        }
    }
}
