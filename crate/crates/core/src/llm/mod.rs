//! Chat-completion access behind a small backend trait.
//!
//! Backends:
//! - [`HttpChatBackend`]: chat-completions wire format over HTTP.
//! - [`ReplayBackend`]: record / replay / strict-replay over a [`ReplayStore`].
//! - [`FnBackend`]: any closure, mostly for tests and scripted fixtures.
//!
//! The two LLM output formats the pipeline depends on are parsed in
//! [`parse`].

mod http;
pub mod parse;
mod replay;

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::HttpChatBackend;
pub use parse::{parse_impact_output, parse_ranking_output, ParseWarning, ParsedImpact, RankedIds, Selection};
pub use replay::{ReplayBackend, ReplayMode, ReplayStore};

pub const DEFAULT_MODEL: &str = "llama3-405b";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("no recorded response for request digest {digest}")]
    ReplayMiss { digest: String },
    #[error("cannot decode backend response: {0}")]
    Decode(String),
    #[error("credential environment variable `{0}` is not set")]
    MissingCredential(String),
    #[error("replay store {path}: {message}")]
    Store { path: String, message: String },
    #[error("{0}")]
    Config(String),
}

impl LlmError {
    /// Transport failures, 429 and 5xx are worth retrying; everything else is not.
    pub fn is_transient(&self) -> bool {
        match self {
            LlmError::Transport(_) => true,
            LlmError::Status { status, .. } => *status == 429 || (500..600).contains(status),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub seed: u64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 0.0,
            seed: 16,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub prompt: String,
    pub params: SamplingParams,
    /// Index of a repeated run of the same prompt. Part of the digest so
    /// repeated runs can be recorded separately; never sent to the backend.
    #[serde(default)]
    pub repetition: u32,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, prompt: impl Into<String>) -> Self {
        ChatRequest {
            model: model.into(),
            prompt: prompt.into(),
            params: SamplingParams::default(),
            repetition: 0,
        }
    }

    pub fn with_params(mut self, params: SamplingParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_repetition(mut self, repetition: u32) -> Self {
        self.repetition = repetition;
        self
    }

    /// Hex SHA-256 over model, every sampling parameter, the repetition
    /// index and the prompt.
    pub fn digest(&self) -> String {
        let p = &self.params;
        let mut h = Sha256::new();
        h.update(format!(
            "model={}\ntemperature={:?}\nseed={}\nfrequency_penalty={:?}\npresence_penalty={:?}\nrepetition={}\n\n",
            self.model, p.temperature, p.seed, p.frequency_penalty, p.presence_penalty, self.repetition
        ));
        h.update(self.prompt.as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    /// Wall-clock latency of a live call; `None` for replayed responses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

impl ChatResponse {
    pub fn text(text: impl Into<String>) -> Self {
        ChatResponse {
            text: text.into(),
            ..Default::default()
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
}

/// Adapts a closure into a backend.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, LlmError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (self.0)(request)
    }
}

/// Exponential backoff over transient errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            factor: 2,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::ZERO,
            factor: 2,
        }
    }

    /// Runs `op` until it succeeds, fails permanently, or attempts run out.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, LlmError>) -> Result<T, LlmError> {
        let mut delay = self.base_delay;
        let mut attempt = 1;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() && attempt < self.max_attempts.max(1) => {
                    log::warn!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    thread::sleep(delay);
                    delay *= self.factor;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}
