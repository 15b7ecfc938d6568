//! Language model access: prompt templates, top-k candidate generation,
//! retroactive sequence scoring, and Yes/No next-token probability queries.
//!
//! All network effects live here. The [`HttpClient`] speaks the
//! OpenAI-compatible completions protocol with log-probabilities; the
//! [`MockClient`] is a seeded, fully deterministic stand-in so the rest of
//! the pipeline runs offline. Responses can be cached on disk and replayed.

mod cache;
mod http;
mod mock;
mod template;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::CachingTransport;
pub use http::{HttpClient, ReqwestTransport, Transport};
pub use mock::MockClient;
pub use template::{render_context, PromptTemplate};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint capability missing: {message}")]
    Capability { message: String },
    #[error("protocol error: {message}")]
    Protocol { message: String },
    #[error("template error: {0}")]
    Template(String),
    #[error("invalid client configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One generation candidate; rank 1 is the best-scored candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    pub rank: usize,
    pub total_logprob: f64,
}

/// Token-level log-probabilities of one forced continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub text: String,
    pub token_logprobs: Vec<f64>,
    pub total_logprob: f64,
}

impl ScoredSequence {
    pub fn new(text: &str, token_logprobs: Vec<f64>) -> Self {
        let total_logprob = token_logprobs.iter().sum();
        Self {
            text: text.to_string(),
            token_logprobs,
            total_logprob,
        }
    }

    pub fn token_count(&self) -> usize {
        self.token_logprobs.len()
    }
}

/// Connection settings for an HTTP endpoint. The API key is read from the
/// named environment variable, never stored in files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientConfig {
    pub base_url: String,
    pub model_id: String,
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_concurrent: usize,
    pub cache_dir: Option<PathBuf>,
}

impl ClientConfig {
    pub fn new(base_url: &str, model_id: &str) -> Self {
        Self {
            base_url: base_url.to_string(),
            model_id: model_id.to_string(),
            api_key_env: None,
            timeout_secs: 120,
            max_retries: 3,
            max_concurrent: 1,
            cache_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.base_url.is_empty() {
            return Err(LlmError::Config("base-url is empty".into()));
        }
        if self.model_id.is_empty() {
            return Err(LlmError::Config("model-id is empty".into()));
        }
        if self.max_concurrent == 0 {
            return Err(LlmError::Config("max-concurrent must be at least 1".into()));
        }
        Ok(())
    }
}

/// The three queries the pipeline needs from a model.
pub trait LanguageModel {
    fn model_id(&self) -> &str;

    /// Up to `k` candidates per start token, each forced to begin with its
    /// start; ranked by total log-probability descending, ties broken by
    /// text. Raw text is preserved; deduplication happens downstream.
    fn generate_topk(
        &self,
        context: &str,
        k: usize,
        starts: &[&str],
    ) -> Result<Vec<Generation>, LlmError>;

    /// Log-probability of `utterance` as a forced continuation of `context`.
    fn score_sequence(&self, context: &str, utterance: &str) -> Result<ScoredSequence, LlmError>;

    /// Probabilities of the Yes and No answer tokens after `prompt`, each
    /// summed over case and leading-space variants.
    fn yes_no_probability(&self, prompt: &str) -> Result<(f64, f64), LlmError>;
}
