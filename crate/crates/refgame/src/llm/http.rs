//! OpenAI-compatible completions client with log-probability support, as
//! served by common local inference servers.
//!
//! The wire layer is behind the [`Transport`] trait so responses can be
//! cached, replayed from fixtures, or faked in tests without a socket.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{CachingTransport, ClientConfig, Generation, LanguageModel, LlmError, ScoredSequence};

pub trait Transport: Send + Sync {
    /// POSTs one request body to the completions endpoint and returns the
    /// parsed JSON response.
    fn post_completions(&self, body: &Value) -> Result<Value, LlmError>;
}

enum Attempt {
    Retry(String),
    Fatal(LlmError),
}

pub struct ReqwestTransport {
    url: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff_ms: u64,
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(cfg: &ClientConfig) -> Result<Self, LlmError> {
        let api_key = match &cfg.api_key_env {
            Some(var) => std::env::var(var).ok(),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self {
            url: format!("{}/completions", cfg.base_url.trim_end_matches('/')),
            api_key,
            max_retries: cfg.max_retries,
            backoff_ms: 250,
            client,
        })
    }

    /// Shrinks the retry backoff; for tests against local canned servers.
    pub fn with_backoff_ms(mut self, ms: u64) -> Self {
        self.backoff_ms = ms;
        self
    }

    fn try_once(&self, body: &Value) -> Result<Value, Attempt> {
        let mut request = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.is_success() {
            return serde_json::from_str(&text).map_err(|e| {
                Attempt::Fatal(LlmError::Protocol {
                    message: format!("unparseable response body: {e}"),
                })
            });
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        let n = body.get("n").and_then(Value::as_u64).unwrap_or(1);
        if matches!(status.as_u16(), 400 | 404 | 422) && n > 1 {
            return Err(Attempt::Fatal(LlmError::Capability {
                message: format!(
                    "endpoint rejected n-best generation (HTTP {status}); fall back to repeated \
                     constrained sampling and record the fallback in the run manifest"
                ),
            }));
        }
        Err(Attempt::Fatal(LlmError::Protocol {
            message: format!("HTTP {status}: {}", snippet(&text)),
        }))
    }
}

fn snippet(text: &str) -> &str {
    &text[..text.len().min(200)]
}

impl Transport for ReqwestTransport {
    fn post_completions(&self, body: &Value) -> Result<Value, LlmError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let message = match self.try_once(body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => message,
            };
            if attempts > self.max_retries {
                return Err(LlmError::Transport { attempts, message });
            }
            std::thread::sleep(Duration::from_millis(
                self.backoff_ms << (attempts - 1).min(6),
            ));
        }
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    text: String,
    logprobs: Option<Logprobs>,
}

#[derive(Deserialize)]
struct Logprobs {
    tokens: Option<Vec<String>>,
    token_logprobs: Option<Vec<Option<f64>>>,
    text_offset: Option<Vec<usize>>,
    top_logprobs: Option<Vec<Option<BTreeMap<String, f64>>>>,
}

pub struct HttpClient {
    model_id: String,
    max_new_tokens: usize,
    transport: Box<dyn Transport>,
}

impl HttpClient {
    pub fn new(cfg: &ClientConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let wire: Box<dyn Transport> = Box::new(ReqwestTransport::new(cfg)?);
        let transport: Box<dyn Transport> = match &cfg.cache_dir {
            Some(dir) => Box::new(CachingTransport::new(dir.clone(), Some(wire))?),
            None => wire,
        };
        Ok(Self {
            model_id: cfg.model_id.clone(),
            max_new_tokens: 24,
            transport,
        })
    }

    /// A client over an arbitrary transport; used by tests and fixture tools.
    pub fn from_transport(model_id: &str, transport: Box<dyn Transport>) -> Self {
        Self {
            model_id: model_id.to_string(),
            max_new_tokens: 24,
            transport,
        }
    }

    /// A client that answers purely from a recorded cache directory; any
    /// request without a recorded response is an error.
    pub fn replay(model_id: &str, cache_dir: std::path::PathBuf) -> Result<Self, LlmError> {
        let transport = CachingTransport::new(cache_dir, None)?;
        Ok(Self::from_transport(model_id, Box::new(transport)))
    }

    fn first_choice(response: Value) -> Result<Choice, LlmError> {
        let parsed: CompletionResponse =
            serde_json::from_value(response).map_err(|e| LlmError::Protocol {
                message: format!("malformed completion response: {e}"),
            })?;
        parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::Protocol {
                message: "response carries no choices".into(),
            })
    }

    fn logprobs_of(choice: Choice) -> Result<Logprobs, LlmError> {
        choice.logprobs.ok_or_else(|| LlmError::Capability {
            message:
                "endpoint returned no log-probabilities; a logprobs-capable server is required"
                    .into(),
        })
    }
}

impl LanguageModel for HttpClient {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn generate_topk(
        &self,
        context: &str,
        k: usize,
        starts: &[&str],
    ) -> Result<Vec<Generation>, LlmError> {
        let mut scored: Vec<(String, f64)> = Vec::new();
        for start in starts {
            let body = json!({
                "model": self.model_id,
                "prompt": format!("{context} {start}"),
                "max_tokens": self.max_new_tokens,
                "n": k,
                "best_of": k,
                "temperature": 0.0,
                "logprobs": 0,
                "stop": ["\n"],
            });
            let response = self.transport.post_completions(&body)?;
            let parsed: CompletionResponse =
                serde_json::from_value(response).map_err(|e| LlmError::Protocol {
                    message: format!("malformed generation response: {e}"),
                })?;
            for choice in parsed.choices {
                let continuation = choice.text.split('\n').next().unwrap_or("").to_string();
                let logprobs = Self::logprobs_of(Choice {
                    text: continuation.clone(),
                    logprobs: choice.logprobs,
                })?;
                let total: f64 = logprobs
                    .token_logprobs
                    .unwrap_or_default()
                    .into_iter()
                    .flatten()
                    .sum();
                scored.push((format!("{start}{continuation}"), total));
            }
        }
        scored.sort_by(|(ta, sa), (tb, sb)| sb.total_cmp(sa).then_with(|| ta.cmp(tb)));
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (text, total_logprob))| Generation {
                text,
                rank: i + 1,
                total_logprob,
            })
            .collect())
    }

    fn score_sequence(&self, context: &str, utterance: &str) -> Result<ScoredSequence, LlmError> {
        // Echo mode scores the whole prompt; tokens at or past the context
        // boundary belong to the utterance.
        let body = json!({
            "model": self.model_id,
            "prompt": format!("{context} {utterance}"),
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
        });
        let response = self.transport.post_completions(&body)?;
        let logprobs = Self::logprobs_of(Self::first_choice(response)?)?;
        let (tokens, values, offsets) = match (
            logprobs.tokens,
            logprobs.token_logprobs,
            logprobs.text_offset,
        ) {
            (Some(t), Some(v), Some(o)) if t.len() == v.len() && t.len() == o.len() => (t, v, o),
            _ => {
                return Err(LlmError::Protocol {
                    message: "echo response lacks aligned tokens/token_logprobs/text_offset".into(),
                })
            }
        };
        let boundary = context.len();
        let mut scored = Vec::new();
        for i in 0..tokens.len() {
            if offsets[i] >= boundary {
                match values[i] {
                    Some(lp) => scored.push(lp),
                    None => {
                        return Err(LlmError::Protocol {
                            message: format!(
                                "missing log-probability for scored token '{}'",
                                tokens[i]
                            ),
                        })
                    }
                }
            }
        }
        if scored.is_empty() {
            return Err(LlmError::Protocol {
                message: "no tokens fell on the utterance side of the context boundary".into(),
            });
        }
        Ok(ScoredSequence::new(utterance, scored))
    }

    fn yes_no_probability(&self, prompt: &str) -> Result<(f64, f64), LlmError> {
        let body = json!({
            "model": self.model_id,
            "prompt": prompt,
            "max_tokens": 1,
            "logprobs": 20,
        });
        let response = self.transport.post_completions(&body)?;
        let logprobs = Self::logprobs_of(Self::first_choice(response)?)?;
        let top = logprobs
            .top_logprobs
            .and_then(|mut v| if v.is_empty() { None } else { v.remove(0) })
            .ok_or_else(|| LlmError::Protocol {
                message: "response carries no top_logprobs for the answer token".into(),
            })?;
        let mut p_yes = 0.0;
        let mut p_no = 0.0;
        for (token, lp) in &top {
            let word = token.trim();
            if word.eq_ignore_ascii_case("yes") {
                p_yes += lp.exp();
            } else if word.eq_ignore_ascii_case("no") {
                p_no += lp.exp();
            }
        }
        if p_yes == 0.0 && p_no == 0.0 {
            return Err(LlmError::Protocol {
                message: "neither a Yes nor a No variant appeared among the top next tokens; \
                          increase the logprobs top-n"
                    .into(),
            });
        }
        Ok((p_yes, p_no))
    }
}
