//! OpenAI-compatible HTTP backend.
//!
//! Chat goes to `POST {base}/chat/completions` at temperature 0. Perplexity
//! uses `POST {base}/completions` with `echo` and `logprobs`, scoring only the
//! continuation tokens.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{check_perplexity, ChatBackend, ChatPrompt, Completion, LlmError, PerplexityProvider, Role, Usage};

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Model used for perplexity; defaults to `model`.
    pub ppl_model: Option<String>,
    pub max_retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub context_budget: usize,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            ppl_model: None,
            max_retries: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(120),
            max_in_flight: 4,
            context_budget: super::DEFAULT_CONTEXT_BUDGET,
        }
    }
}

/// Counting gate capping concurrent requests.
#[derive(Debug)]
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut n = self.in_flight.lock().expect("gate poisoned");
        while *n >= self.cap {
            n = self.freed.wait(n).expect("gate poisoned");
        }
        *n += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("gate poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Gate { in_flight: Mutex::new(0), freed: Condvar::new(), cap: config.max_in_flight.max(1) };
        Self { config, agent, gate }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    /// POSTs JSON, retrying transport failures, 429 and 5xx with
    /// exponential backoff. Other 4xx responses fail immediately.
    fn post(&self, path: &str, body: &Value) -> Result<Value, LlmError> {
        let _slot = self.gate.enter();
        let url = self.url(path);
        let mut last = String::new();
        let attempts = self.config.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.backoff * 2u32.pow(attempt - 1);
                debug!(attempt, ?wait, "retrying model request");
                thread::sleep(wait);
            }
            let mut req = self.agent.post(&url).header("Content-Type", "application/json");
            if let Some(key) = &self.config.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            match req.send(body.to_string()) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    match status {
                        200..=299 => {
                            return serde_json::from_str(&text)
                                .map_err(|e| LlmError::Provider(format!("bad response json: {e}")));
                        }
                        429 | 500..=599 => {
                            warn!(status, "transient model error");
                            last = format!("status {status}: {text}");
                        }
                        _ => return Err(LlmError::Rejected { status, body: text }),
                    }
                }
                Err(e) => {
                    warn!(error = %e, "model request failed");
                    last = e.to_string();
                }
            }
        }
        Err(LlmError::Transport { attempts, message: last })
    }
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::Agent => "assistant",
        Role::Tool | Role::User => "user",
    }
}

pub(crate) fn chat_body(model: &str, prompt: &ChatPrompt) -> Value {
    let mut messages = vec![json!({"role": "system", "content": prompt.system})];
    messages.extend(
        prompt
            .exemplars
            .iter()
            .chain(&prompt.turns)
            .map(|m| json!({"role": role_name(m.role), "content": m.text})),
    );
    json!({ "model": model, "messages": messages, "temperature": 0 })
}

impl ChatBackend for RemoteBackend {
    fn backend_id(&self) -> &str {
        &self.config.model
    }

    fn context_budget(&self) -> usize {
        self.config.context_budget
    }

    fn complete_unchecked(&self, prompt: &ChatPrompt) -> Result<Completion, LlmError> {
        let resp = self.post("chat/completions", &chat_body(&self.config.model, prompt))?;
        let text = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Provider("response has no choices[0].message.content".into()))?
            .to_string();
        let usage = Usage {
            prompt_tokens: resp.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            completion_tokens: resp.pointer("/usage/completion_tokens").and_then(Value::as_u64).unwrap_or(0),
        };
        Ok(Completion { text, usage, backend_id: self.config.model.clone() })
    }
}

impl PerplexityProvider for RemoteBackend {
    fn perplexity(&self, context: &str, continuation: &str) -> Result<f64, LlmError> {
        if continuation.is_empty() {
            return Err(LlmError::InvalidArgument("empty continuation".into()));
        }
        let model = self.config.ppl_model.as_deref().unwrap_or(&self.config.model);
        let body = json!({
            "model": model,
            "prompt": format!("{context}{continuation}"),
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
            "temperature": 0,
        });
        let resp = self.post("completions", &body)?;
        let logprobs = resp
            .pointer("/choices/0/logprobs")
            .ok_or_else(|| LlmError::Provider("response has no logprobs".into()))?;
        continuation_perplexity(logprobs, context.chars().count())
    }
}

/// Perplexity over the echoed tokens that start at or after `offset`.
pub(crate) fn continuation_perplexity(logprobs: &Value, offset: usize) -> Result<f64, LlmError> {
    let lps = logprobs.get("token_logprobs").and_then(Value::as_array);
    let offsets = logprobs.get("text_offset").and_then(Value::as_array);
    let (Some(lps), Some(offsets)) = (lps, offsets) else {
        return Err(LlmError::Provider("logprobs lack token_logprobs/text_offset".into()));
    };
    let scored: Vec<f64> = lps
        .iter()
        .zip(offsets)
        .filter(|(_, off)| off.as_u64().is_some_and(|o| o as usize >= offset))
        .filter_map(|(lp, _)| lp.as_f64())
        .collect();
    if scored.is_empty() {
        return Err(LlmError::Provider("no continuation tokens were scored".into()));
    }
    let mean_nll = -scored.iter().sum::<f64>() / scored.len() as f64;
    check_perplexity(mean_nll.exp())
}
