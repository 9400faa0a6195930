//! Language-model backends.
//!
//! Two capabilities are used: chat completion (the QA agent, the simulated
//! user and question regeneration) and perplexity (the ambiguity plugin).
//! Each has a remote implementation, a cassette-backed replay used by tests
//! and batch runs, and deterministic local stand-ins.

mod cassette;
mod mock;
mod remote;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, CassetteKind, CassetteRecord, CassetteWriter, Recorder, ReplayBackend};
pub use mock::{MockPerplexity, ScriptedPerplexity, SequenceBackend};
pub use remote::{RemoteBackend, RemoteConfig};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("prompt of {size} chars exceeds the {budget}-char context budget")]
    BudgetExceeded { size: usize, budget: usize },
    #[error("no cassette entry for key {0}")]
    CassetteMiss(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("backend returned status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider error: {0}")]
    Provider(String),
    #[error("cassette io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Agent,
    Tool,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self { role, text: text.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatPrompt {
    pub system: String,
    pub exemplars: Vec<Message>,
    pub turns: Vec<Message>,
}

impl ChatPrompt {
    /// Character count of everything that is sent to the model.
    pub fn serialized_len(&self) -> usize {
        self.system.chars().count()
            + self.exemplars.iter().chain(&self.turns).map(|m| m.text.chars().count()).sum::<usize>()
    }

    /// Appends a turn, merging it into the previous one when both are agent
    /// turns so the conversation never has two agent messages in a row.
    pub fn push(&mut self, role: Role, text: impl Into<String>) {
        let text = text.into();
        match self.turns.last_mut() {
            Some(last) if last.role == Role::Agent && role == Role::Agent => {
                last.text.push('\n');
                last.text.push_str(&text);
            }
            _ => self.turns.push(Message { role, text }),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    pub backend_id: String,
}

pub trait ChatBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    /// Context budget in characters.
    fn context_budget(&self) -> usize {
        DEFAULT_CONTEXT_BUDGET
    }

    fn complete_unchecked(&self, prompt: &ChatPrompt) -> Result<Completion, LlmError>;
}

pub const DEFAULT_CONTEXT_BUDGET: usize = 400_000;

/// Runs a chat completion after checking the prompt against the backend's
/// context budget. Over-budget prompts fail without contacting the backend.
pub fn complete(prompt: &ChatPrompt, backend: &dyn ChatBackend) -> Result<Completion, LlmError> {
    let size = prompt.serialized_len();
    let budget = backend.context_budget();
    if size > budget {
        return Err(LlmError::BudgetExceeded { size, budget });
    }
    let completion = backend.complete_unchecked(prompt)?;
    if completion.text.trim().is_empty() {
        return Err(LlmError::Provider("empty completion".into()));
    }
    Ok(completion)
}

/// Perplexity of `continuation` given `context`. Always positive.
pub trait PerplexityProvider: Send + Sync {
    fn perplexity(&self, context: &str, continuation: &str) -> Result<f64, LlmError>;
}

pub(crate) fn check_perplexity(value: f64) -> Result<f64, LlmError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(LlmError::Provider(format!("perplexity must be positive, got {value}")))
    }
}

#[derive(Serialize)]
struct PplRequest<'a> {
    context: &'a str,
    continuation: &'a str,
}

/// Stable cassette key: SHA-256 over the backend id and the request
/// rendered as JSON with sorted object keys.
pub fn cassette_key(backend_id: &str, request: &serde_json::Value) -> String {
    // serde_json's default map is ordered, so this rendering is canonical.
    let canonical = serde_json::to_string(request).expect("json values always serialize");
    let mut hasher = Sha256::new();
    hasher.update(backend_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(canonical.as_bytes());
    hex::encode(hasher.finalize())
}

pub fn chat_request_json(prompt: &ChatPrompt) -> serde_json::Value {
    serde_json::to_value(prompt).expect("prompts always serialize")
}

pub fn ppl_request_json(context: &str, continuation: &str) -> serde_json::Value {
    serde_json::to_value(PplRequest { context, continuation }).expect("requests always serialize")
}

/// Rough token count for backends that do not report usage.
pub(crate) fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
