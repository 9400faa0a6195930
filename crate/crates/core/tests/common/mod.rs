#![allow(dead_code)]

pub mod cases;
pub mod chain;
pub mod grid;
pub mod oracle;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use kgqa_core::ambiguity::{AmbiguityScorer, ClarificationPlugin, Thresholds};
use kgqa_core::dialogue::{PromptSet, RuleBasedUser, SessionConfig, SessionEnv};
use kgqa_core::kg::KnowledgeGraph;
use kgqa_core::llm::{ChatBackend, ChatPrompt, Completion, LlmError, PerplexityProvider, Role, Usage};
use kgqa_core::pipeline::{io, EvalItem};
use kgqa_core::toolbox::Toolbox;

pub const AGENT: &str = "agent";
pub const USER: &str = "user";
pub const PPL: &str = "ppl";
pub const GEN: &str = "gen";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn load_graph(dir: &str) -> Arc<KnowledgeGraph> {
    let d = fixtures().join(dir);
    Arc::new(KnowledgeGraph::load(&d.join("triples.tsv"), &d.join("entities.jsonl")).expect("fixture graph loads"))
}

pub fn main_graph() -> Arc<KnowledgeGraph> {
    load_graph("graph")
}

pub fn alice_graph() -> Arc<KnowledgeGraph> {
    load_graph("alice")
}

pub fn dataset(rel: &str) -> Vec<EvalItem> {
    io::read_jsonl(&fixtures().join(rel)).expect("dataset loads")
}

pub fn env_with(graph: Arc<KnowledgeGraph>, agent: Arc<dyn ChatBackend>, plugin: ClarificationPlugin) -> SessionEnv {
    SessionEnv {
        config: SessionConfig::default(),
        toolbox: Toolbox::new(graph),
        plugin,
        agent,
        prompts: Arc::new(PromptSet::builtin()),
    }
}

pub fn bayesian_env(
    graph: Arc<KnowledgeGraph>,
    agent: Arc<dyn ChatBackend>,
    ppl: Arc<dyn PerplexityProvider>,
) -> SessionEnv {
    env_with(graph, agent, ClarificationPlugin::bayesian(Thresholds::default(), ppl))
}

pub fn scored_env(graph: Arc<KnowledgeGraph>, agent: Arc<dyn ChatBackend>, scorer: Arc<dyn AmbiguityScorer>) -> SessionEnv {
    env_with(graph, agent, ClarificationPlugin::new(Thresholds::default(), scorer))
}

fn completion(text: String, id: &str) -> Completion {
    Completion { text, usage: Usage::default(), backend_id: id.to_string() }
}

/// Chat backend that answers simulated-user prompts with the rule-based
/// user, reading the gold query and request from the prompt.
pub struct RuleUserBackend {
    pub graph: Arc<KnowledgeGraph>,
}

impl ChatBackend for RuleUserBackend {
    fn backend_id(&self) -> &str {
        USER
    }

    fn complete_unchecked(&self, prompt: &ChatPrompt) -> Result<Completion, LlmError> {
        let text = &prompt.turns.last().ok_or_else(|| LlmError::InvalidArgument("empty prompt".into()))?.text;
        let (gold, request) = text
            .strip_prefix("SPARQL: ")
            .and_then(|rest| rest.split_once("\nClarification request: "))
            .ok_or_else(|| LlmError::InvalidArgument("not a user prompt".into()))?;
        Ok(completion(RuleBasedUser::new(self.graph.clone(), gold).answer(request), USER))
    }
}

/// Agent that follows a per-question script but asks for clarification
/// whenever the latest observation carries a hint. Stateless: the script
/// position is the number of earlier non-clarifying agent turns.
pub struct ReactiveAgent {
    scripts: HashMap<String, Vec<String>>,
    asks: AtomicUsize,
}

pub const REACTIVE_ASK: &str = "Action: AskForClarification(\"Which one do you mean?\")";

impl ReactiveAgent {
    pub fn new<Q: Into<String>, S: Into<String>>(scripts: impl IntoIterator<Item = (Q, Vec<S>)>) -> Self {
        Self {
            scripts: scripts.into_iter().map(|(q, s)| (q.into(), s.into_iter().map(Into::into).collect())).collect(),
            asks: AtomicUsize::new(0),
        }
    }

    pub fn asks(&self) -> usize {
        self.asks.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ReactiveAgent {
    fn backend_id(&self) -> &str {
        AGENT
    }

    fn complete_unchecked(&self, prompt: &ChatPrompt) -> Result<Completion, LlmError> {
        let question = prompt
            .turns
            .first()
            .and_then(|m| m.text.strip_prefix("Question: "))
            .ok_or_else(|| LlmError::InvalidArgument("no question".into()))?;
        let script = self.scripts.get(question).ok_or_else(|| LlmError::Provider(format!("no script for {question:?}")))?;
        let last = prompt.turns.last();
        if last.is_some_and(|m| m.role == Role::Tool && m.text.contains("[Ambiguity hint]")) {
            self.asks.fetch_add(1, Ordering::SeqCst);
            return Ok(completion(REACTIVE_ASK.to_string(), AGENT));
        }
        let step = prompt.turns.iter().filter(|m| m.role == Role::Agent && m.text != REACTIVE_ASK).count();
        let next = script.get(step).ok_or_else(|| LlmError::Provider("script exhausted".into()))?;
        Ok(completion(next.clone(), AGENT))
    }
}

pub fn regenerating() -> bool {
    std::env::var("KGQA_REGENERATE").is_ok_and(|v| v == "1")
}
