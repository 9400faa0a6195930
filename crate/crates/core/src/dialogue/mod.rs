//! The agent loop.
//!
//! A session alternates between asking the agent model for an action and
//! executing it. Tool observations pass through the clarification plugin
//! first. `AskForClarification` suspends the session until a response is
//! supplied, either by a [`Clarifier`] in [`run_session`] or by the caller
//! through [`Session::resume`].

mod action;
pub mod history;
pub mod prompts;
pub mod user;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambiguity::{AmbiguityKind, ClarificationPlugin};
use crate::llm::{complete, ChatBackend, ChatPrompt, Role};
use crate::sparql::{self, ResultTable};
use crate::toolbox::{ToolCall, Toolbox};

pub use action::{parse_action, Action};
pub use history::{render_action, render_turn, serialize_history};
pub use prompts::PromptSet;
pub use user::{simulate_user, Clarifier, FixedClarifier, LlmUser, RuleBasedUser};

pub const DEFAULT_TURN_BUDGET: usize = 10;
pub const MAX_PARSE_ATTEMPTS: usize = 3;
pub const CORRECTIVE_OBSERVATION: &str = "Invalid action format; use Action: Tool(...) or Done: ...";
pub const REASON_BUDGET: &str = "budget";
pub const REASON_PARSE_EXHAUSTED: &str = "action-parse-exhausted";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DialogueError {
    #[error("session is {0}, expected {1}")]
    State(SessionStatus, SessionStatus),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub action: Action,
    pub observation: Option<String>,
    pub clarification: Option<String>,
    /// Kind of the last ambiguity hint added to the observation.
    #[serde(default)]
    pub hint: Option<AmbiguityKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    AwaitingClarification,
    Finished,
    Failed,
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionStatus::Running => "running",
            SessionStatus::AwaitingClarification => "awaiting_clarification",
            SessionStatus::Finished => "finished",
            SessionStatus::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub question: String,
    pub history: Vec<Turn>,
    pub status: SessionStatus,
    pub final_sparql: Option<String>,
    pub answers: Option<ResultTable>,
    pub turn_budget: usize,
    pub clarification_count_entity: usize,
    pub clarification_count_intent: usize,
    pub failure: Option<String>,
}

impl SessionState {
    pub fn new(question: impl Into<String>, turn_budget: usize) -> Self {
        Self {
            question: question.into(),
            history: Vec::new(),
            status: SessionStatus::Running,
            final_sparql: None,
            answers: None,
            turn_budget: turn_budget.max(1),
            clarification_count_entity: 0,
            clarification_count_intent: 0,
            failure: None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.status, SessionStatus::Finished | SessionStatus::Failed)
    }

    pub fn clarification_rounds(&self) -> usize {
        self.clarification_count_entity + self.clarification_count_intent
    }

    fn fail(&mut self, reason: impl Into<String>) {
        self.status = SessionStatus::Failed;
        self.failure = Some(reason.into());
    }

    /// The pending `AskForClarification` text, if suspended.
    pub fn pending_request(&self) -> Option<&str> {
        if self.status != SessionStatus::AwaitingClarification {
            return None;
        }
        match self.history.last().map(|t| &t.action) {
            Some(Action::ToolCall { call: ToolCall::AskForClarification { text }, .. }) => Some(text),
            _ => None,
        }
    }

    /// Records the clarification on the pending turn and resumes. The
    /// response is attributed to the kind of the most recent hint, or to
    /// intent when no hint has been shown.
    pub fn resume(&mut self, clarification: &str) -> Result<AmbiguityKind, DialogueError> {
        if self.status != SessionStatus::AwaitingClarification {
            return Err(DialogueError::State(self.status, SessionStatus::AwaitingClarification));
        }
        if clarification.trim().is_empty() {
            return Err(DialogueError::InvalidArgument("empty clarification".into()));
        }
        let kind = self.history.iter().rev().find_map(|t| t.hint).unwrap_or(AmbiguityKind::Intent);
        let turn = self.history.last_mut().expect("awaiting sessions have a pending turn");
        turn.clarification = Some(clarification.to_string());
        match kind {
            AmbiguityKind::Entity => self.clarification_count_entity += 1,
            AmbiguityKind::Intent => self.clarification_count_intent += 1,
        }
        self.status = SessionStatus::Running;
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Thought,
    ToolCall,
    Observation,
    Hint,
    ClarificationRequest,
    ClarificationResponse,
    FinalAnswer,
    Error,
}

impl EventKind {
    pub fn is_terminal(self) -> bool {
        matches!(self, EventKind::FinalAnswer | EventKind::Error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    /// Milliseconds since the Unix epoch.
    pub at_ms: i64,
    pub kind: EventKind,
    pub payload: BTreeMap<String, String>,
}

/// Called for every event as it is appended.
pub type EventListener = Arc<dyn Fn(&SessionEvent) + Send + Sync>;

/// One ambiguity score computed during a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub turn: usize,
    pub kind: AmbiguityKind,
    pub score: f64,
    pub threshold: f64,
    pub needs_clarification: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub session: SessionState,
    pub golden_sparql: Option<String>,
    pub events: Vec<SessionEvent>,
    #[serde(default)]
    pub scores: Vec<ScoreRecord>,
}

impl Transcript {
    /// Copy with event timestamps zeroed, for comparing runs.
    pub fn without_timestamps(&self) -> Self {
        let mut t = self.clone();
        for e in &mut t.events {
            e.at_ms = 0;
        }
        t
    }

    /// (request, response) pairs of the clarification exchanges.
    pub fn clarification_pairs(&self) -> Vec<(String, String)> {
        self.session
            .history
            .iter()
            .filter_map(|t| match (&t.action, &t.clarification) {
                (Action::ToolCall { call: ToolCall::AskForClarification { text }, .. }, Some(c)) => {
                    Some((text.clone(), c.clone()))
                }
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub turn_budget: usize,
    pub max_parse_attempts: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { turn_budget: DEFAULT_TURN_BUDGET, max_parse_attempts: MAX_PARSE_ATTEMPTS }
    }
}

/// Everything a session needs besides its question.
#[derive(Clone)]
pub struct SessionEnv {
    pub config: SessionConfig,
    pub toolbox: Toolbox,
    pub plugin: ClarificationPlugin,
    pub agent: Arc<dyn ChatBackend>,
    pub prompts: Arc<PromptSet>,
}

impl fmt::Debug for SessionEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionEnv")
            .field("config", &self.config)
            .field("plugin", &self.plugin)
            .field("agent", &self.agent.backend_id())
            .finish_non_exhaustive()
    }
}

/// Builds the agent prompt: instruction, exemplars, the question, then the
/// history as alternating agent / tool / user messages.
pub fn build_prompt(state: &SessionState, prompts: &PromptSet) -> ChatPrompt {
    let mut prompt = ChatPrompt {
        system: prompts.qa_instruction.clone(),
        exemplars: prompts.exemplar_messages(),
        turns: Vec::new(),
    };
    prompt.push(Role::User, format!("Question: {}", state.question));
    for turn in &state.history {
        prompt.push(Role::Agent, render_action(&turn.action));
        if let Some(o) = &turn.observation {
            prompt.push(Role::Tool, history::field(history::OBSERVATION, o));
        }
        if let Some(c) = &turn.clarification {
            prompt.push(Role::User, history::field(history::CLARIFICATION, c));
        }
    }
    prompt
}

fn payload<const N: usize>(fields: [(&str, String); N]) -> BTreeMap<String, String> {
    fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn now_ms() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

/// A running session with its event log.
pub struct Session<'e> {
    pub state: SessionState,
    env: &'e SessionEnv,
    events: Vec<SessionEvent>,
    scores: Vec<ScoreRecord>,
    listener: Option<EventListener>,
}

impl<'e> Session<'e> {
    pub fn new(question: impl Into<String>, env: &'e SessionEnv) -> Self {
        Self {
            state: SessionState::new(question, env.config.turn_budget),
            env,
            events: Vec::new(),
            scores: Vec::new(),
            listener: None,
        }
    }

    pub fn with_listener(mut self, listener: EventListener) -> Self {
        self.listener = Some(listener);
        self
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    fn emit(&mut self, kind: EventKind, payload: BTreeMap<String, String>) {
        let event = SessionEvent { seq: self.events.len() as u64 + 1, at_ms: now_ms(), kind, payload };
        if let Some(l) = &self.listener {
            l(&event);
        }
        self.events.push(event);
    }

    fn fail(&mut self, reason: impl Into<String>) {
        let reason = reason.into();
        self.state.fail(reason.clone());
        self.emit(EventKind::Error, payload([("reason", reason)]));
    }

    fn push_turn(&mut self, turn: Turn) {
        self.state.history.push(turn);
    }

    fn budget_left(&self) -> bool {
        self.state.history.len() < self.state.turn_budget
    }

    /// Asks the agent for its next action. Malformed replies get a
    /// corrective observation and another attempt; after the last attempt,
    /// or on a backend error or exhausted budget, the session fails and
    /// `None` is returned.
    pub fn next_action(&mut self) -> Option<Action> {
        if self.state.status != SessionStatus::Running {
            return None;
        }
        for attempt in 1..=self.env.config.max_parse_attempts.max(1) {
            if !self.budget_left() {
                self.fail(REASON_BUDGET);
                return None;
            }
            let prompt = build_prompt(&self.state, &self.env.prompts);
            let completion = match complete(&prompt, self.env.agent.as_ref()) {
                Ok(c) => c,
                Err(e) => {
                    self.fail(format!("backend: {e}"));
                    return None;
                }
            };
            let action = parse_action(&completion.text);
            if let Action::Malformed { raw } = &action {
                self.emit(
                    EventKind::Observation,
                    payload([("text", CORRECTIVE_OBSERVATION.to_string()), ("raw", raw.clone())]),
                );
                self.push_turn(Turn {
                    action,
                    observation: Some(CORRECTIVE_OBSERVATION.to_string()),
                    clarification: None,
                    hint: None,
                });
                if attempt == self.env.config.max_parse_attempts.max(1) {
                    self.fail(REASON_PARSE_EXHAUSTED);
                    return None;
                }
                continue;
            }
            return Some(action);
        }
        None
    }

    /// Executes one action and appends its turn.
    pub fn step(&mut self, action: Action) {
        if self.state.status != SessionStatus::Running {
            return;
        }
        if !self.budget_left() {
            self.fail(REASON_BUDGET);
            return;
        }
        if let Some(t) = action.thought() {
            self.emit(EventKind::Thought, payload([("text", t.to_string())]));
        }
        match &action {
            Action::Malformed { .. } => {
                self.push_turn(Turn {
                    action,
                    observation: Some(CORRECTIVE_OBSERVATION.to_string()),
                    clarification: None,
                    hint: None,
                });
            }
            Action::Done { sparql, .. } => {
                let sparql = sparql.clone();
                match sparql::parse(&sparql) {
                    Ok(query) => {
                        let table = sparql::execute(&query, &self.env.toolbox.graph);
                        let answers: Vec<String> = table.answer_set().into_iter().collect();
                        self.push_turn(Turn { action, observation: None, clarification: None, hint: None });
                        self.state.final_sparql = Some(sparql.clone());
                        self.state.answers = Some(table);
                        self.state.status = SessionStatus::Finished;
                        self.emit(
                            EventKind::FinalAnswer,
                            payload([("sparql", sparql), ("answers", answers.join("; "))]),
                        );
                    }
                    Err(e) => {
                        let text = format!("Error: {e}");
                        self.emit(EventKind::Observation, payload([("text", text.clone())]));
                        self.push_turn(Turn { action, observation: Some(text), clarification: None, hint: None });
                    }
                }
            }
            Action::ToolCall { call, .. } => {
                let call = call.clone();
                self.emit(
                    EventKind::ToolCall,
                    payload([("tool", call.name().to_string()), ("call", call.to_string())]),
                );
                let result = match self.env.toolbox.dispatch(&call) {
                    Ok(r) => r,
                    Err(e) => {
                        let text = format!("Error: {e}");
                        self.emit(EventKind::Observation, payload([("text", text.clone())]));
                        self.push_turn(Turn { action, observation: Some(text), clarification: None, hint: None });
                        return;
                    }
                };
                if result.suspended {
                    self.emit(EventKind::ClarificationRequest, payload([("text", result.observation_text.clone())]));
                    self.push_turn(Turn { action, observation: None, clarification: None, hint: None });
                    self.state.status = SessionStatus::AwaitingClarification;
                    return;
                }
                let turn_index = self.state.history.len();
                let decorated =
                    self.env.plugin.decorate_observation(result, &self.state.question, &self.env.toolbox.graph);
                let mut fields = payload([("text", decorated.result.observation_text.clone())]);
                if !decorated.errors.is_empty() {
                    fields.insert("plugin_error".into(), decorated.errors.join("; "));
                }
                self.emit(EventKind::Observation, fields);
                for r in &decorated.reports {
                    self.scores.push(ScoreRecord {
                        turn: turn_index,
                        kind: r.kind,
                        score: r.score,
                        threshold: r.threshold,
                        needs_clarification: r.needs_clarification,
                    });
                }
                for r in decorated.reports.iter().filter(|r| r.needs_clarification) {
                    self.emit(
                        EventKind::Hint,
                        payload([
                            ("kind", r.kind.to_string()),
                            ("score", format!("{:.3}", r.score)),
                            ("threshold", r.threshold.to_string()),
                            ("candidates", r.labels().collect::<Vec<_>>().join("; ")),
                            ("text", r.hint_text.trim_start().to_string()),
                        ]),
                    );
                }
                let hint = decorated.last_hint();
                self.push_turn(Turn { action, observation: Some(decorated.result.observation_text), clarification: None, hint });
            }
        }
    }

    /// Supplies the response to a pending clarification request.
    pub fn resume(&mut self, clarification: &str) -> Result<AmbiguityKind, DialogueError> {
        let kind = self.state.resume(clarification)?;
        self.emit(
            EventKind::ClarificationResponse,
            payload([("text", clarification.to_string()), ("attributed_to", kind.to_string())]),
        );
        Ok(kind)
    }

    /// Drives the loop until the session finishes or fails, sending each
    /// clarification request to `clarifier`.
    pub fn run(&mut self, clarifier: &mut dyn Clarifier) {
        loop {
            match self.state.status {
                SessionStatus::Finished | SessionStatus::Failed => return,
                SessionStatus::AwaitingClarification => {
                    let request = self.state.pending_request().unwrap_or_default().to_string();
                    match clarifier.respond(&request) {
                        Ok(text) if !text.trim().is_empty() => {
                            self.resume(&text).expect("session is awaiting clarification");
                        }
                        Ok(_) => self.fail("clarifier: empty response"),
                        Err(e) => self.fail(format!("clarifier: {e}")),
                    }
                }
                SessionStatus::Running => {
                    if !self.budget_left() {
                        self.fail(REASON_BUDGET);
                        return;
                    }
                    if let Some(action) = self.next_action() {
                        self.step(action);
                    }
                }
            }
        }
    }

    pub fn into_transcript(self, golden_sparql: Option<String>) -> Transcript {
        Transcript { session: self.state, golden_sparql, events: self.events, scores: self.scores }
    }
}

/// Runs one question to completion.
pub fn run_session(
    question: &str,
    env: &SessionEnv,
    clarifier: &mut dyn Clarifier,
    golden_sparql: Option<String>,
    listener: Option<EventListener>,
) -> Transcript {
    let mut session = Session::new(question, env);
    if let Some(l) = listener {
        session = session.with_listener(l);
    }
    session.run(clarifier);
    session.into_transcript(golden_sparql)
}
