//! Text form of the interaction history.
//!
//! Each turn is written as marker lines:
//!
//! ```text
//! Thought: <t>
//! Action: Tool("arg")        | Done: <sparql> | Invalid action: <raw>
//! Observation: <o>
//! Clarification: <c>
//! ```
//!
//! Continuation lines of multi-line payloads are indented by two spaces, so
//! every line is either a marker or a continuation and the encoding can be
//! decoded unambiguously.

use serde::{Deserialize, Serialize};

use super::{Action, Turn};

pub const THOUGHT: &str = "Thought: ";
pub const ACTION: &str = "Action: ";
pub const DONE: &str = "Done: ";
pub const INVALID: &str = "Invalid action: ";
pub const OBSERVATION: &str = "Observation: ";
pub const CLARIFICATION: &str = "Clarification: ";

const INDENT: &str = "  ";

/// `marker + payload`, indenting the payload's continuation lines.
pub fn field(marker: &str, payload: &str) -> String {
    let mut out = String::from(marker);
    for (i, line) in payload.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
            out.push_str(INDENT);
        }
        out.push_str(line);
    }
    out
}

/// The agent's part of a turn: optional thought plus the action line.
pub fn render_action(action: &Action) -> String {
    let mut parts = Vec::new();
    if let Some(t) = action.thought() {
        parts.push(field(THOUGHT, t));
    }
    parts.push(match action {
        Action::ToolCall { call, .. } => field(ACTION, &call.to_string()),
        Action::Done { sparql, .. } => field(DONE, sparql),
        Action::Malformed { raw } => field(INVALID, raw),
    });
    parts.join("\n")
}

pub fn render_turn(turn: &Turn) -> String {
    let mut out = render_action(&turn.action);
    if let Some(o) = &turn.observation {
        out.push('\n');
        out.push_str(&field(OBSERVATION, o));
    }
    if let Some(c) = &turn.clarification {
        out.push('\n');
        out.push_str(&field(CLARIFICATION, c));
    }
    out
}

pub fn serialize_history(turns: &[Turn]) -> String {
    turns.iter().map(render_turn).collect::<Vec<_>>().join("\n")
}

/// One decoded turn, fields as raw payload text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTurn {
    pub thought: Option<String>,
    /// The action marker (`Action: `, `Done: ` or `Invalid action: `) and payload.
    pub action: Option<(String, String)>,
    pub observation: Option<String>,
    pub clarification: Option<String>,
}

/// Inverse of [`serialize_history`] at the text level.
pub fn decode_history(text: &str) -> Result<Vec<RawTurn>, String> {
    #[derive(Clone, Copy)]
    enum Slot {
        Thought,
        Action,
        Observation,
        Clarification,
    }
    let mut turns: Vec<RawTurn> = Vec::new();
    let mut slot: Option<Slot> = None;
    if text.is_empty() {
        return Ok(turns);
    }
    for (n, line) in text.split('\n').enumerate() {
        if let Some(cont) = line.strip_prefix(INDENT) {
            let cur = turns.last_mut().ok_or_else(|| format!("line {}: continuation before any marker", n + 1))?;
            let target = match slot {
                Some(Slot::Thought) => cur.thought.as_mut(),
                Some(Slot::Action) => cur.action.as_mut().map(|(_, p)| p),
                Some(Slot::Observation) => cur.observation.as_mut(),
                Some(Slot::Clarification) => cur.clarification.as_mut(),
                None => None,
            }
            .ok_or_else(|| format!("line {}: dangling continuation", n + 1))?;
            target.push('\n');
            target.push_str(cont);
            continue;
        }
        let starts_turn = |t: &RawTurn| t.action.is_some();
        if let Some(p) = line.strip_prefix(THOUGHT) {
            if turns.last().is_none_or(starts_turn) {
                turns.push(RawTurn::default());
            }
            let cur = turns.last_mut().expect("just pushed");
            if cur.thought.is_some() {
                return Err(format!("line {}: second thought in a turn", n + 1));
            }
            cur.thought = Some(p.to_string());
            slot = Some(Slot::Thought);
        } else if let Some(marker) = [ACTION, DONE, INVALID].into_iter().find(|m| line.starts_with(m)) {
            if turns.last().is_none_or(starts_turn) {
                turns.push(RawTurn::default());
            }
            let cur = turns.last_mut().expect("just pushed");
            cur.action = Some((marker.to_string(), line[marker.len()..].to_string()));
            slot = Some(Slot::Action);
        } else if let Some(p) = line.strip_prefix(OBSERVATION) {
            let cur = turns.last_mut().filter(|t| t.action.is_some() && t.observation.is_none() && t.clarification.is_none());
            cur.ok_or_else(|| format!("line {}: misplaced observation", n + 1))?.observation = Some(p.to_string());
            slot = Some(Slot::Observation);
        } else if let Some(p) = line.strip_prefix(CLARIFICATION) {
            let cur = turns.last_mut().filter(|t| t.action.is_some() && t.clarification.is_none());
            cur.ok_or_else(|| format!("line {}: misplaced clarification", n + 1))?.clarification = Some(p.to_string());
            slot = Some(Slot::Clarification);
        } else {
            return Err(format!("line {}: unrecognized line {line:?}", n + 1));
        }
    }
    if turns.iter().any(|t| t.action.is_none()) {
        return Err("turn without an action".into());
    }
    Ok(turns)
}
