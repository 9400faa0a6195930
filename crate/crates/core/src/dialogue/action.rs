//! Agent action grammar.
//!
//! ```text
//! Thought: <free text, may span lines>     (optional)
//! Action: Tool("arg", "arg")               | Done: <sparql, rest of the text>
//! ```

use serde::{Deserialize, Serialize};

use crate::toolbox::ToolCall;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    ToolCall { thought: Option<String>, call: ToolCall },
    Done { thought: Option<String>, sparql: String },
    Malformed { raw: String },
}

impl Action {
    pub fn thought(&self) -> Option<&str> {
        match self {
            Action::ToolCall { thought, .. } | Action::Done { thought, .. } => thought.as_deref(),
            Action::Malformed { .. } => None,
        }
    }

    pub fn is_clarification_request(&self) -> bool {
        matches!(self, Action::ToolCall { call: ToolCall::AskForClarification { .. }, .. })
    }
}

const THOUGHT: &str = "Thought:";
const ACTION: &str = "Action:";
const DONE: &str = "Done:";

fn malformed(text: &str) -> Action {
    Action::Malformed { raw: text.to_string() }
}

/// Parses a completion into an action. Never fails: anything outside the
/// grammar becomes [`Action::Malformed`] holding the raw text.
pub fn parse_action(text: &str) -> Action {
    let lines: Vec<&str> = text.lines().collect();
    let mut thought: Vec<String> = Vec::new();
    let mut in_thought = false;
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i].trim_end();
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix(THOUGHT) {
            thought.push(rest.trim().to_string());
            in_thought = true;
        } else if let Some(rest) = trimmed.strip_prefix(ACTION) {
            if lines[i + 1..].iter().any(|l| !l.trim().is_empty()) {
                return malformed(text);
            }
            let thought = join_thought(thought);
            return match parse_call(rest.trim()) {
                Some(call) => Action::ToolCall { thought, call },
                None => malformed(text),
            };
        } else if let Some(rest) = trimmed.strip_prefix(DONE) {
            let tail = &lines[i + 1..];
            if tail.iter().any(|l| {
                let l = l.trim_start();
                l.starts_with(ACTION) || l.starts_with(DONE) || l.starts_with(THOUGHT)
            }) {
                return malformed(text);
            }
            let mut sparql = rest.trim().to_string();
            for l in tail {
                sparql.push('\n');
                sparql.push_str(l);
            }
            let sparql = sparql.trim().to_string();
            if sparql.is_empty() {
                return malformed(text);
            }
            return Action::Done { thought: join_thought(thought), sparql };
        } else if in_thought {
            thought.push(line.to_string());
        } else if !trimmed.is_empty() {
            return malformed(text);
        }
        i += 1;
    }
    malformed(text)
}

fn join_thought(parts: Vec<String>) -> Option<String> {
    let joined = parts.join("\n").trim().to_string();
    (!joined.is_empty()).then_some(joined)
}

/// `Name("a", "b")` with backslash escapes inside the quotes.
fn parse_call(s: &str) -> Option<ToolCall> {
    let open = s.find('(')?;
    let name = s[..open].trim();
    let body = s[open + 1..].strip_suffix(')')?;
    let mut args = Vec::new();
    let mut chars = body.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        match chars.next() {
            None if args.is_empty() => break,
            Some('"') => {}
            _ => return None,
        }
        let mut arg = String::new();
        loop {
            match chars.next()? {
                '"' => break,
                '\\' => match chars.next()? {
                    'n' => arg.push('\n'),
                    't' => arg.push('\t'),
                    c => arg.push(c),
                },
                c => arg.push(c),
            }
        }
        args.push(arg);
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        match chars.next() {
            None => break,
            Some(',') => continue,
            Some(_) => return None,
        }
    }
    ToolCall::from_parts(name, args)
}
