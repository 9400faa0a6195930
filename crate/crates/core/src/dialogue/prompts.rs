//! Prompt assets: instructions and exemplar dialogues.
//!
//! A prompt directory holds `qa_instruction.txt`, `qa_exemplars.txt`,
//! `user_instruction.txt` and `gen_instruction.txt`. Exemplar dialogues are
//! separated by a line of `=====`; each message starts with a
//! `### agent|tool|user` header line.

use std::fs;
use std::io;
use std::path::Path;

use crate::llm::{Message, Role};

pub const QA_INSTRUCTION: &str = "qa_instruction.txt";
pub const QA_EXEMPLARS: &str = "qa_exemplars.txt";
pub const USER_INSTRUCTION: &str = "user_instruction.txt";
pub const GEN_INSTRUCTION: &str = "gen_instruction.txt";

const DIALOGUE_SEPARATOR: &str = "=====";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub qa_instruction: String,
    pub exemplars: Vec<Vec<Message>>,
    pub user_instruction: String,
    pub gen_instruction: String,
    /// How many exemplar dialogues go into the agent prompt.
    pub max_exemplars: usize,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    /// The prompts shipped with the crate.
    pub fn builtin() -> Self {
        Self {
            qa_instruction: include_str!("../../prompts/qa_instruction.txt").trim_end().to_string(),
            exemplars: parse_exemplars(include_str!("../../prompts/qa_exemplars.txt"))
                .expect("bundled exemplars are well formed"),
            user_instruction: include_str!("../../prompts/user_instruction.txt").trim_end().to_string(),
            gen_instruction: include_str!("../../prompts/gen_instruction.txt").trim_end().to_string(),
            max_exemplars: 1,
        }
    }

    pub fn load(dir: &Path) -> io::Result<Self> {
        let read = |name: &str| fs::read_to_string(dir.join(name)).map(|s| s.trim_end().to_string());
        let exemplars = parse_exemplars(&read(QA_EXEMPLARS)?)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{QA_EXEMPLARS}: {e}")))?;
        Ok(Self {
            qa_instruction: read(QA_INSTRUCTION)?,
            exemplars,
            user_instruction: read(USER_INSTRUCTION)?,
            gen_instruction: read(GEN_INSTRUCTION)?,
            max_exemplars: 1,
        })
    }

    pub fn with_max_exemplars(mut self, n: usize) -> Self {
        self.max_exemplars = n;
        self
    }

    /// Exemplar messages for the agent prompt, flattened.
    pub fn exemplar_messages(&self) -> Vec<Message> {
        self.exemplars.iter().take(self.max_exemplars).flatten().cloned().collect()
    }
}

pub fn parse_exemplars(text: &str) -> Result<Vec<Vec<Message>>, String> {
    let mut dialogues = Vec::new();
    let mut current: Vec<Message> = Vec::new();
    let mut body: Option<(Role, Vec<&str>)> = None;
    let flush = |body: &mut Option<(Role, Vec<&str>)>, current: &mut Vec<Message>| {
        if let Some((role, lines)) = body.take() {
            current.push(Message::new(role, lines.join("\n").trim().to_string()));
        }
    };
    for (n, line) in text.lines().enumerate() {
        if line.trim() == DIALOGUE_SEPARATOR {
            flush(&mut body, &mut current);
            if !current.is_empty() {
                dialogues.push(std::mem::take(&mut current));
            }
        } else if let Some(role) = line.strip_prefix("### ") {
            flush(&mut body, &mut current);
            let role = match role.trim() {
                "agent" => Role::Agent,
                "tool" => Role::Tool,
                "user" => Role::User,
                other => return Err(format!("line {}: unknown role {other:?}", n + 1)),
            };
            body = Some((role, Vec::new()));
        } else if let Some((_, lines)) = body.as_mut() {
            lines.push(line);
        } else if !line.trim().is_empty() {
            return Err(format!("line {}: text outside a message", n + 1));
        }
    }
    flush(&mut body, &mut current);
    if !current.is_empty() {
        dialogues.push(current);
    }
    Ok(dialogues)
}
