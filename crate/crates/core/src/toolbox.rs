//! The four agent-facing tools.
//!
//! Each tool returns a [`ToolResult`]: the text the agent reads, plus the
//! structured candidates the clarification plugin scores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{Direction, EntityId, EntityRecord, KnowledgeGraph, Term};
use crate::sparql::{self, ResultTable};

pub const DEFAULT_K: usize = 10;
pub const MAX_ROWS_SHOWN: usize = 50;
pub const DESCRIPTION_CHARS: usize = 200;

/// Separator between the hops of a composite (CVT) predicate path.
pub const PATH_SEPARATOR: &str = " / ";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ToolError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub record: EntityRecord,
    pub match_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateCandidate {
    /// Predicate id, or `p1 / p2` for a path through a CVT node.
    pub predicate: String,
    pub sample_tail: Term,
    pub semantic_score: f64,
    pub anchor: EntityId,
    /// `Incoming` when the anchor is the object of the edge.
    pub direction: Direction,
}

impl PredicateCandidate {
    pub fn hops(&self) -> impl Iterator<Item = &str> {
        self.predicate.split(PATH_SEPARATOR)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub observation_text: String,
    pub entity_candidates: Option<Vec<EntityCandidate>>,
    pub predicate_candidates: Option<Vec<PredicateCandidate>>,
    pub suspended: bool,
}

impl ToolResult {
    pub fn text(observation: impl Into<String>) -> Self {
        Self { observation_text: observation.into(), entity_candidates: None, predicate_candidates: None, suspended: false }
    }
}

/// A parsed tool invocation. Names and arities are fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tool", rename_all = "snake_case")]
pub enum ToolCall {
    SearchNodes { name: String },
    SearchGraphPattern { sparql: String, semantic: String },
    ExecuteSparql { sparql: String },
    AskForClarification { text: String },
}

impl ToolCall {
    pub const NAMES: [&'static str; 4] = ["SearchNodes", "SearchGraphPattern", "ExecuteSPARQL", "AskForClarification"];

    /// Builds a call from a tool name and its positional arguments.
    /// Returns `None` for an unknown name or the wrong number of arguments.
    pub fn from_parts(name: &str, mut args: Vec<String>) -> Option<Self> {
        let call = match (name, args.len()) {
            ("SearchNodes", 1) => ToolCall::SearchNodes { name: args.remove(0) },
            ("SearchGraphPattern", 2) => {
                let semantic = args.pop()?;
                ToolCall::SearchGraphPattern { sparql: args.pop()?, semantic }
            }
            ("ExecuteSPARQL", 1) => ToolCall::ExecuteSparql { sparql: args.remove(0) },
            ("AskForClarification", 1) => ToolCall::AskForClarification { text: args.remove(0) },
            _ => return None,
        };
        Some(call)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ToolCall::SearchNodes { .. } => "SearchNodes",
            ToolCall::SearchGraphPattern { .. } => "SearchGraphPattern",
            ToolCall::ExecuteSparql { .. } => "ExecuteSPARQL",
            ToolCall::AskForClarification { .. } => "AskForClarification",
        }
    }

    pub fn args(&self) -> Vec<&str> {
        match self {
            ToolCall::SearchNodes { name } => vec![name],
            ToolCall::SearchGraphPattern { sparql, semantic } => vec![sparql, semantic],
            ToolCall::ExecuteSparql { sparql } => vec![sparql],
            ToolCall::AskForClarification { text } => vec![text],
        }
    }
}

fn quote(arg: &str) -> String {
    let mut out = String::with_capacity(arg.len() + 2);
    out.push('"');
    for c in arg.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Renders in the agent's action syntax, e.g. `SearchNodes("alice walker")`.
impl fmt::Display for ToolCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args().into_iter().map(quote).collect();
        write!(f, "{}({})", self.name(), args.join(", "))
    }
}

/// Relevance of a predicate to the agent's `semantic` description, in [0, 1].
pub trait SemanticScorer: Send + Sync {
    fn score(&self, semantic: &str, predicate: &str) -> f64;
}

/// Token Jaccard between `semantic` and the final segment of each hop of
/// the predicate, split on `.` and `_`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

fn predicate_tokens(predicate: &str) -> BTreeSet<String> {
    predicate
        .split(PATH_SEPARATOR)
        .flat_map(|hop| tokens(hop.rsplit('.').next().unwrap_or(hop)))
        .collect()
}

impl SemanticScorer for LexicalScorer {
    fn score(&self, semantic: &str, predicate: &str) -> f64 {
        let a = tokens(semantic);
        let b = predicate_tokens(predicate);
        let union = a.union(&b).count();
        if union == 0 {
            return 0.0;
        }
        a.intersection(&b).count() as f64 / union as f64
    }
}

fn truncate_chars(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// `m.01 (Name)` for named entities, the bare value otherwise.
pub fn display_term(graph: &KnowledgeGraph, term: &Term) -> String {
    match term {
        Term::Entity(id) => match graph.entity(id) {
            Some(r) if !r.canonical_name.is_empty() && r.canonical_name != id.as_str() => {
                format!("{id} ({})", r.canonical_name)
            }
            _ => id.to_string(),
        },
        Term::Literal(l) => l.value().to_string(),
    }
}

pub fn search_nodes(graph: &KnowledgeGraph, name: &str, k: usize) -> Result<ToolResult, ToolError> {
    if name.trim().is_empty() {
        return Err(ToolError::InvalidArgument("SearchNodes needs a non-empty name".into()));
    }
    let matches = graph.find_entities(name, k);
    if matches.is_empty() {
        return Ok(ToolResult::text("No nodes found."));
    }
    let lines: Vec<String> = matches
        .iter()
        .map(|m| {
            let r = m.record;
            format!(
                "\"{}\" | description: {} | types: {} | id: {}",
                r.label(),
                truncate_chars(&r.description, DESCRIPTION_CHARS),
                r.types.join(", "),
                r.id
            )
        })
        .collect();
    let candidates = matches
        .iter()
        .map(|m| EntityCandidate { record: m.record.clone(), match_score: m.score.clamp(0.0, 1.0) })
        .collect();
    Ok(ToolResult {
        observation_text: lines.join("\n"),
        entity_candidates: Some(candidates),
        predicate_candidates: None,
        suspended: false,
    })
}

/// Every (predicate path, direction, tail) reachable in one hop from
/// `anchor`, expanding outgoing edges into CVT nodes by one more hop.
fn anchor_edges(graph: &KnowledgeGraph, anchor: &EntityId) -> Vec<(String, Direction, Term)> {
    let mut out = Vec::new();
    let mut expanded = BTreeSet::new();
    let Ok(outgoing) = graph.neighbors(anchor, Direction::Outgoing) else {
        return out;
    };
    for (p1, tail) in outgoing {
        let cvt = tail.as_entity().and_then(|id| graph.entity(id)).filter(|r| r.is_cvt);
        match cvt {
            Some(record) => {
                expanded.insert(Term::Entity(record.id.clone()));
                let back = Term::Entity(anchor.clone());
                for (p2, t2) in graph.neighbors(&record.id, Direction::Outgoing).unwrap_or_default() {
                    if t2 != back {
                        out.push((format!("{p1}{PATH_SEPARATOR}{p2}"), Direction::Outgoing, t2));
                    }
                }
            }
            None => out.push((p1, Direction::Outgoing, tail)),
        }
    }
    // Edges back from an expanded CVT node are already covered by its paths.
    for (p, tail) in graph.neighbors(anchor, Direction::Incoming).unwrap_or_default() {
        if !expanded.contains(&tail) {
            out.push((p, Direction::Incoming, tail));
        }
    }
    out
}

fn direction_rank(d: Direction) -> u8 {
    match d {
        Direction::Outgoing => 0,
        _ => 1,
    }
}

pub fn search_graph_pattern(
    graph: &KnowledgeGraph,
    sparql_text: &str,
    semantic: &str,
    k: usize,
    scorer: &dyn SemanticScorer,
) -> ToolResult {
    let query = match sparql::parse(sparql_text) {
        Ok(q) => q,
        Err(e) => return ToolResult::text(format!("Error: {e}")),
    };
    let table = sparql::execute(&query, graph);
    let anchors: BTreeSet<EntityId> = table
        .rows
        .iter()
        .flatten()
        .filter_map(Term::as_entity)
        .filter(|id| graph.entity(id).is_some())
        .cloned()
        .collect();
    if anchors.is_empty() {
        return ToolResult::text("No matching anchor entities.");
    }

    // One entry per predicate: outgoing before incoming, then smallest tail,
    // then smallest anchor.
    let mut best: BTreeMap<String, (Direction, Term, EntityId)> = BTreeMap::new();
    for anchor in &anchors {
        for (pred, dir, tail) in anchor_edges(graph, anchor) {
            let better = match best.get(&pred) {
                None => true,
                Some((d, t, a)) => {
                    (direction_rank(dir), &tail, anchor) < (direction_rank(*d), t, a)
                }
            };
            if better {
                best.insert(pred, (dir, tail, anchor.clone()));
            }
        }
    }
    if best.is_empty() {
        return ToolResult::text("No predicates found.");
    }

    let mut candidates: Vec<PredicateCandidate> = best
        .into_iter()
        .map(|(predicate, (direction, sample_tail, anchor))| PredicateCandidate {
            semantic_score: scorer.score(semantic, &predicate).clamp(0.0, 1.0),
            predicate,
            sample_tail,
            anchor,
            direction,
        })
        .collect();
    candidates.sort_by(|a, b| b.semantic_score.total_cmp(&a.semantic_score).then_with(|| a.predicate.cmp(&b.predicate)));
    candidates.truncate(k);

    let lines: Vec<String> = candidates
        .iter()
        .map(|c| {
            let arrow = if c.direction == Direction::Incoming { "<-" } else { "->" };
            format!("{} {arrow} {}", c.predicate, display_term(graph, &c.sample_tail))
        })
        .collect();
    ToolResult {
        observation_text: lines.join("\n"),
        entity_candidates: None,
        predicate_candidates: Some(candidates),
        suspended: false,
    }
}

/// Renders a result table for the agent: a header, at most
/// [`MAX_ROWS_SHOWN`] rows and the total row count.
pub fn render_table(graph: &KnowledgeGraph, table: &ResultTable) -> String {
    if table.is_count() {
        return format!("count: {}", table.rows[0][0].lexical());
    }
    let mut out = table.columns.iter().map(|c| format!("?{c}")).collect::<Vec<_>>().join("\t");
    for row in table.rows.iter().take(MAX_ROWS_SHOWN) {
        out.push('\n');
        out.push_str(&row.iter().map(|t| display_term(graph, t)).collect::<Vec<_>>().join("\t"));
    }
    if table.rows.len() > MAX_ROWS_SHOWN {
        out.push_str(&format!("\n(showing {MAX_ROWS_SHOWN} of {} rows)", table.rows.len()));
    }
    out.push_str(&format!("\ntotal: {} rows", table.rows.len()));
    out
}

pub fn execute_sparql_tool(graph: &KnowledgeGraph, sparql_text: &str) -> ToolResult {
    match sparql::parse(sparql_text) {
        Ok(query) => ToolResult::text(render_table(graph, &sparql::execute(&query, graph))),
        Err(e) => ToolResult::text(format!("Error: {e}")),
    }
}

pub fn ask_for_clarification(text: &str) -> Result<ToolResult, ToolError> {
    if text.trim().is_empty() {
        return Err(ToolError::InvalidArgument("AskForClarification needs a non-empty request".into()));
    }
    Ok(ToolResult { suspended: true, ..ToolResult::text(text) })
}

/// The tools bound to a graph, with the candidate count and ranker.
#[derive(Clone)]
pub struct Toolbox {
    pub graph: Arc<KnowledgeGraph>,
    pub k: usize,
    pub scorer: Arc<dyn SemanticScorer>,
}

impl Toolbox {
    pub fn new(graph: Arc<KnowledgeGraph>) -> Self {
        Self { graph, k: DEFAULT_K, scorer: Arc::new(LexicalScorer) }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k.max(1);
        self
    }

    pub fn dispatch(&self, call: &ToolCall) -> Result<ToolResult, ToolError> {
        match call {
            ToolCall::SearchNodes { name } => search_nodes(&self.graph, name, self.k),
            ToolCall::SearchGraphPattern { sparql, semantic } => {
                Ok(search_graph_pattern(&self.graph, sparql, semantic, self.k, self.scorer.as_ref()))
            }
            ToolCall::ExecuteSparql { sparql } => Ok(execute_sparql_tool(&self.graph, sparql)),
            ToolCall::AskForClarification { text } => ask_for_clarification(text),
        }
    }
}

impl fmt::Debug for Toolbox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Toolbox").field("k", &self.k).finish_non_exhaustive()
    }
}
