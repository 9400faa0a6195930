//! Evaluation over a question set, threshold sweeps and construction of the
//! disambiguated dataset.

pub mod io;
mod unamb;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::ambiguity::Thresholds;
use crate::dialogue::{run_session, Clarifier, FixedClarifier, LlmUser, RuleBasedUser, SessionEnv, SessionStatus, Transcript};
use crate::kg::KnowledgeGraph;
use crate::llm::{ChatBackend, LlmError};
use crate::sparql;

pub use unamb::{build_unambiguous_item, dataset_stats, gen_prompt, DatasetStats, UnAmbItem, STATS_HEADER};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid item: {0}")]
    InvalidItem(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {reason}")]
    Format { path: String, line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "1-hop")]
    OneHop,
    #[serde(rename = "2-hop")]
    TwoHop,
    Conj,
    Compo,
    Compa,
    Super,
}

impl Category {
    pub const ALL: [Category; 6] =
        [Category::OneHop, Category::TwoHop, Category::Conj, Category::Compo, Category::Compa, Category::Super];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::OneHop => "1-hop",
            Category::TwoHop => "2-hop",
            Category::Conj => "Conj",
            Category::Compo => "Compo",
            Category::Compa => "Compa",
            Category::Super => "Super",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub question: String,
    #[serde(rename = "sparql")]
    pub golden_sparql: String,
    pub category: Category,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rhits1: f64,
    pub em: f64,
}

/// Set-based answer metrics. RHits@1 is the chance that one predicted answer
/// drawn uniformly at random is correct, which is the precision.
pub fn score_item(predicted: &BTreeSet<String>, gold: &BTreeSet<String>) -> Result<ItemScore, PipelineError> {
    if gold.is_empty() {
        return Err(PipelineError::InvalidItem("gold answer set is empty".into()));
    }
    let hits = predicted.intersection(gold).count() as f64;
    let precision = if predicted.is_empty() { 0.0 } else { hits / predicted.len() as f64 };
    let recall = hits / gold.len() as f64;
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    let em = if predicted == gold { 1.0 } else { 0.0 };
    Ok(ItemScore { precision, recall, f1, rhits1: precision, em })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub category: Category,
    pub f1: f64,
    pub rhits1: f64,
    pub em: f64,
    pub entity_clarifications: usize,
    pub intent_clarifications: usize,
    /// Why the item scored zero without a prediction, if it did.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub count: usize,
    pub f1: f64,
    pub rhits1: f64,
    pub em: f64,
}

impl Averages {
    fn of<'a>(items: impl IntoIterator<Item = &'a ItemResult>) -> Self {
        let mut a = Averages::default();
        for r in items {
            a.count += 1;
            a.f1 += r.f1;
            a.rhits1 += r.rhits1;
            a.em += r.em;
        }
        if a.count > 0 {
            let n = a.count as f64;
            a.f1 /= n;
            a.rhits1 /= n;
            a.em /= n;
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_item: Vec<ItemResult>,
    pub per_category: BTreeMap<Category, Averages>,
    pub overall: Averages,
    pub mean_entity_clarifications: f64,
    pub mean_intent_clarifications: f64,
    pub failures: Vec<(String, String)>,
}

impl MetricsReport {
    /// Aggregates per-item results, sorted by id.
    pub fn from_items(mut per_item: Vec<ItemResult>) -> Self {
        per_item.sort_by(|a, b| a.id.cmp(&b.id));
        let mut per_category = BTreeMap::new();
        for c in Category::ALL {
            let a = Averages::of(per_item.iter().filter(|r| r.category == c));
            if a.count > 0 {
                per_category.insert(c, a);
            }
        }
        let n = per_item.len().max(1) as f64;
        Self {
            overall: Averages::of(&per_item),
            per_category,
            mean_entity_clarifications: per_item.iter().map(|r| r.entity_clarifications as f64).sum::<f64>() / n,
            mean_intent_clarifications: per_item.iter().map(|r| r.intent_clarifications as f64).sum::<f64>() / n,
            failures: per_item.iter().filter_map(|r| r.failure.clone().map(|f| (r.id.clone(), f))).collect(),
            per_item,
        }
    }

    pub fn mean_clarification_rounds(&self) -> f64 {
        self.mean_entity_clarifications + self.mean_intent_clarifications
    }
}

/// Who answers clarification requests during batch runs. Every item gets a
/// fresh simulator that knows its gold query.
#[derive(Clone)]
pub enum UserSource {
    Llm { backend: Arc<dyn ChatBackend>, instruction: String },
    RuleBased(Arc<KnowledgeGraph>),
    Fixed(String),
}

impl UserSource {
    pub fn for_item(&self, golden_sparql: &str) -> Box<dyn Clarifier> {
        match self {
            UserSource::Llm { backend, instruction } => Box::new(LlmUser {
                backend: backend.clone(),
                instruction: instruction.clone(),
                golden_sparql: golden_sparql.to_string(),
            }),
            UserSource::RuleBased(graph) => Box::new(RuleBasedUser::new(graph.clone(), golden_sparql)),
            UserSource::Fixed(text) => Box::new(FixedClarifier(text.clone())),
        }
    }
}

impl fmt::Debug for UserSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UserSource::Llm { backend, .. } => write!(f, "Llm({})", backend.backend_id()),
            UserSource::RuleBased(_) => f.write_str("RuleBased"),
            UserSource::Fixed(t) => write!(f, "Fixed({t:?})"),
        }
    }
}

/// One evaluated item with its full transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemTranscript {
    pub id: String,
    pub category: Category,
    pub question: String,
    pub transcript: Transcript,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub report: MetricsReport,
    pub transcripts: Vec<ItemTranscript>,
}

fn evaluate_one(item: &EvalItem, env: &SessionEnv, users: &UserSource) -> (ItemResult, ItemTranscript) {
    let graph = &env.toolbox.graph;
    let mut clarifier = users.for_item(&item.golden_sparql);
    let transcript = run_session(&item.question, env, clarifier.as_mut(), Some(item.golden_sparql.clone()), None);
    let state = &transcript.session;

    let gold = sparql::parse(&item.golden_sparql)
        .map_err(|e| format!("gold query: {e}"))
        .map(|q| sparql::execute(&q, graph).answer_set());
    let predicted = match (&state.status, &state.answers) {
        (SessionStatus::Finished, Some(table)) => table.answer_set(),
        _ => BTreeSet::new(),
    };
    let mut failure = state.failure.clone().map(|f| format!("session failed: {f}"));
    let score = gold.and_then(|g| score_item(&predicted, &g).map_err(|e| e.to_string()));
    let score = score.unwrap_or_else(|e| {
        failure = Some(e);
        ItemScore { precision: 0.0, recall: 0.0, f1: 0.0, rhits1: 0.0, em: 0.0 }
    });

    let result = ItemResult {
        id: item.id.clone(),
        category: item.category,
        f1: score.f1,
        rhits1: score.rhits1,
        em: score.em,
        entity_clarifications: state.clarification_count_entity,
        intent_clarifications: state.clarification_count_intent,
        failure,
    };
    let t = ItemTranscript { id: item.id.clone(), category: item.category, question: item.question.clone(), transcript };
    (result, t)
}

/// Runs every item through a simulated session and scores the answers
/// against the gold query's answers. Failed items score zero. Results are
/// sorted by item id regardless of `parallelism`.
pub fn evaluate_dataset(items: &[EvalItem], env: &SessionEnv, users: &UserSource, parallelism: usize) -> EvalRun {
    let run = || -> Vec<(ItemResult, ItemTranscript)> {
        items.par_iter().map(|item| evaluate_one(item, env, users)).collect()
    };
    let mut pairs = if parallelism <= 1 {
        items.iter().map(|item| evaluate_one(item, env, users)).collect()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        }
    };
    pairs.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    let (results, transcripts): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    EvalRun { report: MetricsReport::from_items(results), transcripts }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    Entity,
    Intent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub sweep: Sweep,
    pub entity_threshold: f64,
    pub intent_threshold: f64,
    pub overall_f1: f64,
    pub mean_clarification_rounds: f64,
    pub mean_entity_rounds: f64,
    pub mean_intent_rounds: f64,
}

/// Threshold held on the axis that is not being swept.
pub const GRID_FIXED_THRESHOLD: f64 = 0.5;

/// `start, start + step, ..., end` inclusive, rounded to 9 decimals so
/// `0.5:0.9:0.1` yields exactly 0.5, 0.6, 0.7, 0.8, 0.9.
pub fn grid_values(start: f64, end: f64, step: f64) -> Result<Vec<f64>, PipelineError> {
    if step.is_nan() || step <= 0.0 || end < start || !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) {
        return Err(PipelineError::InvalidArgument(format!("bad grid {start}:{end}:{step}")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
}

/// Parses `start:end:step`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, PipelineError> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::InvalidArgument(format!("grid {spec:?}: {e}")))?;
    match parts[..] {
        [start, end, step] => grid_values(start, end, step),
        [single] => grid_values(single, single, 1.0),
        _ => Err(PipelineError::InvalidArgument(format!("grid {spec:?} is not start:end:step"))),
    }
}

/// Two one-dimensional sweeps: each entity threshold with the intent
/// threshold at 0.5, then each intent threshold with the entity threshold
/// at 0.5.
pub fn grid_search(
    items: &[EvalItem],
    entity_grid: &[f64],
    intent_grid: &[f64],
    env: &SessionEnv,
    users: &UserSource,
    parallelism: usize,
) -> Result<Vec<GridPoint>, PipelineError> {
    let mut points = Vec::with_capacity(entity_grid.len() + intent_grid.len());
    let sweeps = entity_grid
        .iter()
        .map(|&t| (Sweep::Entity, t, GRID_FIXED_THRESHOLD))
        .chain(intent_grid.iter().map(|&t| (Sweep::Intent, GRID_FIXED_THRESHOLD, t)));
    for (sweep, entity, intent) in sweeps {
        let thresholds = Thresholds::new(entity, intent).map_err(|e| PipelineError::InvalidArgument(e.to_string()))?;
        let mut env = env.clone();
        env.plugin.thresholds = thresholds;
        let run = evaluate_dataset(items, &env, users, parallelism);
        if !run.report.failures.is_empty() {
            warn!(entity, intent, failed = run.report.failures.len(), "grid point has failed items");
        }
        points.push(GridPoint {
            sweep,
            entity_threshold: entity,
            intent_threshold: intent,
            overall_f1: run.report.overall.f1,
            mean_clarification_rounds: run.report.mean_clarification_rounds(),
            mean_entity_rounds: run.report.mean_entity_clarifications,
            mean_intent_rounds: run.report.mean_intent_clarifications,
        });
    }
    Ok(points)
}
