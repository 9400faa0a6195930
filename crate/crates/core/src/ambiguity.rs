//! Clarification plugin: Bayesian ambiguity scores over tool candidates.
//!
//! For entities the prior is popularity and the likelihood comes from the
//! perplexity of the question given each entity's description. For
//! predicates the prior is predicate frequency and the likelihood comes from
//! the perplexity of the question given a verbalized triple. In both cases
//!
//! ```text
//! likelihood = softmax(1 / PPL)
//! posterior  = normalize(likelihood * prior)
//! P~         = softmax(posterior)
//! score      = H(P~) / ln N
//! ```
//!
//! and a hint is appended to the observation when the score reaches the
//! threshold for its kind.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::kg::{Direction, EntityId, KnowledgeGraph, Term};
use crate::llm::{LlmError, PerplexityProvider};
use crate::toolbox::{EntityCandidate, PredicateCandidate, ToolResult, PATH_SEPARATOR};

pub const DEFAULT_ENTITY_THRESHOLD: f64 = 0.6;
pub const DEFAULT_INTENT_THRESHOLD: f64 = 0.8;

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AmbiguityError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Provider(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub entity: f64,
    pub intent: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { entity: DEFAULT_ENTITY_THRESHOLD, intent: DEFAULT_INTENT_THRESHOLD }
    }
}

impl Thresholds {
    pub fn new(entity: f64, intent: f64) -> Result<Self, AmbiguityError> {
        let t = Self { entity, intent };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), AmbiguityError> {
        for (name, v) in [("entity", self.entity), ("intent", self.intent)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(AmbiguityError::InvalidArgument(format!("{name} threshold {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn for_kind(&self, kind: AmbiguityKind) -> f64 {
        match kind {
            AmbiguityKind::Entity => self.entity,
            AmbiguityKind::Intent => self.intent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmbiguityKind {
    Entity,
    Intent,
}

impl fmt::Display for AmbiguityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AmbiguityKind::Entity => "entity",
            AmbiguityKind::Intent => "intent",
        })
    }
}

/// Where the prior came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    Popularity,
    PredicateFrequency,
    /// All raw weights were zero.
    Uniform,
    /// Supplied by a non-Bayesian scorer.
    Pinned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityReport {
    pub kind: AmbiguityKind,
    /// Candidate labels with their softmax-normalized posterior.
    pub posterior: Vec<(String, f64)>,
    pub prior: Vec<f64>,
    pub likelihood: Vec<f64>,
    pub prior_source: PriorSource,
    pub score: f64,
    pub threshold: f64,
    pub needs_clarification: bool,
    pub hint_text: String,
}

impl AmbiguityReport {
    /// Fills in the decision and hint for a computed distribution.
    pub fn decide(
        kind: AmbiguityKind,
        labels: Vec<String>,
        posterior: Vec<f64>,
        prior: Vec<f64>,
        likelihood: Vec<f64>,
        prior_source: PriorSource,
        threshold: f64,
    ) -> Result<Self, AmbiguityError> {
        let score = normalized_entropy(&posterior)?;
        let needs_clarification = score >= threshold;
        let hint_text = if needs_clarification { hint_text(kind, score, threshold, &labels) } else { String::new() };
        Ok(Self {
            kind,
            posterior: labels.into_iter().zip(posterior).collect(),
            prior,
            likelihood,
            prior_source,
            score,
            threshold,
            needs_clarification,
            hint_text,
        })
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.posterior.iter().map(|(l, _)| l.as_str())
    }
}

/// The hint appended to an observation.
pub fn hint_text(kind: AmbiguityKind, score: f64, threshold: f64, labels: &[String]) -> String {
    format!(
        "\n[Ambiguity hint] {kind} ambiguity score {score:.3} >= threshold {threshold}. Candidates: {}. Consider calling AskForClarification.",
        labels.join("; ")
    )
}

/// Shannon entropy (natural log) divided by `ln N`. `N = 1` gives 0.
pub fn normalized_entropy(p: &[f64]) -> Result<f64, AmbiguityError> {
    if p.is_empty() {
        return Err(AmbiguityError::InvalidDistribution("empty distribution".into()));
    }
    if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(AmbiguityError::InvalidDistribution(format!("probability {bad} is not a non-negative number")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(AmbiguityError::InvalidDistribution(format!("probabilities sum to {sum}")));
    }
    if p.len() == 1 {
        return Ok(0.0);
    }
    let h: f64 = p.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum();
    Ok((h / (p.len() as f64).ln()).clamp(0.0, 1.0))
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `weights / sum`, or uniform when every weight is zero.
fn normalize_prior(weights: &[f64]) -> (Vec<f64>, bool) {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        (weights.iter().map(|w| w / total).collect(), false)
    } else {
        (vec![1.0 / weights.len() as f64; weights.len()], true)
    }
}

/// Runs the shared chain on raw prior weights and perplexities.
/// Returns (prior, likelihood, P~, prior_was_uniform).
pub fn bayes_chain(prior_weights: &[f64], perplexities: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, bool) {
    let (prior, uniform) = normalize_prior(prior_weights);
    let inv: Vec<f64> = perplexities.iter().map(|p| 1.0 / p).collect();
    let likelihood = softmax(&inv);
    let joint: Vec<f64> = likelihood.iter().zip(&prior).map(|(l, p)| l * p).collect();
    let z: f64 = joint.iter().sum();
    let posterior: Vec<f64> = joint.iter().map(|j| j / z).collect();
    (prior, likelihood, softmax(&posterior), uniform)
}

/// Conditioning context for an entity's description.
pub fn entity_context(description: &str) -> String {
    let desc = description.trim();
    let desc = if desc.is_empty() { "(none)" } else { desc };
    format!("Description: {desc}\nQuestion: ")
}

/// Last dotted segment with underscores as spaces; hops joined by a space.
pub fn predicate_label(predicate: &str) -> String {
    predicate
        .split(PATH_SEPARATOR)
        .map(|hop| hop.rsplit('.').next().unwrap_or(hop).replace('_', " "))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `"<anchor> <label> <tail>."`, read in edge direction.
pub fn verbalize(graph: &KnowledgeGraph, candidate: &PredicateCandidate) -> String {
    let anchor = graph.label(&Term::Entity(candidate.anchor.clone()));
    let tail = graph.label(&candidate.sample_tail);
    let label = predicate_label(&candidate.predicate);
    match candidate.direction {
        Direction::Incoming => format!("{tail} {label} {anchor}."),
        _ => format!("{anchor} {label} {tail}."),
    }
}

/// Number of triples (or two-hop path instances) realizing a predicate.
pub fn path_frequency(graph: &KnowledgeGraph, predicate: &str) -> usize {
    match predicate.split_once(PATH_SEPARATOR) {
        None => graph.predicate_frequency(predicate),
        Some((p1, p2)) => graph
            .by_predicate(p1)
            .filter_map(|t| t.object.as_entity())
            .map(|mid| graph.by_subject(mid).filter(|t| t.predicate == p2).count())
            .sum(),
    }
}

pub fn entity_ambiguity(
    question: &str,
    candidates: &[EntityCandidate],
    ppl: &dyn PerplexityProvider,
    threshold: f64,
) -> Result<AmbiguityReport, AmbiguityError> {
    if candidates.is_empty() {
        return Err(AmbiguityError::InvalidArgument("no entity candidates".into()));
    }
    let weights: Vec<f64> = candidates.iter().map(|c| c.record.popularity as f64).collect();
    let perplexities = candidates
        .iter()
        .map(|c| ppl.perplexity(&entity_context(&c.record.description), question))
        .collect::<Result<Vec<_>, _>>()?;
    let (prior, likelihood, posterior, uniform) = bayes_chain(&weights, &perplexities);
    let labels = candidates.iter().map(|c| c.record.label().to_string()).collect();
    let source = if uniform { PriorSource::Uniform } else { PriorSource::Popularity };
    AmbiguityReport::decide(AmbiguityKind::Entity, labels, posterior, prior, likelihood, source, threshold)
}

pub fn intent_ambiguity(
    question: &str,
    candidates: &[PredicateCandidate],
    ppl: &dyn PerplexityProvider,
    graph: &KnowledgeGraph,
    threshold: f64,
) -> Result<AmbiguityReport, AmbiguityError> {
    if candidates.is_empty() {
        return Err(AmbiguityError::InvalidArgument("no predicate candidates".into()));
    }
    let weights: Vec<f64> = candidates.iter().map(|c| path_frequency(graph, &c.predicate) as f64).collect();
    let perplexities = candidates
        .iter()
        .map(|c| ppl.perplexity(&verbalize(graph, c), question))
        .collect::<Result<Vec<_>, _>>()?;
    let (prior, likelihood, posterior, uniform) = bayes_chain(&weights, &perplexities);
    let labels = candidates.iter().map(|c| c.predicate.clone()).collect();
    let source = if uniform { PriorSource::Uniform } else { PriorSource::PredicateFrequency };
    AmbiguityReport::decide(AmbiguityKind::Intent, labels, posterior, prior, likelihood, source, threshold)
}

/// Produces reports for a candidate list. The plugin owns one.
pub trait AmbiguityScorer: Send + Sync {
    fn entity(&self, question: &str, candidates: &[EntityCandidate], threshold: f64)
        -> Result<AmbiguityReport, AmbiguityError>;

    fn intent(
        &self,
        question: &str,
        candidates: &[PredicateCandidate],
        graph: &KnowledgeGraph,
        threshold: f64,
    ) -> Result<AmbiguityReport, AmbiguityError>;
}

/// The perplexity-based scorer.
#[derive(Clone)]
pub struct BayesianScorer {
    pub ppl: Arc<dyn PerplexityProvider>,
}

impl BayesianScorer {
    pub fn new(ppl: Arc<dyn PerplexityProvider>) -> Self {
        Self { ppl }
    }
}

impl AmbiguityScorer for BayesianScorer {
    fn entity(&self, question: &str, candidates: &[EntityCandidate], threshold: f64) -> Result<AmbiguityReport, AmbiguityError> {
        entity_ambiguity(question, candidates, self.ppl.as_ref(), threshold)
    }

    fn intent(
        &self,
        question: &str,
        candidates: &[PredicateCandidate],
        graph: &KnowledgeGraph,
        threshold: f64,
    ) -> Result<AmbiguityReport, AmbiguityError> {
        intent_ambiguity(question, candidates, self.ppl.as_ref(), graph, threshold)
    }
}

/// Returns a fixed score for every candidate set with N >= 2, using a
/// posterior whose normalized entropy equals that score. For threshold
/// studies independent of any language model.
#[derive(Debug, Clone, Copy)]
pub struct PinnedScorer {
    pub entity_score: f64,
    pub intent_score: f64,
}

impl PinnedScorer {
    pub fn new(score: f64) -> Self {
        Self { entity_score: score, intent_score: score }
    }
}

/// A distribution `[p, q, q, ...]` with `p >= q` whose normalized entropy is
/// `target`, found by bisection on `p`.
pub fn distribution_with_entropy(n: usize, target: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let make = |p: f64| {
        let q = (1.0 - p) / (n - 1) as f64;
        std::iter::once(p).chain(std::iter::repeat_n(q, n - 1)).collect::<Vec<_>>()
    };
    let entropy = |p: f64| normalized_entropy(&make(p)).unwrap_or(0.0);
    let target = target.clamp(0.0, 1.0);
    // entropy decreases from 1 at p = 1/n to 0 at p = 1
    let (mut lo, mut hi) = (1.0 / n as f64, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if entropy(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    make(0.5 * (lo + hi))
}

fn pinned_report(kind: AmbiguityKind, labels: Vec<String>, score: f64, threshold: f64) -> Result<AmbiguityReport, AmbiguityError> {
    let n = labels.len();
    let posterior = distribution_with_entropy(n, score);
    let flat = vec![1.0 / n as f64; n];
    let mut report = AmbiguityReport::decide(kind, labels, posterior, flat.clone(), flat, PriorSource::Pinned, threshold)?;
    // Report the pinned value itself, not its bisection approximation.
    if n > 1 {
        report.score = score;
        report.needs_clarification = score >= threshold;
        let labels: Vec<String> = report.labels().map(str::to_string).collect();
        report.hint_text =
            if report.needs_clarification { hint_text(kind, score, threshold, &labels) } else { String::new() };
    }
    Ok(report)
}

impl AmbiguityScorer for PinnedScorer {
    fn entity(&self, _question: &str, candidates: &[EntityCandidate], threshold: f64) -> Result<AmbiguityReport, AmbiguityError> {
        let labels = candidates.iter().map(|c| c.record.label().to_string()).collect();
        pinned_report(AmbiguityKind::Entity, labels, self.entity_score, threshold)
    }

    fn intent(
        &self,
        _question: &str,
        candidates: &[PredicateCandidate],
        _graph: &KnowledgeGraph,
        threshold: f64,
    ) -> Result<AmbiguityReport, AmbiguityError> {
        let labels = candidates.iter().map(|c| c.predicate.clone()).collect();
        pinned_report(AmbiguityKind::Intent, labels, self.intent_score, threshold)
    }
}

/// Result of decorating one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Decorated {
    pub result: ToolResult,
    pub reports: Vec<AmbiguityReport>,
    /// Scoring failures; the observation is left unmodified for these.
    pub errors: Vec<String>,
}

impl Decorated {
    /// Kind of the last report that asked for clarification.
    pub fn last_hint(&self) -> Option<AmbiguityKind> {
        self.reports.iter().rev().find(|r| r.needs_clarification).map(|r| r.kind)
    }
}

#[derive(Clone)]
pub struct ClarificationPlugin {
    pub thresholds: Thresholds,
    pub scorer: Arc<dyn AmbiguityScorer>,
}

impl fmt::Debug for ClarificationPlugin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClarificationPlugin").field("thresholds", &self.thresholds).finish_non_exhaustive()
    }
}

impl ClarificationPlugin {
    pub fn new(thresholds: Thresholds, scorer: Arc<dyn AmbiguityScorer>) -> Self {
        Self { thresholds, scorer }
    }

    pub fn bayesian(thresholds: Thresholds, ppl: Arc<dyn PerplexityProvider>) -> Self {
        Self::new(thresholds, Arc::new(BayesianScorer::new(ppl)))
    }

    /// Scores the candidates attached to `result` and appends a hint for
    /// each report at or above its threshold. Candidate lists shorter than
    /// two are not scored.
    pub fn decorate_observation(&self, result: ToolResult, question: &str, graph: &KnowledgeGraph) -> Decorated {
        let mut out = Decorated { result, reports: Vec::new(), errors: Vec::new() };
        if out.result.suspended {
            return out;
        }
        let mut outcomes = Vec::new();
        if let Some(c) = out.result.entity_candidates.as_deref().filter(|c| c.len() >= 2) {
            outcomes.push(self.scorer.entity(question, c, self.thresholds.entity));
        }
        if let Some(c) = out.result.predicate_candidates.as_deref().filter(|c| c.len() >= 2) {
            outcomes.push(self.scorer.intent(question, c, graph, self.thresholds.intent));
        }
        for outcome in outcomes {
            match outcome {
                Ok(report) => {
                    if report.needs_clarification {
                        out.result.observation_text.push_str(&report.hint_text);
                    }
                    out.reports.push(report);
                }
                Err(e) => {
                    warn!(error = %e, "ambiguity scoring failed");
                    out.errors.push(e.to_string());
                }
            }
        }
        out
    }
}

/// Anchors mentioned by a set of predicate candidates, sorted and distinct.
pub fn candidate_anchors(candidates: &[PredicateCandidate]) -> Vec<EntityId> {
    let mut v: Vec<EntityId> = candidates.iter().map(|c| c.anchor.clone()).collect();
    v.sort();
    v.dedup();
    v
}
