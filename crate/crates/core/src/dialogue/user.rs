//! Sources of clarification responses.

use std::sync::Arc;

use crate::ambiguity::predicate_label;
use crate::kg::{normalize_name, EntityId, KnowledgeGraph};
use crate::llm::{complete, ChatBackend, ChatPrompt, LlmError, Role};
use crate::sparql::{self, Iri, PatternTerm};

/// Answers the agent's clarification requests.
pub trait Clarifier: Send {
    fn respond(&mut self, request: &str) -> Result<String, String>;
}

/// Simulated user driven by a chat model that knows the gold query.
pub fn simulate_user(
    golden_sparql: &str,
    request: &str,
    backend: &dyn ChatBackend,
    instruction: &str,
) -> Result<String, LlmError> {
    if request.trim().is_empty() {
        return Err(LlmError::InvalidArgument("empty clarification request".into()));
    }
    let mut prompt = ChatPrompt { system: instruction.to_string(), ..Default::default() };
    prompt.push(Role::User, format!("SPARQL: {golden_sparql}\nClarification request: {request}"));
    Ok(complete(&prompt, backend)?.text.trim().to_string())
}

pub struct LlmUser {
    pub backend: Arc<dyn ChatBackend>,
    pub instruction: String,
    pub golden_sparql: String,
}

impl Clarifier for LlmUser {
    fn respond(&mut self, request: &str) -> Result<String, String> {
        simulate_user(&self.golden_sparql, request, self.backend.as_ref(), &self.instruction).map_err(|e| e.to_string())
    }
}

/// Always gives the same answer.
#[derive(Debug, Clone)]
pub struct FixedClarifier(pub String);

impl Clarifier for FixedClarifier {
    fn respond(&mut self, _request: &str) -> Result<String, String> {
        Ok(self.0.clone())
    }
}

/// Entity ids and predicates mentioned in a query, in order of appearance.
pub fn gold_constants(golden_sparql: &str) -> (Vec<EntityId>, Vec<String>) {
    let mut entities = Vec::new();
    let mut predicates = Vec::new();
    let Ok(query) = sparql::parse(golden_sparql) else {
        return (entities, predicates);
    };
    for pattern in &query.patterns {
        for (pos, term) in pattern.terms().into_iter().enumerate() {
            let PatternTerm::Iri(Iri::Local(local)) = term else { continue };
            if pos == 1 {
                if !predicates.contains(local) {
                    predicates.push(local.clone());
                }
            } else if EntityId::looks_like_id(local) {
                if let Ok(id) = EntityId::new(local.as_str()) {
                    if !entities.contains(&id) {
                        entities.push(id);
                    }
                }
            }
        }
    }
    (entities, predicates)
}

/// Deterministic stand-in for the simulated user. It reads the gold query:
/// a request mentioning one of its predicates is answered with that
/// predicate's label, otherwise a request is answered with the gold entity
/// it names (or the first gold entity) and its description.
#[derive(Debug, Clone)]
pub struct RuleBasedUser {
    pub graph: Arc<KnowledgeGraph>,
    pub golden_sparql: String,
}

impl RuleBasedUser {
    pub fn new(graph: Arc<KnowledgeGraph>, golden_sparql: impl Into<String>) -> Self {
        Self { graph, golden_sparql: golden_sparql.into() }
    }

    pub fn answer(&self, request: &str) -> String {
        let (entities, predicates) = gold_constants(&self.golden_sparql);
        let padded = format!(" {} ", normalize_name(request));
        let mentions = |phrase: &str| {
            let p = normalize_name(phrase);
            !p.is_empty() && padded.contains(&format!(" {p} "))
        };

        let describe = |id: &EntityId| {
            self.graph.entity(id).filter(|r| !r.is_cvt).map(|r| {
                if r.description.is_empty() {
                    r.label().to_string()
                } else {
                    format!("{} ({})", r.label(), r.description)
                }
            })
        };
        let intent = |p: &String| format!("I mean the {}.", predicate_label(p));

        if let Some(p) = predicates
            .iter()
            .find(|p| mentions(p) || p.split(" / ").any(|hop| mentions(&predicate_label(hop))))
        {
            return intent(p);
        }
        let named = entities.iter().find(|id| {
            mentions(id.as_str()) || self.graph.entity(id).is_some_and(|r| mentions(&r.canonical_name))
        });
        if let Some(answer) = named.or(entities.first()).and_then(describe) {
            return answer;
        }
        if let Some(p) = predicates.first() {
            return intent(p);
        }
        "I'm not sure.".to_string()
    }
}

impl Clarifier for RuleBasedUser {
    fn respond(&mut self, request: &str) -> Result<String, String> {
        Ok(self.answer(request))
    }
}
