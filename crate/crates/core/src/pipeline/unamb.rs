//! Regenerated questions and their summary statistics.

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dialogue::{PromptSet, Transcript};
use crate::llm::{complete, ChatBackend, ChatPrompt, Role};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnAmbItem {
    pub id: String,
    pub original_question: String,
    pub refined_question: String,
    pub sparql: String,
    pub n_entity_clar: usize,
    pub n_intent_clar: usize,
    pub regenerated: bool,
}

/// The regeneration prompt for one transcript with at least one
/// clarification exchange.
pub fn gen_prompt(question: &str, golden_sparql: &str, pairs: &[(String, String)], prompts: &PromptSet) -> ChatPrompt {
    let mut body = format!("Question: {question}\nSPARQL: {golden_sparql}\nClarifications:");
    for (request, response) in pairs {
        body.push_str(&format!("\nRequest: {request}\nResponse: {response}"));
    }
    let mut prompt = ChatPrompt { system: prompts.gen_instruction.clone(), ..Default::default() };
    prompt.push(Role::User, body);
    prompt
}

/// Turns a finished transcript into a dataset row. Only transcripts with
/// clarification exchanges call the backend.
pub fn build_unambiguous_item(
    id: &str,
    transcript: &Transcript,
    backend: &dyn ChatBackend,
    prompts: &PromptSet,
) -> Result<UnAmbItem, PipelineError> {
    let gold = transcript
        .golden_sparql
        .clone()
        .ok_or_else(|| PipelineError::InvalidArgument(format!("transcript {id} has no gold query")))?;
    let session = &transcript.session;
    let pairs = transcript.clarification_pairs();
    let refined = if pairs.is_empty() {
        session.question.clone()
    } else {
        complete(&gen_prompt(&session.question, &gold, &pairs, prompts), backend)?.text.trim().to_string()
    };
    Ok(UnAmbItem {
        id: id.to_string(),
        original_question: session.question.clone(),
        refined_question: refined,
        sparql: gold,
        n_entity_clar: session.clarification_count_entity,
        n_intent_clar: session.clarification_count_intent,
        regenerated: !pairs.is_empty(),
    })
}

pub const STATS_HEADER: &str = "Ave. #Entity,Ave. #Intent,#item,Percent";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub avg_entity: f64,
    pub avg_intent: f64,
    pub n_regen: usize,
    pub percent_regen: f64,
    pub n_items: usize,
}

impl DatasetStats {
    pub fn csv_row(&self) -> String {
        format!("{:.2},{:.2},{},{:.2}", self.avg_entity, self.avg_intent, self.n_regen, self.percent_regen)
    }

    pub fn to_csv(&self) -> String {
        format!("{STATS_HEADER}\n{}\n", self.csv_row())
    }
}

/// Averages over all items, regenerated or not.
pub fn dataset_stats(items: &[UnAmbItem]) -> Result<DatasetStats, PipelineError> {
    if items.is_empty() {
        return Err(PipelineError::InvalidArgument("no items".into()));
    }
    let n = items.len() as f64;
    let n_regen = items.iter().filter(|i| i.regenerated).count();
    Ok(DatasetStats {
        avg_entity: items.iter().map(|i| i.n_entity_clar as f64).sum::<f64>() / n,
        avg_intent: items.iter().map(|i| i.n_intent_clar as f64).sum::<f64>() / n,
        n_regen,
        percent_regen: (100.0 * n_regen as f64 / n * 100.0).round() / 100.0,
        n_items: items.len(),
    })
}
