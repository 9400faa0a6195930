use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{approx_tokens, check_perplexity, ChatBackend, ChatPrompt, Completion, LlmError, PerplexityProvider, Usage};

/// Deterministic stand-in for a language model's perplexity:
/// `exp(normalized edit distance(continuation, context))`. Ranges over
/// `[1, e]` and is lower for more similar strings.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockPerplexity;

impl PerplexityProvider for MockPerplexity {
    fn perplexity(&self, context: &str, continuation: &str) -> Result<f64, LlmError> {
        if continuation.is_empty() {
            return Err(LlmError::InvalidArgument("empty continuation".into()));
        }
        let distance = 1.0 - strsim::normalized_levenshtein(continuation, context);
        Ok(distance.exp())
    }
}

/// Table-driven perplexities keyed by `(context, continuation)`, with an
/// optional fallback for unlisted pairs.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPerplexity {
    table: HashMap<(String, String), f64>,
    fallback: Option<f64>,
}

impl ScriptedPerplexity {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every pair gets the same perplexity.
    pub fn constant(value: f64) -> Self {
        Self { table: HashMap::new(), fallback: Some(value) }
    }

    pub fn with(mut self, context: impl Into<String>, continuation: impl Into<String>, ppl: f64) -> Self {
        self.table.insert((context.into(), continuation.into()), ppl);
        self
    }

    pub fn with_fallback(mut self, ppl: f64) -> Self {
        self.fallback = Some(ppl);
        self
    }
}

impl PerplexityProvider for ScriptedPerplexity {
    fn perplexity(&self, context: &str, continuation: &str) -> Result<f64, LlmError> {
        if continuation.is_empty() {
            return Err(LlmError::InvalidArgument("empty continuation".into()));
        }
        let value = self
            .table
            .get(&(context.to_string(), continuation.to_string()))
            .copied()
            .or(self.fallback)
            .ok_or_else(|| LlmError::Provider(format!("no scripted perplexity for context {context:?}")))?;
        check_perplexity(value)
    }
}

/// Returns canned completions in order, one per call. Used to script an
/// agent when recording cassettes offline.
#[derive(Debug)]
pub struct SequenceBackend {
    id: String,
    replies: Mutex<std::collections::VecDeque<String>>,
    calls: AtomicUsize,
    budget: usize,
}

impl SequenceBackend {
    pub fn new<I, S>(id: impl Into<String>, replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            id: id.into(),
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            calls: AtomicUsize::new(0),
            budget: super::DEFAULT_CONTEXT_BUDGET,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for SequenceBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn context_budget(&self) -> usize {
        self.budget
    }

    fn complete_unchecked(&self, prompt: &ChatPrompt) -> Result<Completion, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self
            .replies
            .lock()
            .expect("sequence backend poisoned")
            .pop_front()
            .ok_or_else(|| LlmError::Provider("scripted replies exhausted".into()))?;
        let prompt_tokens = approx_tokens(&prompt.system)
            + prompt.turns.iter().map(|m| approx_tokens(&m.text)).sum::<u64>();
        Ok(Completion {
            usage: Usage { prompt_tokens, completion_tokens: approx_tokens(&text) },
            text,
            backend_id: self.id.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mock_identical_strings_is_one() {
        assert_eq!(MockPerplexity.perplexity("same text", "same text").unwrap(), 1.0);
    }

    #[test]
    fn mock_disjoint_same_length_is_e() {
        let v = MockPerplexity.perplexity("abcd", "wxyz").unwrap();
        assert!((v - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn mock_rejects_empty_continuation() {
        assert!(matches!(MockPerplexity.perplexity("a", ""), Err(LlmError::InvalidArgument(_))));
    }

    #[test]
    fn scripted_table_lookup() {
        let s = ScriptedPerplexity::new().with("desc-A", "Q1", 10.0);
        assert_eq!(s.perplexity("desc-A", "Q1").unwrap(), 10.0);
        assert!(s.perplexity("desc-B", "Q1").is_err());
        assert_eq!(s.with_fallback(3.0).perplexity("desc-B", "Q1").unwrap(), 3.0);
    }

    proptest! {
        #[test]
        fn mock_is_positive_and_deterministic(a in ".{0,40}", b in ".{1,40}") {
            let x = MockPerplexity.perplexity(&a, &b).unwrap();
            prop_assert!((1.0..=std::f64::consts::E + 1e-12).contains(&x));
            prop_assert_eq!(x, MockPerplexity.perplexity(&a, &b).unwrap());
        }
    }
}
