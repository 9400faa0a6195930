//! Record/replay of model calls.
//!
//! A cassette is a JSON Lines file with one `{key, kind, request, response}`
//! object per call. The key hashes the backend id together with the
//! canonical request, so replay is independent of call order.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    approx_tokens, cassette_key, chat_request_json, check_perplexity, ppl_request_json, ChatBackend, ChatPrompt,
    Completion, LlmError, PerplexityProvider, Usage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteKind {
    Chat,
    Ppl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteRecord {
    pub key: String,
    pub kind: CassetteKind,
    pub request: Value,
    pub response: Value,
}

#[derive(Debug, Clone, Default)]
pub struct Cassette {
    records: HashMap<String, CassetteRecord>,
}

impl Cassette {
    /// Loads a cassette file. A missing file is an empty cassette.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(path)?;
        let mut records = HashMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let record: CassetteRecord = serde_json::from_str(line)
                .map_err(|e| LlmError::Provider(format!("{}:{}: {e}", path.display(), i + 1)))?;
            // First recording wins.
            records.entry(record.key.clone()).or_insert(record);
        }
        Ok(Self { records })
    }

    pub fn from_records(records: impl IntoIterator<Item = CassetteRecord>) -> Self {
        let mut map = HashMap::new();
        for r in records {
            map.entry(r.key.clone()).or_insert(r);
        }
        Self { records: map }
    }

    pub fn get(&self, key: &str) -> Option<&CassetteRecord> {
        self.records.get(key)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Offline backend answering both chat and perplexity calls from a cassette.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    backend_id: String,
    cassette: Arc<Cassette>,
}

impl ReplayBackend {
    pub fn new(backend_id: impl Into<String>, cassette: Arc<Cassette>) -> Self {
        Self { backend_id: backend_id.into(), cassette }
    }

    pub fn open(backend_id: impl Into<String>, path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(backend_id, Arc::new(Cassette::load(path)?)))
    }

    fn lookup(&self, request: &Value) -> Result<&CassetteRecord, LlmError> {
        let key = cassette_key(&self.backend_id, request);
        self.cassette.get(&key).ok_or(LlmError::CassetteMiss(key))
    }
}

fn completion_from(response: &Value, backend_id: &str) -> Result<Completion, LlmError> {
    serde_json::from_value::<Completion>(response.clone())
        .or_else(|_| {
            response
                .get("text")
                .and_then(Value::as_str)
                .map(|text| Completion {
                    text: text.to_string(),
                    usage: Usage { prompt_tokens: 0, completion_tokens: approx_tokens(text) },
                    backend_id: backend_id.to_string(),
                })
                .ok_or(())
        })
        .map_err(|_| LlmError::Provider("cassette chat record has no text".into()))
}

impl ChatBackend for ReplayBackend {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn complete_unchecked(&self, prompt: &ChatPrompt) -> Result<Completion, LlmError> {
        let record = self.lookup(&chat_request_json(prompt))?;
        completion_from(&record.response, &self.backend_id)
    }
}

impl PerplexityProvider for ReplayBackend {
    fn perplexity(&self, context: &str, continuation: &str) -> Result<f64, LlmError> {
        if continuation.is_empty() {
            return Err(LlmError::InvalidArgument("empty continuation".into()));
        }
        let record = self.lookup(&ppl_request_json(context, continuation))?;
        let ppl = record
            .response
            .get("ppl")
            .and_then(Value::as_f64)
            .ok_or_else(|| LlmError::Provider("cassette ppl record has no value".into()))?;
        check_perplexity(ppl)
    }
}

/// Append-only cassette file shared by any number of recorders.
#[derive(Debug)]
pub struct CassetteWriter {
    out: Mutex<(BufWriter<File>, HashMap<String, Value>)>,
}

impl CassetteWriter {
    /// Opens `path` for appending; records already in the file are served
    /// from memory instead of being fetched again.
    pub fn open(path: &Path) -> Result<Arc<Self>, LlmError> {
        let existing = Cassette::load(path)?;
        let cache = existing.records.into_iter().map(|(k, r)| (k, r.response)).collect();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Arc::new(Self { out: Mutex::new((BufWriter::new(file), cache)) }))
    }

    fn cached(&self, key: &str) -> Option<Value> {
        self.out.lock().expect("cassette writer poisoned").1.get(key).cloned()
    }

    fn append(&self, record: CassetteRecord) -> Result<(), LlmError> {
        let mut guard = self.out.lock().expect("cassette writer poisoned");
        let (writer, cache) = &mut *guard;
        if cache.contains_key(&record.key) {
            return Ok(());
        }
        let line = serde_json::to_string(&record).map_err(|e| LlmError::Provider(e.to_string()))?;
        writeln!(writer, "{line}")?;
        writer.flush()?;
        cache.insert(record.key, record.response);
        Ok(())
    }
}

/// Wraps a live backend and writes every call to a cassette.
pub struct Recorder<B: ?Sized> {
    backend_id: String,
    writer: Arc<CassetteWriter>,
    inner: Arc<B>,
}

impl<B: ?Sized> Recorder<B> {
    pub fn new(backend_id: impl Into<String>, inner: Arc<B>, writer: Arc<CassetteWriter>) -> Self {
        Self { backend_id: backend_id.into(), writer, inner }
    }
}

impl Recorder<dyn ChatBackend> {
    pub fn chat(inner: Arc<dyn ChatBackend>, writer: Arc<CassetteWriter>) -> Self {
        let id = inner.backend_id().to_string();
        Self::new(id, inner, writer)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Recorder<B> {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn context_budget(&self) -> usize {
        self.inner.context_budget()
    }

    fn complete_unchecked(&self, prompt: &ChatPrompt) -> Result<Completion, LlmError> {
        let request = chat_request_json(prompt);
        let key = cassette_key(&self.backend_id, &request);
        if let Some(response) = self.writer.cached(&key) {
            return completion_from(&response, &self.backend_id);
        }
        let completion = self.inner.complete_unchecked(prompt)?;
        let response = serde_json::to_value(&completion).map_err(|e| LlmError::Provider(e.to_string()))?;
        self.writer.append(CassetteRecord { key, kind: super::CassetteKind::Chat, request, response })?;
        Ok(completion)
    }
}

impl<B: PerplexityProvider + ?Sized> PerplexityProvider for Recorder<B> {
    fn perplexity(&self, context: &str, continuation: &str) -> Result<f64, LlmError> {
        let request = ppl_request_json(context, continuation);
        let key = cassette_key(&self.backend_id, &request);
        if let Some(ppl) = self.writer.cached(&key).and_then(|r| r.get("ppl").and_then(Value::as_f64)) {
            return check_perplexity(ppl);
        }
        let ppl = self.inner.perplexity(context, continuation)?;
        self.writer.append(CassetteRecord {
            key,
            kind: CassetteKind::Ppl,
            request,
            response: json!({ "ppl": ppl }),
        })?;
        Ok(ppl)
    }
}
