//! Guidance-conditioned prompting and the query × condition generation matrix.

mod client;
mod prompt;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::SegmentTree;
use crate::http::ProviderError;
use crate::retrieval::{
    expand_context, retrieve, Embedder, EmbeddingIndex, ExpansionScope, RetrievalError, RetrievedDocument,
};
use crate::retry::{with_backoff, RetryPolicy};

pub use client::{
    chat_clients, ChatClient, ChatRequest, ChatResponse, EchoChat, FlakyChat, OpenAiChat, SamplingParams,
};
pub use prompt::{
    render_prompt, GuidanceCondition, Message, Role, DOCUMENT_PLACEHOLDER, HIGH_TEMPLATE, IR_TEMPLATE, LOW_TEMPLATE,
    NONE_TEMPLATE, QUERY_PLACEHOLDER,
};

pub const RUN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("condition `{0}` requires a retrieved document")]
    MissingDocument(GuidanceCondition),
    #[error("condition `none` must not receive a document")]
    UnexpectedDocument,
    #[error("generation failed after {attempts} attempt(s): {source}")]
    Provider {
        attempts: u32,
        #[source]
        source: ProviderError,
    },
    #[error("model returned an empty completion")]
    EmptyResponse,
    #[error("query {0}: text is empty")]
    EmptyQuery(String),
    #[error("duplicate query id {0}")]
    DuplicateQuery(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("a retrieval index is required for condition `{0}`")]
    NoIndex(GuidanceCondition),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Value>,
}

/// Reads `{id, text, source?}` objects, one per line. Blank lines are skipped.
pub fn parse_queries(jsonl: &str) -> Result<Vec<Query>, GenerationError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: Query = serde_json::from_str(line).map_err(|e| GenerationError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if q.text.trim().is_empty() {
            return Err(GenerationError::EmptyQuery(q.id));
        }
        if !seen.insert(q.id.clone()) {
            return Err(GenerationError::DuplicateQuery(q.id));
        }
        out.push(q);
    }
    Ok(out)
}

/// A completed model call with its audit trail.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    pub finish_reason: Option<String>,
    pub request: Value,
    pub response: Value,
    pub attempts: u32,
}

/// Sends `prompt` and returns the first choice's content, retrying transport
/// and rate-limit failures per `retry`.
pub fn generate(
    prompt: &[Message],
    client: &dyn ChatClient,
    params: &SamplingParams,
    retry: &RetryPolicy,
) -> Result<Generation, GenerationError> {
    let request = ChatRequest {
        model: client.model_id().to_string(),
        messages: prompt.to_vec(),
        temperature: params.temperature,
        max_tokens: params.max_tokens,
    };
    let (response, attempts) =
        with_backoff(retry, || client.complete(&request)).map_err(|e| GenerationError::Provider {
            attempts: e.attempts,
            source: e.last,
        })?;
    let text = response.content.unwrap_or_default();
    if text.trim().is_empty() {
        return Err(GenerationError::EmptyResponse);
    }
    Ok(Generation {
        text,
        finish_reason: response.finish_reason,
        request: serde_json::to_value(&request).unwrap_or(Value::Null),
        response: response.raw,
        attempts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub schema_version: u32,
    pub query_id: String,
    pub query_text: String,
    pub condition: GuidanceCondition,
    pub retrieved: Option<RetrievedDocument>,
    pub prompt: Vec<Message>,
    pub response_text: String,
    #[serde(default)]
    pub finish_reason: Option<String>,
    pub model_id: String,
    pub sampling: SamplingParams,
    pub timestamp: String,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<Value>,
}

impl GenerationRecord {
    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }

    /// Re-renders the prompt from the stored inputs.
    pub fn rerender(&self) -> Result<Vec<Message>, GenerationError> {
        render_prompt(
            self.condition,
            self.retrieved.as_ref().map(|d| d.text.as_str()),
            &self.query_text,
        )
    }
}

/// Generation records, deduplicated by (query, condition) with the latest
/// line winning and ordered by first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunArtifact {
    pub records: Vec<GenerationRecord>,
}

impl RunArtifact {
    pub fn from_records(records: impl IntoIterator<Item = GenerationRecord>) -> Self {
        let mut slot: HashMap<(String, GuidanceCondition), usize> = HashMap::new();
        let mut out: Vec<GenerationRecord> = Vec::new();
        for r in records {
            let key = (r.query_id.clone(), r.condition);
            match slot.get(&key) {
                Some(&i) => out[i] = r,
                None => {
                    slot.insert(key, out.len());
                    out.push(r);
                }
            }
        }
        Self { records: out }
    }

    pub fn parse_jsonl(jsonl: &str) -> Result<Self, GenerationError> {
        let mut records = Vec::new();
        for (i, line) in jsonl.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: GenerationRecord = serde_json::from_str(line).map_err(|e| GenerationError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok(Self::from_records(records))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GenerationError> {
        Self::parse_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn get(&self, query_id: &str, condition: GuidanceCondition) -> Option<&GenerationRecord> {
        self.records
            .iter()
            .find(|r| r.query_id == query_id && r.condition == condition)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Query ids in first-appearance order.
    pub fn query_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.query_id.as_str()))
            .map(|r| r.query_id.as_str())
            .collect()
    }

    /// The document retrieved for `query_id`, taken from any of its records.
    pub fn document_for(&self, query_id: &str) -> Option<&RetrievedDocument> {
        self.records
            .iter()
            .filter(|r| r.query_id == query_id)
            .find_map(|r| r.retrieved.as_ref())
    }
}

/// Append-only JSONL store of generation records; one line per write.
pub struct RunStore {
    path: Option<PathBuf>,
    inner: Mutex<StoreInner>,
}

struct StoreInner {
    file: Option<File>,
    records: Vec<GenerationRecord>,
}

impl RunStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(StoreInner {
                file: None,
                records: Vec::new(),
            }),
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, GenerationError> {
        let path = path.as_ref().to_path_buf();
        let mut records = Vec::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<GenerationRecord>(&line) {
                    Ok(r) => records.push(r),
                    Err(e) => log::warn!("{}:{}: skipping unreadable record: {e}", path.display(), i + 1),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path: Some(path),
            inner: Mutex::new(StoreInner {
                file: Some(file),
                records,
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&self, record: GenerationRecord) -> Result<(), GenerationError> {
        let mut inner = self.inner.lock().expect("run store lock");
        if let Some(file) = inner.file.as_mut() {
            let line = serde_json::to_string(&record).map_err(io::Error::other)? + "\n";
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        inner.records.push(record);
        Ok(())
    }

    pub fn snapshot(&self) -> RunArtifact {
        RunArtifact::from_records(self.inner.lock().expect("run store lock").records.clone())
    }

    fn completed(&self) -> HashSet<(String, GuidanceCondition)> {
        self.snapshot()
            .records
            .into_iter()
            .filter(GenerationRecord::is_ok)
            .map(|r| (r.query_id, r.condition))
            .collect()
    }
}

/// Everything `run_matrix` needs besides the queries.
pub struct Pipeline<'a> {
    pub tree: Option<&'a SegmentTree>,
    pub index: Option<&'a EmbeddingIndex>,
    pub embedder: Option<&'a Embedder<'a>>,
    pub chat: &'a dyn ChatClient,
    pub budget: usize,
    pub scope: ExpansionScope,
    pub sampling: SamplingParams,
    pub retry: RetryPolicy,
    pub parallelism: usize,
}

impl<'a> Pipeline<'a> {
    pub fn new(chat: &'a dyn ChatClient) -> Self {
        Self {
            tree: None,
            index: None,
            embedder: None,
            chat,
            budget: 3000,
            scope: ExpansionScope::Section,
            sampling: SamplingParams::default(),
            retry: RetryPolicy::default(),
            parallelism: 4,
        }
    }

    pub fn with_retrieval(
        mut self,
        tree: &'a SegmentTree,
        index: &'a EmbeddingIndex,
        embedder: &'a Embedder<'a>,
    ) -> Self {
        self.tree = Some(tree);
        self.index = Some(index);
        self.embedder = Some(embedder);
        self
    }

    fn retrieve_document(&self, query: &str) -> Result<RetrievedDocument, GenerationError> {
        let (Some(tree), Some(index), Some(embedder)) = (self.tree, self.index, self.embedder) else {
            return Err(GenerationError::NoIndex(GuidanceCondition::Low));
        };
        let m = retrieve(query, index, embedder)?;
        Ok(expand_context(&m, tree, self.budget, self.scope)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub cells: usize,
    pub skipped: usize,
    pub generated: usize,
    pub failed: Vec<FailedCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedCell {
    pub query_id: String,
    pub condition: GuidanceCondition,
    pub error: String,
}

/// Fills every missing or failed (query, condition) cell. Retrieval runs once
/// per query and is shared by that query's conditions. Cell failures are
/// recorded and reported, not raised.
pub fn run_matrix(
    queries: &[Query],
    conditions: &[GuidanceCondition],
    pipeline: &Pipeline<'_>,
    store: &RunStore,
) -> Result<RunSummary, GenerationError> {
    let conditions: Vec<GuidanceCondition> = conditions
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if let Some(c) = conditions.iter().find(|c| c.uses_document()) {
        if pipeline.index.is_none() || pipeline.tree.is_none() || pipeline.embedder.is_none() {
            return Err(GenerationError::NoIndex(*c));
        }
    }
    let done = store.completed();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(pipeline.parallelism.max(1))
        .build()
        .expect("thread pool");

    let per_query: Vec<Result<(usize, Vec<FailedCell>), GenerationError>> = pool.install(|| {
        queries
            .par_iter()
            .map(|q| {
                let todo: Vec<GuidanceCondition> = conditions
                    .iter()
                    .copied()
                    .filter(|c| !done.contains(&(q.id.clone(), *c)))
                    .collect();
                run_query(q, &todo, pipeline, store).map(|failed| (todo.len(), failed))
            })
            .collect()
    });

    let mut summary = RunSummary {
        cells: queries.len() * conditions.len(),
        ..RunSummary::default()
    };
    for r in per_query {
        let (attempted, failed) = r?;
        summary.generated += attempted - failed.len();
        summary.failed.extend(failed);
    }
    summary.skipped = summary.cells - summary.generated - summary.failed.len();
    Ok(summary)
}

fn run_query(
    query: &Query,
    todo: &[GuidanceCondition],
    pipeline: &Pipeline<'_>,
    store: &RunStore,
) -> Result<Vec<FailedCell>, GenerationError> {
    let mut failed = Vec::new();
    if todo.is_empty() {
        return Ok(failed);
    }
    let document = if todo.iter().any(|c| c.uses_document()) {
        Some(pipeline.retrieve_document(&query.text).map_err(|e| e.to_string()))
    } else {
        None
    };

    for &condition in todo {
        let retrieved = if condition.uses_document() {
            document.clone()
        } else {
            None
        };
        let outcome = match &retrieved {
            Some(Err(e)) => Err(format!("retrieval failed: {e}")),
            _ => {
                let doc = retrieved.as_ref().and_then(|r| r.as_ref().ok());
                render_prompt(condition, doc.map(|d| d.text.as_str()), &query.text)
                    .and_then(|prompt| {
                        generate(&prompt, pipeline.chat, &pipeline.sampling, &pipeline.retry).map(|g| (prompt, g))
                    })
                    .map_err(|e| e.to_string())
            }
        };
        let retrieved = retrieved.and_then(Result::ok);
        let record = match outcome {
            Ok((prompt, g)) => GenerationRecord {
                schema_version: RUN_SCHEMA_VERSION,
                query_id: query.id.clone(),
                query_text: query.text.clone(),
                condition,
                retrieved,
                prompt,
                response_text: g.text,
                finish_reason: g.finish_reason,
                model_id: pipeline.chat.model_id().to_string(),
                sampling: pipeline.sampling.clone(),
                timestamp: chrono::Utc::now().to_rfc3339(),
                status: CellStatus::Ok,
                request: Some(g.request),
                response: Some(g.response),
            },
            Err(error) => {
                failed.push(FailedCell {
                    query_id: query.id.clone(),
                    condition,
                    error: error.clone(),
                });
                GenerationRecord {
                    schema_version: RUN_SCHEMA_VERSION,
                    query_id: query.id.clone(),
                    query_text: query.text.clone(),
                    condition,
                    prompt: render_prompt(condition, retrieved.as_ref().map(|d| d.text.as_str()), &query.text)
                        .unwrap_or_default(),
                    retrieved,
                    response_text: String::new(),
                    finish_reason: None,
                    model_id: pipeline.chat.model_id().to_string(),
                    sampling: pipeline.sampling.clone(),
                    timestamp: chrono::Utc::now().to_rfc3339(),
                    status: CellStatus::Failed { error },
                    request: None,
                    response: None,
                }
            }
        };
        store.append(record)?;
    }
    Ok(failed)
}
