//! Dense top-1 subsection retrieval with sibling expansion under a token budget.

mod cache;
mod provider;

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Level, Segment, SegmentTree};
use crate::http::ProviderError;
use crate::registry::RegistryError;
use crate::retry::{with_backoff, RetryPolicy};

pub use cache::EmbeddingCache;
pub use provider::{embedding_providers, EmbeddingProvider, HashingEmbedder, OpenAiEmbeddings};

pub const INDEX_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("vector dimensions differ ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vectors come from different models ({left} vs {right})")]
    ModelMismatch { left: String, right: String },
    #[error("similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("query is empty")]
    EmptyQuery,
    #[error("index is empty")]
    EmptyIndex,
    #[error("corpus has no subsections")]
    EmptyCorpus,
    #[error("embedding failed after {attempts} attempt(s): {source}")]
    Provider {
        attempts: u32,
        #[source]
        source: ProviderError,
    },
    #[error("index incomplete; {} subsection(s) failed: {}", failed.len(), failed.iter().map(|(id, _)| id.as_str()).collect::<Vec<_>>().join(", "))]
    PartialIndex { failed: Vec<(String, String)> },
    #[error("embedding for {segment_id} has dimension {got}, expected {expected}")]
    IndexConsistency {
        segment_id: String,
        expected: usize,
        got: usize,
    },
    #[error("segment {0} is not a subsection of the corpus")]
    NotASubsection(String),
    #[error("cache write failed: {0}")]
    Cache(#[from] std::io::Error),
    #[error(transparent)]
    Tokenizer(#[from] RegistryError),
    #[error("index json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported index schema_version {0}")]
    Schema(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>, model_id: impl Into<String>) -> Self {
        Self {
            values,
            model_id: model_id.into(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// `dot(u, v) / (|u| |v|)`, accumulated in f64 and clamped to [-1, 1].
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if u.model_id != v.model_id {
        return Err(RetrievalError::ModelMismatch {
            left: u.model_id.clone(),
            right: v.model_id.clone(),
        });
    }
    if u.values.len() != v.values.len() {
        return Err(RetrievalError::DimensionMismatch {
            left: u.values.len(),
            right: v.values.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0f64, 0f64, 0f64);
    for (a, b) in u.values.iter().zip(&v.values) {
        let (a, b) = (f64::from(*a), f64::from(*b));
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if !(dot.is_finite() && nu.is_finite() && nv.is_finite()) {
        return Err(RetrievalError::NonFinite);
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Provider plus optional cache and retry policy. Counts the requests that
/// actually reach the provider.
pub struct Embedder<'a> {
    provider: &'a dyn EmbeddingProvider,
    cache: Option<&'a EmbeddingCache>,
    retry: RetryPolicy,
    provider_calls: AtomicUsize,
}

impl<'a> Embedder<'a> {
    pub fn new(provider: &'a dyn EmbeddingProvider) -> Self {
        Self {
            provider,
            cache: None,
            retry: RetryPolicy::default(),
            provider_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, cache: &'a EmbeddingCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn model_id(&self) -> &str {
        self.provider.model_id()
    }

    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::SeqCst)
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let model_id = self.provider.model_id();
        if let Some(values) = self.cache.and_then(|c| c.get(model_id, text)) {
            return Ok(EmbeddingVector::new(values, model_id));
        }
        let (values, _) = with_backoff(&self.retry, || {
            self.provider_calls.fetch_add(1, Ordering::SeqCst);
            self.provider.embed(text)
        })
        .map_err(|e| RetrievalError::Provider {
            attempts: e.attempts,
            source: e.last,
        })?;
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        if let Some(cache) = self.cache {
            cache.insert(model_id, text, &values)?;
        }
        Ok(EmbeddingVector::new(values, model_id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub segment_id: String,
    /// Document-order position among subsections; used for tie-breaking.
    pub position: usize,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingIndex {
    pub schema_version: u32,
    pub model_id: String,
    pub dimension: usize,
    pub corpus_fingerprint: String,
    pub include_titles: bool,
    pub entries: Vec<IndexEntry>,
}

impl EmbeddingIndex {
    pub fn is_stale(&self, tree: &SegmentTree) -> bool {
        self.corpus_fingerprint != corpus_fingerprint(tree, self.include_titles)
    }

    pub fn to_json(&self) -> Result<String, RetrievalError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self, RetrievalError> {
        let index: Self = serde_json::from_str(json)?;
        if index.schema_version != INDEX_SCHEMA_VERSION {
            return Err(RetrievalError::Schema(index.schema_version));
        }
        Ok(index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexOptions {
    /// Embed `title + "\n\n" + body` rather than the body alone.
    pub include_titles: bool,
    pub parallelism: usize,
}

impl Default for IndexOptions {
    fn default() -> Self {
        Self {
            include_titles: true,
            parallelism: 4,
        }
    }
}

/// Text that is embedded for a subsection.
pub fn embedding_text(segment: &Segment, include_titles: bool) -> String {
    if include_titles && !segment.title.is_empty() {
        format!("{}\n\n{}", segment.title, segment.body)
    } else {
        segment.body.clone()
    }
}

/// Hash over every subsection's id and embedded text.
pub fn corpus_fingerprint(tree: &SegmentTree, include_titles: bool) -> String {
    let mut h = Sha256::new();
    h.update([u8::from(include_titles)]);
    for seg in tree.subsections() {
        h.update(seg.id.as_bytes());
        h.update([0]);
        h.update(embedding_text(seg, include_titles).as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

/// Embeds every subsection of `tree`, at most `options.parallelism` at a time.
pub fn build_index(
    tree: &SegmentTree,
    embedder: &Embedder<'_>,
    options: &IndexOptions,
) -> Result<EmbeddingIndex, RetrievalError> {
    let subsections: Vec<&Segment> = tree.subsections().collect();
    if subsections.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<EmbeddingVector, RetrievalError>> = pool.install(|| {
        subsections
            .par_iter()
            .map(|seg| embedder.embed(&embedding_text(seg, options.include_titles)))
            .collect()
    });

    let mut entries = Vec::with_capacity(subsections.len());
    let mut failed = Vec::new();
    for (position, (seg, result)) in subsections.iter().zip(results).enumerate() {
        match result {
            Ok(vector) => entries.push(IndexEntry {
                segment_id: seg.id.clone(),
                position,
                vector,
            }),
            Err(e) => failed.push((seg.id.clone(), e.to_string())),
        }
    }
    if !failed.is_empty() {
        return Err(RetrievalError::PartialIndex { failed });
    }
    let dimension = entries[0].vector.dimension();
    if let Some(bad) = entries.iter().find(|e| e.vector.dimension() != dimension) {
        return Err(RetrievalError::IndexConsistency {
            segment_id: bad.segment_id.clone(),
            expected: dimension,
            got: bad.vector.dimension(),
        });
    }
    Ok(EmbeddingIndex {
        schema_version: INDEX_SCHEMA_VERSION,
        model_id: embedder.model_id().to_string(),
        dimension,
        corpus_fingerprint: corpus_fingerprint(tree, options.include_titles),
        include_titles: options.include_titles,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMatch {
    pub segment_id: String,
    pub similarity: f64,
}

/// Top-1 subsection by cosine similarity; ties go to the earliest in document order.
pub fn retrieve(
    query: &str,
    index: &EmbeddingIndex,
    embedder: &Embedder<'_>,
) -> Result<RetrievalMatch, RetrievalError> {
    if query.trim().is_empty() {
        return Err(RetrievalError::EmptyQuery);
    }
    if index.entries.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let q = embedder.embed(query)?;
    let mut best: Option<(f64, usize, &IndexEntry)> = None;
    for entry in &index.entries {
        let sim = cosine_similarity(&q, &entry.vector)?;
        let better = match best {
            None => true,
            Some((b, pos, _)) => sim > b || (sim == b && entry.position < pos),
        };
        if better {
            best = Some((sim, entry.position, entry));
        }
    }
    let (similarity, _, entry) = best.expect("non-empty index");
    Ok(RetrievalMatch {
        segment_id: entry.segment_id.clone(),
        similarity,
    })
}

/// How far sibling expansion may reach from the matched subsection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionScope {
    #[default]
    Section,
    Chapter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedDocument {
    pub matched_subsection_id: String,
    pub included_segment_ids: Vec<String>,
    pub text: String,
    pub token_count: usize,
    pub similarity: f64,
    #[serde(default)]
    pub truncated: bool,
}

/// Grows a contiguous window of subsections around the match, trying the
/// nearest unused subsection before, then after, and so on. A side stops at the
/// first subsection that does not fit in `budget` or at the scope boundary.
/// Budgeting uses the per-segment `token_count`s. If the match alone is over
/// budget it is truncated and flagged.
pub fn expand_context(
    matched: &RetrievalMatch,
    tree: &SegmentTree,
    budget: usize,
    scope: ExpansionScope,
) -> Result<RetrievedDocument, RetrievalError> {
    let seg = tree
        .get(&matched.segment_id)
        .filter(|s| s.level == Level::Subsection)
        .ok_or_else(|| RetrievalError::NotASubsection(matched.segment_id.clone()))?;

    if seg.token_count > budget {
        let tokenizer = tree.tokenizer().resolve()?;
        let text = tokenizer.truncate(&seg.body, budget).to_string();
        return Ok(RetrievedDocument {
            matched_subsection_id: seg.id.clone(),
            included_segment_ids: vec![seg.id.clone()],
            token_count: tokenizer.count(&text),
            text,
            similarity: matched.similarity,
            truncated: true,
        });
    }

    let container = match scope {
        ExpansionScope::Section => tree.parent(&seg.id),
        ExpansionScope::Chapter => tree.ancestor_at(&seg.id, Level::Chapter),
    };
    let siblings: Vec<&Segment> = match container {
        Some(c) => tree.descendant_subsections(&c.id),
        None => vec![seg],
    };
    let at = siblings
        .iter()
        .position(|s| s.id == seg.id)
        .expect("match below its container");

    let (mut lo, mut hi) = (at, at);
    let mut total = seg.token_count;
    let (mut before_open, mut after_open) = (at > 0, at + 1 < siblings.len());
    while before_open || after_open {
        if before_open {
            let cand = siblings[lo - 1];
            if total + cand.token_count <= budget {
                total += cand.token_count;
                lo -= 1;
                before_open = lo > 0;
            } else {
                before_open = false;
            }
        }
        if after_open {
            let cand = siblings[hi + 1];
            if total + cand.token_count <= budget {
                total += cand.token_count;
                hi += 1;
                after_open = hi + 1 < siblings.len();
            } else {
                after_open = false;
            }
        }
    }

    let included = &siblings[lo..=hi];
    Ok(RetrievedDocument {
        matched_subsection_id: seg.id.clone(),
        included_segment_ids: included.iter().map(|s| s.id.clone()).collect(),
        text: included
            .iter()
            .map(|s| s.body.as_str())
            .filter(|b| !b.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n"),
        token_count: total,
        similarity: matched.similarity,
        truncated: false,
    })
}
