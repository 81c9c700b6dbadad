use std::sync::atomic::{AtomicUsize, Ordering};

use serde_json::{json, Value};

use crate::http::{JsonClient, ProviderError, ProviderSettings};
use crate::registry::Registry;

/// Turns text into a dense vector. One call embeds one text.
pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError>;
}

/// Deterministic feature-hashing embedder for tests and dry runs.
///
/// Lower-cased alphanumeric words and adjacent word pairs are hashed (seeded
/// FNV-1a) into signed buckets, so texts that share vocabulary get high cosine
/// similarity and identical texts get exactly 1.
#[derive(Debug)]
pub struct HashingEmbedder {
    model_id: String,
    dimension: usize,
    seed: u64,
    calls: AtomicUsize,
}

impl HashingEmbedder {
    pub const DEFAULT_DIMENSION: usize = 256;

    pub fn new(dimension: usize, seed: u64) -> Self {
        Self {
            model_id: format!("mock-hash-{dimension}-{seed}"),
            dimension: dimension.max(1),
            seed,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn hash(&self, feature: &str) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for b in feature.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // Final avalanche so low bits depend on every byte.
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 33;
        h
    }

    fn add(&self, values: &mut [f32], feature: &str, weight: f32) {
        let h = self.hash(feature);
        let bucket = (h % self.dimension as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        values[bucket] += sign * weight;
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMENSION, 0)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let words: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        let mut values = vec![0f32; self.dimension];
        if words.is_empty() {
            self.add(&mut values, &format!("\u{0}raw:{text}"), 1.0);
            return Ok(values);
        }
        for w in &words {
            self.add(&mut values, w, 1.0);
        }
        for pair in words.windows(2) {
            self.add(&mut values, &format!("{} {}", pair[0], pair[1]), 0.5);
        }
        Ok(values)
    }
}

/// Client for `POST /v1/embeddings` on an OpenAI-compatible server.
pub struct OpenAiEmbeddings {
    client: JsonClient,
    model: String,
}

impl OpenAiEmbeddings {
    pub fn new(settings: &ProviderSettings) -> Result<Self, ProviderError> {
        Ok(Self {
            client: JsonClient::new(settings, false)?,
            model: settings.model.clone(),
        })
    }
}

impl EmbeddingProvider for OpenAiEmbeddings {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        let body = json!({ "model": self.model, "input": [text] });
        let resp = self.client.post("/v1/embeddings", &body)?;
        let values = resp
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Malformed("missing data[0].embedding".into()))?;
        values
            .iter()
            .map(|v| {
                v.as_f64()
                    .map(|f| f as f32)
                    .ok_or_else(|| ProviderError::Malformed("non-numeric embedding value".into()))
            })
            .collect()
    }
}

/// Built-in providers: `openai` (HTTP) and `mock` (feature hashing; the
/// settings' `model` may carry `<dimension>` to override the default size).
pub fn embedding_providers() -> Registry<dyn EmbeddingProvider, ProviderSettings> {
    let mut registry: Registry<dyn EmbeddingProvider, ProviderSettings> = Registry::new("embedding provider");
    registry.register("openai", |s| {
        OpenAiEmbeddings::new(s)
            .map(|p| Box::new(p) as Box<dyn EmbeddingProvider>)
            .map_err(|e| e.to_string())
    });
    registry.register("mock", |s| {
        let dimension = s.model.parse().unwrap_or(HashingEmbedder::DEFAULT_DIMENSION);
        Ok(Box::new(HashingEmbedder::new(dimension, 0)))
    });
    registry
}
