use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{Message, Role};
use crate::http::{JsonClient, ProviderError, ProviderSettings};
use crate::registry::Registry;

/// Sampling parameters sent with a chat request. `None` fields are omitted so
/// the provider's defaults apply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

/// Body of `POST /v1/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub content: Option<String>,
    pub finish_reason: Option<String>,
    pub raw: Value,
}

pub trait ChatClient: Send + Sync {
    fn model_id(&self) -> &str;

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

fn parse_completion(raw: Value) -> Result<ChatResponse, ProviderError> {
    let choice = raw
        .pointer("/choices/0")
        .ok_or_else(|| ProviderError::Malformed("response has no choices".into()))?;
    Ok(ChatResponse {
        content: choice
            .pointer("/message/content")
            .and_then(Value::as_str)
            .map(str::to_string),
        finish_reason: choice.get("finish_reason").and_then(Value::as_str).map(str::to_string),
        raw,
    })
}

pub struct OpenAiChat {
    client: JsonClient,
    model: String,
}

impl OpenAiChat {
    pub fn new(settings: &ProviderSettings) -> Result<Self, ProviderError> {
        Ok(Self {
            client: JsonClient::new(settings, false)?,
            model: settings.model.clone(),
        })
    }
}

impl ChatClient for OpenAiChat {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let body = serde_json::to_value(request).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        parse_completion(self.client.post("/v1/chat/completions", &body)?)
    }
}

/// Replies with the content of the last user message.
#[derive(Debug, Default)]
pub struct EchoChat {
    calls: AtomicUsize,
}

impl EchoChat {
    pub const MODEL_ID: &'static str = "mock-echo";

    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatClient for EchoChat {
    fn model_id(&self) -> &str {
        Self::MODEL_ID
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let content = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.clone())
            .unwrap_or_default();
        let raw = json!({
            "id": format!("mock-{n}"),
            "object": "chat.completion",
            "model": Self::MODEL_ID,
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": content},
                "finish_reason": "stop"
            }]
        });
        parse_completion(raw)
    }
}

/// Fails with a retryable transport error for the first `failures` calls,
/// then delegates.
pub struct FlakyChat<C> {
    inner: C,
    failures: usize,
    calls: AtomicUsize,
}

impl<C: ChatClient> FlakyChat<C> {
    pub fn new(inner: C, failures: usize) -> Self {
        Self {
            inner,
            failures,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<C: ChatClient> ChatClient for FlakyChat<C> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.failures {
            return Err(ProviderError::Transport(format!("injected failure {}", n + 1)));
        }
        self.inner.complete(request)
    }
}

/// Built-in chat clients: `openai` (HTTP) and `mock` (echo).
pub fn chat_clients() -> Registry<dyn ChatClient, ProviderSettings> {
    let mut registry: Registry<dyn ChatClient, ProviderSettings> = Registry::new("chat client");
    registry.register("openai", |s| {
        OpenAiChat::new(s)
            .map(|c| Box::new(c) as Box<dyn ChatClient>)
            .map_err(|e| e.to_string())
    });
    registry.register("mock", |_| Ok(Box::new(EchoChat::new())));
    registry
}
