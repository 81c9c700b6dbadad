//! Minimal blocking client for OpenAI-compatible JSON endpoints.

use std::env;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::retry::Retryable;

#[derive(Debug, Clone, Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited (HTTP 429): {0}")]
    RateLimited(String),
    #[error("server error (HTTP {status}): {message}")]
    Server { status: u16, message: String },
    #[error("request rejected (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("missing credentials: environment variable {0} is not set")]
    MissingCredentials(String),
}

impl Retryable for ProviderError {
    fn is_retryable(&self) -> bool {
        matches!(
            self,
            ProviderError::Transport(_) | ProviderError::RateLimited(_) | ProviderError::Server { .. }
        )
    }
}

/// Connection settings shared by every OpenAI-compatible provider. Only the
/// *name* of the environment variable holding the key is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSettings {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com".into(),
            model: String::new(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
        }
    }
}

impl ProviderSettings {
    pub fn with_model(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            ..Self::default()
        }
    }
}

pub(crate) struct JsonClient {
    http: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
}

impl JsonClient {
    /// Reads the key from the configured environment variable. A missing key is
    /// only an error when `require_key` is set (local servers often need none).
    pub(crate) fn new(settings: &ProviderSettings, require_key: bool) -> Result<Self, ProviderError> {
        let api_key = env::var(&settings.api_key_env).ok().filter(|k| !k.is_empty());
        if require_key && api_key.is_none() {
            return Err(ProviderError::MissingCredentials(settings.api_key_env.clone()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self {
            http,
            base_url: settings.base_url.trim_end_matches('/').to_string(),
            api_key,
        })
    }

    pub(crate) fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = format!("{}{}", self.base_url, path);
        let mut req = self.http.post(&url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string())),
            429 => Err(ProviderError::RateLimited(error_message(&text))),
            500..=599 => Err(ProviderError::Server {
                status,
                message: error_message(&text),
            }),
            _ => Err(ProviderError::Rejected {
                status,
                message: error_message(&text),
            }),
        }
    }
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v.pointer("/error/message").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| body.chars().take(200).collect())
}
