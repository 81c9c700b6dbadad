//! Application configuration.
//!
//! Values are resolved in this order, later sources winning: built-in
//! defaults, the TOML config file, `MATHQA_*` environment variables, command
//! line flags. The provider API key is never part of the configuration; only
//! the name of the environment variable that holds it is.

use std::path::{Path, PathBuf};

use mathqa_core::campaign::CampaignConfig;
use mathqa_core::http::ProviderSettings;
use mathqa_core::retrieval::ExpansionScope;
use mathqa_core::retry::RetryPolicy;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub base_url: String,
    pub chat_model: String,
    pub embedding_model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com".into(),
            chat_model: "gpt-3.5-turbo-0613".into(),
            embedding_model: "text-embedding-ada-002".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub addr: String,
    /// Name of the environment variable holding the admin token. Admin
    /// routes are disabled when it is unset.
    pub admin_token_env: String,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            admin_token_env: "MATHQA_ADMIN_TOKEN".into(),
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub data_dir: PathBuf,
    /// Root seed; every stage derives its own from it.
    pub seed: u64,
    /// Retrieved-document budget in tokens.
    pub token_budget: usize,
    pub expansion_scope: ExpansionScope,
    pub include_titles: bool,
    pub parallelism: usize,
    /// Total provider attempts per request.
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub provider: ProviderConfig,
    pub campaign: CampaignConfig,
    pub server: ServerConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            seed: 0,
            token_budget: 3000,
            expansion_scope: ExpansionScope::Section,
            include_titles: true,
            parallelism: 4,
            max_attempts: 5,
            initial_backoff_ms: 500,
            provider: ProviderConfig::default(),
            campaign: CampaignConfig::study_layout(),
            server: ServerConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{name}: cannot parse `{value}`")]
    Env { name: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

/// Values that may come from flags or the environment. `None` leaves the
/// lower-precedence value in place.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub token_budget: Option<usize>,
    pub parallelism: Option<usize>,
    pub max_attempts: Option<u32>,
    pub base_url: Option<String>,
    pub chat_model: Option<String>,
    pub embedding_model: Option<String>,
    pub api_key_env: Option<String>,
}

/// Environment variables read by [`Overrides::from_env`], with the field each sets.
pub const ENV_VARS: [&str; 9] = [
    "MATHQA_DATA_DIR",
    "MATHQA_SEED",
    "MATHQA_TOKEN_BUDGET",
    "MATHQA_PARALLELISM",
    "MATHQA_MAX_ATTEMPTS",
    "MATHQA_BASE_URL",
    "MATHQA_CHAT_MODEL",
    "MATHQA_EMBEDDING_MODEL",
    "MATHQA_API_KEY_ENV",
];

fn parsed<T: std::str::FromStr>(env: &dyn Fn(&str) -> Option<String>, name: &str) -> Result<Option<T>, ConfigError> {
    match env(name) {
        None => Ok(None),
        Some(v) => v.trim().parse().map(Some).map_err(|_| ConfigError::Env {
            name: name.to_string(),
            value: v,
        }),
    }
}

impl Overrides {
    pub fn from_env(env: &dyn Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        Ok(Self {
            data_dir: env("MATHQA_DATA_DIR").map(PathBuf::from),
            seed: parsed(env, "MATHQA_SEED")?,
            token_budget: parsed(env, "MATHQA_TOKEN_BUDGET")?,
            parallelism: parsed(env, "MATHQA_PARALLELISM")?,
            max_attempts: parsed(env, "MATHQA_MAX_ATTEMPTS")?,
            base_url: env("MATHQA_BASE_URL"),
            chat_model: env("MATHQA_CHAT_MODEL"),
            embedding_model: env("MATHQA_EMBEDDING_MODEL"),
            api_key_env: env("MATHQA_API_KEY_ENV"),
        })
    }

    pub fn apply(&self, cfg: &mut AppConfig) {
        if let Some(v) = &self.data_dir {
            cfg.data_dir = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.token_budget {
            cfg.token_budget = v;
        }
        if let Some(v) = self.parallelism {
            cfg.parallelism = v;
        }
        if let Some(v) = self.max_attempts {
            cfg.max_attempts = v;
        }
        if let Some(v) = &self.base_url {
            cfg.provider.base_url = v.clone();
        }
        if let Some(v) = &self.chat_model {
            cfg.provider.chat_model = v.clone();
        }
        if let Some(v) = &self.embedding_model {
            cfg.provider.embedding_model = v.clone();
        }
        if let Some(v) = &self.api_key_env {
            cfg.provider.api_key_env = v.clone();
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Defaults, then `file` (if any), then the environment, then `flags`.
    pub fn resolve(
        file: Option<&Path>,
        env: &dyn Fn(&str) -> Option<String>,
        flags: &Overrides,
    ) -> Result<Self, ConfigError> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text, path)?
            }
            None => Self::default(),
        };
        Overrides::from_env(env)?.apply(&mut cfg);
        flags.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.token_budget == 0 {
            return Err(ConfigError::Invalid("token_budget must be greater than 0".into()));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        if self.max_attempts == 0 {
            return Err(ConfigError::Invalid("max_attempts must be at least 1".into()));
        }
        if self.provider.api_key_env.trim().is_empty() {
            return Err(ConfigError::Invalid(
                "provider.api_key_env must name an environment variable".into(),
            ));
        }
        Ok(())
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            initial_delay_ms: self.initial_backoff_ms,
            ..RetryPolicy::default()
        }
    }

    pub fn chat_settings(&self) -> ProviderSettings {
        self.provider_settings(&self.provider.chat_model)
    }

    pub fn embedding_settings(&self) -> ProviderSettings {
        self.provider_settings(&self.provider.embedding_model)
    }

    fn provider_settings(&self, model: &str) -> ProviderSettings {
        ProviderSettings {
            base_url: self.provider.base_url.clone(),
            model: model.to_string(),
            api_key_env: self.provider.api_key_env.clone(),
            timeout_secs: self.provider.timeout_secs,
        }
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }
}

/// Stage-specific seed: the first 8 bytes of SHA-256 over the root seed and
/// the stage name.
pub fn derive_seed(root: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
