//! Where each stage reads and writes, and change-aware file output.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Default artifact locations under the data directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub data_dir: PathBuf,
}

impl Layout {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
        }
    }

    pub fn corpus(&self) -> PathBuf {
        self.data_dir.join("corpus.json")
    }

    pub fn index(&self) -> PathBuf {
        self.data_dir.join("index.json")
    }

    pub fn embedding_cache(&self) -> PathBuf {
        self.data_dir.join("embeddings.jsonl")
    }

    pub fn run(&self) -> PathBuf {
        self.data_dir.join("run.jsonl")
    }

    pub fn scores(&self) -> PathBuf {
        self.data_dir.join("scores.csv")
    }

    pub fn campaigns(&self) -> PathBuf {
        self.data_dir.join("campaigns")
    }

    pub fn campaign(&self, id: &str) -> PathBuf {
        self.campaigns().join(format!("{id}.jsonl"))
    }

    pub fn judgments(&self) -> PathBuf {
        self.data_dir.join("judgments")
    }

    pub fn report(&self) -> PathBuf {
        self.data_dir.join("report.json")
    }

    pub fn report_table(&self) -> PathBuf {
        self.data_dir.join("correlations.csv")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ProviderCalls {
    pub embeddings: usize,
    pub chat: usize,
}

impl ProviderCalls {
    pub fn total(&self) -> usize {
        self.embeddings + self.chat
    }
}

/// What one subcommand did.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Outcome {
    pub command: String,
    pub provider_calls: ProviderCalls,
    pub written: Vec<PathBuf>,
    pub unchanged: Vec<PathBuf>,
}

impl Outcome {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            ..Self::default()
        }
    }

    /// Writes `bytes` to `path` unless the file already holds exactly them.
    /// New content goes to a sibling temp file first and is renamed into place.
    pub fn put(&mut self, path: &Path, bytes: &[u8]) -> io::Result<()> {
        if fs::read(path).ok().as_deref() == Some(bytes) {
            self.unchanged.push(path.to_path_buf());
            return Ok(());
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    /// Records `path` as written or unchanged by comparing before/after bytes.
    pub fn touched(&mut self, path: &Path, before: Option<Vec<u8>>) {
        if fs::read(path).ok() == before {
            self.unchanged.push(path.to_path_buf());
        } else {
            self.written.push(path.to_path_buf());
        }
    }
}
