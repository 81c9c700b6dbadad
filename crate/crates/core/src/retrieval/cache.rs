//! Content-addressed embedding cache persisted as append-only JSONL.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    model_id: String,
    values: Vec<f32>,
}

#[derive(Debug, Default)]
struct Inner {
    entries: HashMap<String, Vec<f32>>,
    file: Option<File>,
}

/// Maps `sha256(model_id, text)` to a vector. Writes are serialized.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a cache file. Truncated trailing lines from an
    /// interrupted write are ignored.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(&path)?).lines() {
                let line = line?;
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(entry) => {
                        entries.insert(entry.key, entry.values);
                    }
                    Err(e) if !line.trim().is_empty() => log::warn!("skipping bad cache line: {e}"),
                    Err(_) => {}
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        let needs_newline = std::fs::read(&path)?.last().is_some_and(|b| *b != b'\n');
        if needs_newline {
            writeln!(file)?;
        }
        Ok(Self {
            path: Some(path),
            inner: Mutex::new(Inner {
                entries,
                file: Some(file),
            }),
        })
    }

    pub fn key(model_id: &str, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(model_id.as_bytes());
        h.update([0]);
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn get(&self, model_id: &str, text: &str) -> Option<Vec<f32>> {
        let inner = self.inner.lock().expect("cache lock");
        inner.entries.get(&Self::key(model_id, text)).cloned()
    }

    pub fn insert(&self, model_id: &str, text: &str, values: &[f32]) -> io::Result<()> {
        let key = Self::key(model_id, text);
        let mut inner = self.inner.lock().expect("cache lock");
        if inner.entries.contains_key(&key) {
            return Ok(());
        }
        if let Some(file) = inner.file.as_mut() {
            let line = serde_json::to_string(&CacheLine {
                key: key.clone(),
                model_id: model_id.to_string(),
                values: values.to_vec(),
            })?;
            writeln!(file, "{line}")?;
            file.flush()?;
        }
        inner.entries.insert(key, values.to_vec());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = EmbeddingCache::open(&path).unwrap();
            cache.insert("m", "hello", &[1.0, 2.0]).unwrap();
            cache.insert("m", "hello", &[9.0, 9.0]).unwrap();
            cache.insert("other", "hello", &[3.0]).unwrap();
        }
        std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .unwrap()
            .write_all(b"{\"key\":\"trunc")
            .unwrap();
        let cache = EmbeddingCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get("m", "hello"), Some(vec![1.0, 2.0]));
        assert_eq!(cache.get("other", "hello"), Some(vec![3.0]));
        assert_eq!(cache.get("m", "bye"), None);
        cache.insert("m", "bye", &[4.0]).unwrap();
        drop(cache);
        assert_eq!(EmbeddingCache::open(&path).unwrap().len(), 3);
    }
}
