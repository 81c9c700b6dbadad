#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mathqa_app::{run, AppError, Outcome};

/// A synthetic textbook: 3 chapters × 3 sections × `per_section`
/// subsections, each about one invented concept.
pub fn textbook(per_section: usize) -> String {
    let mut out = String::new();
    let mut n = 0;
    for c in 1..=3 {
        out.push_str(&format!("# Chapter {c}\n\n"));
        for s in 1..=3 {
            out.push_str(&format!("## Section {c}.{s}\n\n"));
            for _ in 0..per_section {
                out.push_str(&format!(
                    "### Topic {n}\n\nA concept{n} is a way to group factors of kind {n}. \
                     We write concept{n} when the numbers share a pattern.\n\n\
                     Example {n}: find the concept{n} of twelve and eighteen.\n\n"
                ));
                n += 1;
            }
        }
    }
    out
}

/// `{id, text}` lines asking about concepts 0..n.
pub fn queries(n: usize) -> String {
    (0..n)
        .map(|i| format!("{{\"id\":\"q{i:02}\",\"text\":\"what is a concept{i}\"}}\n"))
        .collect()
}

pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub env: BTreeMap<String, String>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::with_queries(6)
    }

    /// Writes a textbook with enough subsections for `n` queries and the queries file.
    pub fn with_queries(n: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("book.txt"), textbook(n.div_ceil(9).max(2))).unwrap();
        fs::write(dir.path().join("queries.jsonl"), queries(n)).unwrap();
        Self {
            dir,
            env: BTreeMap::new(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn data(&self) -> PathBuf {
        self.path("data")
    }

    /// Runs `mathqa --data-dir <tmp>/data <args>` with this workspace's env.
    pub fn run(&self, args: &[&str]) -> (Result<Outcome, AppError>, String) {
        let mut argv: Vec<String> = vec!["mathqa".into(), "--data-dir".into(), self.data().display().to_string()];
        argv.extend(args.iter().map(|a| a.to_string()));
        let env = self.env.clone();
        let mut out = Vec::new();
        let r = run(argv, &move |k| env.get(k).cloned(), &mut out);
        (r, String::from_utf8(out).unwrap())
    }

    pub fn ok(&self, args: &[&str]) -> (Outcome, String) {
        match self.run(args) {
            (Ok(o), s) => (o, s),
            (Err(e), s) => panic!("{args:?} failed: {e}\n{s}"),
        }
    }

    /// ingest, embed and generate with both mocks.
    pub fn generate(&self) {
        let book = self.path("book.txt").display().to_string();
        let queries = self.path("queries.jsonl").display().to_string();
        self.ok(&["ingest", "--corpus", &book]);
        self.ok(&["embed", "--mock-embeddings"]);
        self.ok(&["generate", "--queries", &queries, "--mock-llm", "--mock-embeddings"]);
    }
}

/// Every file under `dir` with its bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.clone(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

const LABELS: [&str; 4] = ["none", "low", "high", "ir"];

/// Condition-revealing keys or values anywhere in `v`.
pub fn condition_leaks(v: &serde_json::Value) -> Vec<String> {
    let mut found = Vec::new();
    walk(v, "$", &mut found);
    found
}

fn walk(v: &serde_json::Value, at: &str, found: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, child) in map {
                let lower = k.to_ascii_lowercase();
                if ["condition", "shuffle", "guidance"].iter().any(|w| lower.contains(w)) {
                    found.push(format!("{at}.{k}"));
                }
                walk(child, &format!("{at}.{k}"), found);
            }
        }
        serde_json::Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                walk(child, &format!("{at}[{i}]"), found);
            }
        }
        serde_json::Value::String(s) => {
            let lower = s.trim().to_ascii_lowercase();
            if LABELS.contains(&lower.as_str()) || lower.contains("guidance") {
                found.push(format!("{at} = {s:?}"));
            }
        }
        _ => {}
    }
}
