//! Textbook ingestion into a chapter → section → subsection tree.
//!
//! The input grammar is line-oriented UTF-8 text. A line that starts with one of
//! the configured heading markers followed by a space opens a new segment at the
//! mapped level (by default `# ` chapter, `## ` section, `### ` subsection). Every
//! other line is body text of the most recently opened segment. Non-blank text
//! before the first chapter heading is an error, as is a section outside a
//! chapter or a subsection outside a section.

pub mod tokenizer;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::registry::RegistryError;
pub use tokenizer::{count_tokens, tokenizers, HeuristicTokenizer, Tokenizer, TokenizerSpec, WhitespaceTokenizer};

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid segment tree: {0}")]
    InvalidTree(String),
    #[error(transparent)]
    Tokenizer(#[from] RegistryError),
    #[error("corpus json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Chapter,
    Section,
    Subsection,
}

impl Level {
    fn depth(self) -> usize {
        match self {
            Level::Chapter => 0,
            Level::Section => 1,
            Level::Subsection => 2,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Chapter => "chapter",
            Level::Section => "section",
            Level::Subsection => "subsection",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub level: Level,
    pub title: String,
    pub body: String,
    pub token_count: usize,
    pub parent_id: Option<String>,
    pub child_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub chapter_marker: String,
    pub section_marker: String,
    pub subsection_marker: String,
    pub tokenizer: TokenizerSpec,
    /// Drop subsections whose title starts with one of `exercise_titles`.
    pub exclude_exercises: bool,
    pub exercise_titles: Vec<String>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            chapter_marker: "#".into(),
            section_marker: "##".into(),
            subsection_marker: "###".into(),
            tokenizer: TokenizerSpec::default(),
            exclude_exercises: false,
            exercise_titles: vec![
                "Exercises".into(),
                "Section Exercises".into(),
                "Practice Makes Perfect".into(),
                "Everyday Math".into(),
                "Writing Exercises".into(),
                "Self Check".into(),
            ],
        }
    }
}

impl CorpusConfig {
    fn heading<'a>(&self, line: &'a str) -> Option<(Level, &'a str)> {
        let mut markers = [
            (self.subsection_marker.as_str(), Level::Subsection),
            (self.section_marker.as_str(), Level::Section),
            (self.chapter_marker.as_str(), Level::Chapter),
        ];
        markers.sort_by_key(|(m, _)| std::cmp::Reverse(m.len()));
        markers.iter().find_map(|(marker, level)| {
            line.strip_prefix(marker)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(|title| (*level, title.trim()))
        })
    }

    fn is_exercise(&self, title: &str) -> bool {
        self.exclude_exercises && self.exercise_titles.iter().any(|t| title.starts_with(t.as_str()))
    }
}

/// Immutable segment tree; segments are stored in document (pre-order) order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SegmentTreeFile", into = "SegmentTreeFile")]
pub struct SegmentTree {
    tokenizer: TokenizerSpec,
    roots: Vec<String>,
    segments: Vec<Segment>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct SegmentTreeFile {
    schema_version: u32,
    tokenizer: TokenizerSpec,
    roots: Vec<String>,
    segments: Vec<Segment>,
}

impl TryFrom<SegmentTreeFile> for SegmentTree {
    type Error = CorpusError;

    fn try_from(file: SegmentTreeFile) -> Result<Self, Self::Error> {
        if file.schema_version != CORPUS_SCHEMA_VERSION {
            return Err(CorpusError::InvalidTree(format!(
                "unsupported schema_version {}",
                file.schema_version
            )));
        }
        SegmentTree::from_parts(file.tokenizer, file.roots, file.segments)
    }
}

impl From<SegmentTree> for SegmentTreeFile {
    fn from(tree: SegmentTree) -> Self {
        SegmentTreeFile {
            schema_version: CORPUS_SCHEMA_VERSION,
            tokenizer: tree.tokenizer,
            roots: tree.roots,
            segments: tree.segments,
        }
    }
}

impl SegmentTree {
    fn from_parts(tokenizer: TokenizerSpec, roots: Vec<String>, segments: Vec<Segment>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(segments.len());
        for (i, seg) in segments.iter().enumerate() {
            if index.insert(seg.id.clone(), i).is_some() {
                return Err(CorpusError::InvalidTree(format!("duplicate id {}", seg.id)));
            }
        }
        let tree = SegmentTree {
            tokenizer,
            roots,
            segments,
            index,
        };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let bad = |msg: String| Err(CorpusError::InvalidTree(msg));
        for root in &self.roots {
            match self.get(root) {
                Some(seg) if seg.level == Level::Chapter && seg.parent_id.is_none() => {}
                Some(_) => return bad(format!("root {root} is not a parentless chapter")),
                None => return bad(format!("root {root} does not resolve")),
            }
        }
        for seg in &self.segments {
            if seg.level == Level::Subsection && !seg.child_ids.is_empty() {
                return bad(format!("subsection {} has children", seg.id));
            }
            for child_id in &seg.child_ids {
                let Some(child) = self.get(child_id) else {
                    return bad(format!("child {child_id} of {} does not resolve", seg.id));
                };
                if child.parent_id.as_deref() != Some(seg.id.as_str()) {
                    return bad(format!("child {child_id} does not point back to {}", seg.id));
                }
                if child.level.depth() <= seg.level.depth() {
                    return bad(format!("child {child_id} is not deeper than {}", seg.id));
                }
            }
            match &seg.parent_id {
                None if seg.level != Level::Chapter => return bad(format!("{} has no parent", seg.id)),
                Some(p) if !self.get(p).is_some_and(|parent| parent.child_ids.contains(&seg.id)) => {
                    return bad(format!("parent {p} does not list {}", seg.id))
                }
                _ => {}
            }
        }
        // Pre-order traversal must visit every segment exactly once, in storage order.
        let order: Vec<&str> = self.preorder_ids();
        if order.len() != self.segments.len() || order.iter().zip(&self.segments).any(|(a, s)| *a != s.id) {
            return bad("segments are not in document order or not all reachable".into());
        }
        if let Ok(tok) = self.tokenizer.resolve() {
            if let Some(seg) = self.segments.iter().find(|s| tok.count(&s.body) != s.token_count) {
                return bad(format!("token_count of {} does not match its body", seg.id));
            }
        }
        Ok(())
    }

    fn preorder_ids(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.segments.len());
        let mut stack: Vec<&str> = self.roots.iter().rev().map(String::as_str).collect();
        while let Some(id) = stack.pop() {
            if out.len() > self.segments.len() {
                break;
            }
            out.push(id);
            if let Some(seg) = self.get(id) {
                stack.extend(seg.child_ids.iter().rev().map(String::as_str));
            }
        }
        out
    }

    pub fn get(&self, id: &str) -> Option<&Segment> {
        self.index.get(id).map(|&i| &self.segments[i])
    }

    /// Document-order position of a segment.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn tokenizer(&self) -> &TokenizerSpec {
        &self.tokenizer
    }

    pub fn roots(&self) -> impl Iterator<Item = &Segment> {
        self.roots.iter().filter_map(|id| self.get(id))
    }

    /// All segments in document order.
    pub fn iter(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn subsections(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.level == Level::Subsection)
    }

    pub fn children(&self, id: &str) -> impl Iterator<Item = &Segment> {
        self.get(id)
            .into_iter()
            .flat_map(|s| s.child_ids.iter())
            .filter_map(|c| self.get(c))
    }

    pub fn parent(&self, id: &str) -> Option<&Segment> {
        self.get(id)
            .and_then(|s| s.parent_id.as_deref())
            .and_then(|p| self.get(p))
    }

    /// Nearest ancestor (or self) at `level`.
    pub fn ancestor_at(&self, id: &str, level: Level) -> Option<&Segment> {
        let mut cur = self.get(id);
        while let Some(seg) = cur {
            if seg.level == level {
                return Some(seg);
            }
            cur = seg.parent_id.as_deref().and_then(|p| self.get(p));
        }
        None
    }

    /// Subsections below `id` in document order.
    pub fn descendant_subsections(&self, id: &str) -> Vec<&Segment> {
        let mut out = Vec::new();
        self.walk(id, &mut |seg| {
            if seg.level == Level::Subsection {
                out.push(seg);
            }
        });
        out
    }

    fn walk<'a>(&'a self, id: &str, visit: &mut dyn FnMut(&'a Segment)) {
        if let Some(seg) = self.get(id) {
            visit(seg);
            for child in &seg.child_ids {
                self.walk(child, visit);
            }
        }
    }

    /// Bodies of the segment and all its descendants, joined by blank lines.
    /// Headings are not included.
    pub fn full_text(&self, id: &str) -> String {
        let mut parts = Vec::new();
        self.walk(id, &mut |seg| {
            if !seg.body.is_empty() {
                parts.push(seg.body.as_str());
            }
        });
        parts.join("\n\n")
    }

    /// Sum of `token_count` over the segment and its descendants.
    pub fn subtree_token_count(&self, id: &str) -> usize {
        let mut total = 0;
        self.walk(id, &mut |seg| total += seg.token_count);
        total
    }

    pub fn to_json(&self) -> Result<String, CorpusError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self, CorpusError> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn summary(&self) -> CorpusSummary {
        let mut chapter_tokens: Vec<usize> = self.roots.iter().map(|r| self.subtree_token_count(r)).collect();
        let mut subsection_tokens: Vec<usize> = self.subsections().map(|s| s.token_count).collect();
        CorpusSummary {
            chapters: self.roots.len(),
            sections: self.segments.iter().filter(|s| s.level == Level::Section).count(),
            subsections: subsection_tokens.len(),
            median_chapter_tokens: median(&mut chapter_tokens),
            median_subsection_tokens: median(&mut subsection_tokens),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub chapters: usize,
    pub sections: usize,
    pub subsections: usize,
    pub median_chapter_tokens: Option<f64>,
    pub median_subsection_tokens: Option<f64>,
}

fn median(values: &mut [usize]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid] as f64
    } else {
        (values[mid - 1] + values[mid]) as f64 / 2.0
    })
}

struct Draft {
    level: Level,
    title: String,
    lines: Vec<String>,
    parent: Option<usize>,
    children: Vec<usize>,
    ordinal: usize,
}

/// Parses a marked-up textbook into a [`SegmentTree`].
pub fn parse_corpus(document: &str, config: &CorpusConfig) -> Result<SegmentTree, CorpusError> {
    let tokenizer: Arc<dyn Tokenizer> = config.tokenizer.resolve()?;
    if document.trim().is_empty() {
        return Err(CorpusError::Empty);
    }

    let mut drafts: Vec<Draft> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    let mut chapter: Option<usize> = None;
    let mut section: Option<usize> = None;
    // Index of the segment receiving body lines; None while inside an excluded block.
    let mut current: Option<usize> = None;
    let mut skipping = false;

    for (lineno, raw) in document.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if let Some((level, title)) = config.heading(line) {
            skipping = false;
            let parent = match level {
                Level::Chapter => None,
                Level::Section => Some(chapter.ok_or_else(|| CorpusError::Malformed {
                    line: line_no,
                    message: format!("section `{title}` appears before any chapter"),
                })?),
                Level::Subsection => Some(section.ok_or_else(|| CorpusError::Malformed {
                    line: line_no,
                    message: format!("subsection `{title}` appears before any section"),
                })?),
            };
            if level == Level::Subsection && config.is_exercise(title) {
                skipping = true;
                current = None;
                continue;
            }
            let ordinal = match parent {
                Some(p) => drafts[p].children.len() + 1,
                None => roots.len() + 1,
            };
            let idx = drafts.len();
            drafts.push(Draft {
                level,
                title: title.to_string(),
                lines: Vec::new(),
                parent,
                children: Vec::new(),
                ordinal,
            });
            match parent {
                Some(p) => drafts[p].children.push(idx),
                None => roots.push(idx),
            }
            match level {
                Level::Chapter => {
                    chapter = Some(idx);
                    section = None;
                }
                Level::Section => section = Some(idx),
                Level::Subsection => {}
            }
            current = Some(idx);
        } else if skipping {
            continue;
        } else if let Some(idx) = current {
            drafts[idx].lines.push(line.to_string());
        } else if !line.trim().is_empty() {
            return Err(CorpusError::Malformed {
                line: line_no,
                message: "text appears before the first chapter heading".into(),
            });
        }
    }

    if drafts.is_empty() {
        return Err(CorpusError::Empty);
    }

    let bodies: Vec<String> = drafts.iter().map(|d| trim_blank_lines(&d.lines)).collect();
    let mut paths: Vec<String> = Vec::with_capacity(drafts.len());
    for d in &drafts {
        let path = match d.parent {
            Some(p) => format!("{}.{}", paths[p], d.ordinal),
            None => d.ordinal.to_string(),
        };
        paths.push(path);
    }
    let ids: Vec<String> = drafts
        .iter()
        .zip(&paths)
        .zip(&bodies)
        .map(|((d, path), body)| segment_id(path, d.level, &d.title, body))
        .collect();

    let segments = drafts
        .iter()
        .zip(bodies)
        .enumerate()
        .map(|(i, (d, body))| Segment {
            id: ids[i].clone(),
            level: d.level,
            title: d.title.clone(),
            token_count: tokenizer.count(&body),
            body,
            parent_id: d.parent.map(|p| ids[p].clone()),
            child_ids: d.children.iter().map(|&c| ids[c].clone()).collect(),
        })
        .collect();

    SegmentTree::from_parts(
        config.tokenizer.clone(),
        roots.into_iter().map(|r| ids[r].clone()).collect(),
        segments,
    )
}

fn trim_blank_lines(lines: &[String]) -> String {
    let start = lines.iter().position(|l| !l.trim().is_empty());
    let end = lines.iter().rposition(|l| !l.trim().is_empty());
    match (start, end) {
        (Some(s), Some(e)) => lines[s..=e].join("\n"),
        _ => String::new(),
    }
}

/// `<path>-<hash8>` where the hash covers level, title and body only, so
/// unchanged segments keep their id when other parts of the book are edited.
fn segment_id(path: &str, level: Level, title: &str, body: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(level.to_string().as_bytes());
    hasher.update([0]);
    hasher.update(title.as_bytes());
    hasher.update([0]);
    hasher.update(body.as_bytes());
    let digest = hasher.finalize();
    format!("{path}-{}", &hex::encode(digest)[..8])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SMALL: &str = "# Whole Numbers\nChapter intro.\n## Introduction to Whole Numbers\n\
        Section intro.\n### Use Place Value\nPlace value names digits.\n\n### Round Whole Numbers\nRounding estimates.\n";

    fn ws_config() -> CorpusConfig {
        CorpusConfig {
            tokenizer: TokenizerSpec::whitespace(),
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn small_document_structure() {
        let tree = parse_corpus(SMALL, &ws_config()).unwrap();
        assert_eq!(tree.len(), 4);
        let root = tree.roots().next().unwrap();
        assert_eq!(root.child_ids.len(), 1);
        let section = tree.get(&root.child_ids[0]).unwrap();
        assert_eq!(section.level, Level::Section);
        assert_eq!(section.child_ids.len(), 2);
        let sub = tree.get(&section.child_ids[1]).unwrap();
        assert_eq!(sub.title, "Round Whole Numbers");
        assert_eq!(sub.body, "Rounding estimates.");
        assert_eq!(sub.token_count, 2);
        assert!(sub.id.starts_with("1.1.2-"));
    }

    #[test]
    fn empty_document_is_error() {
        assert!(matches!(parse_corpus("", &ws_config()), Err(CorpusError::Empty)));
        assert!(matches!(parse_corpus("  \n\n", &ws_config()), Err(CorpusError::Empty)));
    }

    #[test]
    fn subsection_before_section_reports_line() {
        let doc = "# Ch\ntext\n### Orphan\nbody\n";
        match parse_corpus(doc, &ws_config()) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        // A new chapter resets the open section.
        let doc = "# A\n## S\n### ok\n# B\n### orphan\n";
        assert!(matches!(
            parse_corpus(doc, &ws_config()),
            Err(CorpusError::Malformed { line: 5, .. })
        ));
    }

    #[test]
    fn text_before_first_chapter_is_error() {
        assert!(matches!(
            parse_corpus("preface\n# Ch\n", &ws_config()),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn deeper_markers_are_body_text() {
        let tree = parse_corpus("# C\n## S\n### T\n#### Example 1.1\nbody\n", &ws_config()).unwrap();
        let sub = tree.subsections().next().unwrap();
        assert_eq!(sub.body, "#### Example 1.1\nbody");
    }

    #[test]
    fn exercises_excluded_by_flag() {
        let doc = "# C\n## S\n### Learn\nprose\n### Practice Makes Perfect\ndrill 1\ndrill 2\n### More\nmore prose\n";
        let keep = parse_corpus(doc, &ws_config()).unwrap();
        assert_eq!(keep.subsections().count(), 3);
        let cfg = CorpusConfig {
            exclude_exercises: true,
            ..ws_config()
        };
        let dropped = parse_corpus(doc, &cfg).unwrap();
        let titles: Vec<_> = dropped.subsections().map(|s| s.title.as_str()).collect();
        assert_eq!(titles, ["Learn", "More"]);
    }

    #[test]
    fn ids_survive_unrelated_edits() {
        let edited = SMALL.replace("Place value names digits.", "Place value names each digit.");
        let a = parse_corpus(SMALL, &ws_config()).unwrap();
        let b = parse_corpus(&edited, &ws_config()).unwrap();
        let ids_a: Vec<_> = a.iter().map(|s| s.id.clone()).collect();
        let ids_b: Vec<_> = b.iter().map(|s| s.id.clone()).collect();
        assert_eq!(ids_a[0], ids_b[0]);
        assert_eq!(ids_a[1], ids_b[1]);
        assert_ne!(ids_a[2], ids_b[2]);
        assert_eq!(ids_a[3], ids_b[3]);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let tree = parse_corpus(SMALL, &ws_config()).unwrap();
        let json = tree.to_json().unwrap();
        assert!(json.contains("\"child_ids\""));
        assert!(json.contains("\"parent_id\""));
        assert_eq!(SegmentTree::from_json(&json).unwrap(), tree);

        let broken = json.replacen("\"token_count\": 2", "\"token_count\": 7", 1);
        assert!(SegmentTree::from_json(&broken).is_err());
    }

    #[test]
    fn chapter_scope_helpers() {
        let tree = parse_corpus(SMALL, &ws_config()).unwrap();
        let sub = tree.subsections().next().unwrap();
        let chapter = tree.ancestor_at(&sub.id, Level::Chapter).unwrap();
        assert_eq!(chapter.title, "Whole Numbers");
        assert_eq!(tree.descendant_subsections(&chapter.id).len(), 2);
        let summary = tree.summary();
        assert_eq!(summary.subsections, 2);
        assert_eq!(summary.median_subsection_tokens, Some(3.0));
    }

    /// OpenStax Prealgebra in the marker grammar; set MATHQA_OPENSTAX_CORPUS to run.
    #[test]
    fn openstax_median_subsection_near_185_tokens() {
        let Ok(path) = std::env::var("MATHQA_OPENSTAX_CORPUS") else {
            eprintln!("skipped: MATHQA_OPENSTAX_CORPUS not set");
            return;
        };
        let text = std::fs::read_to_string(path).unwrap();
        let tree = parse_corpus(&text, &CorpusConfig::default()).unwrap();
        let median = tree.summary().median_subsection_tokens.unwrap();
        assert!((median - 185.0).abs() <= 0.15 * 185.0, "median {median}");
    }

    fn arb_document() -> impl Strategy<Value = String> {
        let words = prop::collection::vec("[a-z]{1,8}", 0..6).prop_map(|w| w.join(" "));
        let sub = (words.clone(), prop::collection::vec(words.clone(), 0..3));
        let section = (
            words.clone(),
            prop::collection::vec(words.clone(), 0..2),
            prop::collection::vec(sub, 0..4),
        );
        let chapter = (
            words.clone(),
            prop::collection::vec(words, 0..2),
            prop::collection::vec(section, 0..3),
        );
        prop::collection::vec(chapter, 1..3).prop_map(|chapters| {
            let mut doc = String::new();
            for (ct, cb, sections) in chapters {
                doc += &format!("# C {ct}\n{}\n", cb.join("\n"));
                for (st, sb, subs) in sections {
                    doc += &format!("## S {st}\n{}\n", sb.join("\n"));
                    for (tt, tb) in subs {
                        doc += &format!("### T {tt}\n{}\n\n", tb.join("\n"));
                    }
                }
            }
            doc
        })
    }

    fn content_lines(text: &str) -> Vec<String> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::to_string)
            .collect()
    }

    proptest! {
        #[test]
        fn parse_invariants(doc in arb_document()) {
            let tree = parse_corpus(&doc, &ws_config()).unwrap();
            // Bodies in traversal order recover all non-heading text.
            let expected: Vec<String> = content_lines(&doc)
                .into_iter()
                .filter(|l| !l.starts_with('#'))
                .collect();
            let got: Vec<String> = tree.iter().flat_map(|s| content_lines(&s.body)).collect();
            prop_assert_eq!(got, expected);

            for seg in tree.iter() {
                if seg.level == Level::Section {
                    let sub_total: usize = tree.children(&seg.id).map(|c| c.token_count).sum();
                    let full = WhitespaceTokenizer.count(&tree.full_text(&seg.id));
                    prop_assert!(sub_total <= full);
                    prop_assert_eq!(tree.subtree_token_count(&seg.id), full);
                }
            }

            let json = tree.to_json().unwrap();
            let back = SegmentTree::from_json(&json).unwrap();
            prop_assert_eq!(&back, &tree);
            prop_assert_eq!(parse_corpus(&doc, &ws_config()).unwrap(), tree);
        }
    }
}
