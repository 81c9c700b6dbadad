//! Lexical groundedness of responses against their retrieved documents.
//!
//! Tokens are normalized SQuAD-style: lower-cased, with every character that
//! is neither alphanumeric nor whitespace deleted, the English articles
//! `a`/`an`/`the` dropped (configurable) and whitespace collapsed.

mod external;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::{GuidanceCondition, RunArtifact};
use crate::registry::Registry;

pub use external::{external_metric, ExternalMetric, ExternalMetricSpec, ExternalTransport};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("adapter `{adapter}` failed: {message}")]
    Adapter { adapter: String, message: String },
    #[error("adapter `{adapter}` returned {got} scores for {expected} pairs")]
    Arity {
        adapter: String,
        expected: usize,
        got: usize,
    },
    #[error("adapter `{adapter}` timed out after {secs}s")]
    Timeout { adapter: String, secs: u64 },
    #[error("metric table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub remove_articles: bool,
}

impl NormalizationSpec {
    pub fn version(&self) -> String {
        format!("norm-v1{}", if self.remove_articles { "" } else { "-keep-articles" })
    }

    pub fn keep_articles() -> Self {
        Self { remove_articles: false }
    }
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        Self { remove_articles: true }
    }
}

/// Multiset of normalized tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenBag {
    counts: BTreeMap<String, usize>,
}

impl TokenBag {
    pub fn count(&self, token: &str) -> usize {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn distinct(&self) -> impl Iterator<Item = (&str, usize)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Size of the multiset intersection.
    pub fn overlap(&self, other: &TokenBag) -> usize {
        self.counts.iter().map(|(t, n)| (*n).min(other.count(t))).sum()
    }

    /// Drops every token type present in `other`, all occurrences.
    pub fn without_types_of(&self, other: &TokenBag) -> TokenBag {
        TokenBag {
            counts: self
                .counts
                .iter()
                .filter(|(t, _)| !other.counts.contains_key(*t))
                .map(|(t, n)| (t.clone(), *n))
                .collect(),
        }
    }
}

impl<S: Into<String>> FromIterator<S> for TokenBag {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut counts = BTreeMap::new();
        for t in iter {
            *counts.entry(t.into()).or_insert(0) += 1;
        }
        TokenBag { counts }
    }
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

pub fn normalize_with(text: &str, spec: &NormalizationSpec) -> TokenBag {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !(spec.remove_articles && ARTICLES.contains(t)))
        .collect()
}

pub fn normalize(text: &str) -> TokenBag {
    normalize_with(text, &NormalizationSpec::default())
}

fn bag_f1(response: &TokenBag, knowledge: &TokenBag) -> f64 {
    if response.is_empty() || knowledge.is_empty() {
        return 0.0;
    }
    let common = response.overlap(knowledge);
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / response.total() as f64;
    let recall = common as f64 / knowledge.total() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-bag F1 between a response and the knowledge text.
pub fn knowledge_f1_with(response: &str, knowledge: &str, spec: &NormalizationSpec) -> f64 {
    bag_f1(&normalize_with(response, spec), &normalize_with(knowledge, spec))
}

pub fn knowledge_f1(response: &str, knowledge: &str) -> f64 {
    knowledge_f1_with(response, knowledge, &NormalizationSpec::default())
}

/// Knowledge F1 after removing from the response every token type that also
/// occurs in the query, so that repeating the question earns nothing.
pub fn kf1pp_with(response: &str, knowledge: &str, query: &str, spec: &NormalizationSpec) -> f64 {
    let filtered = normalize_with(response, spec).without_types_of(&normalize_with(query, spec));
    bag_f1(&filtered, &normalize_with(knowledge, spec))
}

pub fn kf1pp(response: &str, knowledge: &str, query: &str) -> f64 {
    kf1pp_with(response, knowledge, query, &NormalizationSpec::default())
}

#[derive(Debug, Clone, Copy)]
pub struct MetricInput<'a> {
    pub response: &'a str,
    pub knowledge: &'a str,
    pub query: &'a str,
}

pub trait GroundednessMetric: Send + Sync {
    fn name(&self) -> &str;

    /// Identifies the exact definition (including normalization).
    fn version(&self) -> String;

    fn score_batch(&self, items: &[MetricInput<'_>]) -> Result<Vec<f64>, MetricError>;
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeF1 {
    pub normalization: NormalizationSpec,
}

impl GroundednessMetric for KnowledgeF1 {
    fn name(&self) -> &str {
        "knowledge_f1"
    }

    fn version(&self) -> String {
        format!("knowledge_f1-v1/{}", self.normalization.version())
    }

    fn score_batch(&self, items: &[MetricInput<'_>]) -> Result<Vec<f64>, MetricError> {
        Ok(items
            .iter()
            .map(|i| knowledge_f1_with(i.response, i.knowledge, &self.normalization))
            .collect())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Kf1pp {
    pub normalization: NormalizationSpec,
}

impl GroundednessMetric for Kf1pp {
    fn name(&self) -> &str {
        "kf1pp"
    }

    fn version(&self) -> String {
        format!("kf1pp-v1-type-removal/{}", self.normalization.version())
    }

    fn score_batch(&self, items: &[MetricInput<'_>]) -> Result<Vec<f64>, MetricError> {
        Ok(items
            .iter()
            .map(|i| kf1pp_with(i.response, i.knowledge, i.query, &self.normalization))
            .collect())
    }
}

#[derive(Debug, Clone, Default)]
pub struct MetricSettings {
    pub normalization: NormalizationSpec,
}

/// Native metrics by name. External adapters are added with
/// [`Registry::register`] under their own names.
pub fn metrics() -> Registry<dyn GroundednessMetric, MetricSettings> {
    let mut registry: Registry<dyn GroundednessMetric, MetricSettings> = Registry::new("metric");
    registry.register("knowledge_f1", |s| {
        Ok(Box::new(KnowledgeF1 {
            normalization: s.normalization.clone(),
        }))
    });
    registry.register("kf1pp", |s| {
        Ok(Box::new(Kf1pp {
            normalization: s.normalization.clone(),
        }))
    });
    registry
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub query_id: String,
    pub condition: GuidanceCondition,
    pub metric: String,
    pub version: String,
    /// `None` when the metric was unavailable for this row.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn get(&self, query_id: &str, condition: GuidanceCondition, metric: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.query_id == query_id && r.condition == condition && r.metric == metric)
    }

    pub fn metric_names(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.rows
            .iter()
            .filter(|r| seen.insert(r.metric.as_str()))
            .map(|r| r.metric.as_str())
            .collect()
    }

    /// (query_id, condition) → score for one metric, available rows only.
    pub fn scores(&self, metric: &str) -> HashMap<(String, GuidanceCondition), f64> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .filter_map(|r| r.score.map(|s| ((r.query_id.clone(), r.condition), s)))
            .collect()
    }

    pub fn to_csv(&self) -> Result<String, MetricError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["query_id", "condition", "metric", "version", "score"])?;
        for r in &self.rows {
            let score = r.score.map(|s| s.to_string()).unwrap_or_default();
            w.write_record([r.query_id.as_str(), r.condition.as_str(), &r.metric, &r.version, &score])?;
        }
        let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self, MetricError> {
        let mut rows = Vec::new();
        for (i, rec) in csv::Reader::from_reader(text.as_bytes()).records().enumerate() {
            let rec = rec?;
            let field = |k: usize| rec.get(k).unwrap_or_default();
            let parse_err = |message: String| MetricError::Parse { line: i + 2, message };
            let condition = field(1).parse().map_err(parse_err)?;
            let score = match field(4) {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|e| parse_err(e.to_string()))?),
            };
            rows.push(MetricRow {
                query_id: field(0).to_string(),
                condition,
                metric: field(2).to_string(),
                version: field(3).to_string(),
                score,
            });
        }
        Ok(Self { rows })
    }

    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, MetricError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            rows.push(serde_json::from_str(line).map_err(|e| MetricError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Self { rows })
    }

    /// Reads `.csv` or `.jsonl` by extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "jsonl") {
            Self::from_jsonl(&text)
        } else {
            Self::from_csv(&text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedRecord {
    pub query_id: String,
    pub condition: GuidanceCondition,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnavailableMetric {
    pub metric: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreOutcome {
    pub table: MetricTable,
    pub skipped: Vec<SkippedRecord>,
    pub unavailable: Vec<UnavailableMetric>,
}

/// Scores every successful record with every metric. All conditions of a
/// query (including `none`) are scored against that query's retrieved
/// document. Failed generations and queries without any retrieval are
/// skipped; a failing metric yields rows with no score.
pub fn score_run(run: &RunArtifact, metrics: &[&dyn GroundednessMetric]) -> ScoreOutcome {
    let mut outcome = ScoreOutcome::default();
    let mut scored = Vec::new();
    for r in &run.records {
        if !r.is_ok() {
            outcome.skipped.push(SkippedRecord {
                query_id: r.query_id.clone(),
                condition: r.condition,
                reason: "generation failed".into(),
            });
            continue;
        }
        let Some(doc) = r.retrieved.as_ref().or_else(|| run.document_for(&r.query_id)) else {
            outcome.skipped.push(SkippedRecord {
                query_id: r.query_id.clone(),
                condition: r.condition,
                reason: "no retrieved document for this query".into(),
            });
            continue;
        };
        scored.push((r, doc));
    }
    let inputs: Vec<MetricInput<'_>> = scored
        .iter()
        .map(|(r, doc)| MetricInput {
            response: &r.response_text,
            knowledge: &doc.text,
            query: &r.query_text,
        })
        .collect();

    let mut per_metric = Vec::with_capacity(metrics.len());
    for m in metrics {
        let scores = match m.score_batch(&inputs) {
            Ok(s) if s.len() == inputs.len() => Some(s),
            Ok(s) => {
                outcome.unavailable.push(UnavailableMetric {
                    metric: m.name().to_string(),
                    error: format!("returned {} scores for {} records", s.len(), inputs.len()),
                });
                None
            }
            Err(e) => {
                outcome.unavailable.push(UnavailableMetric {
                    metric: m.name().to_string(),
                    error: e.to_string(),
                });
                None
            }
        };
        per_metric.push(scores);
    }
    for (i, (r, _)) in scored.iter().enumerate() {
        for (m, scores) in metrics.iter().zip(&per_metric) {
            outcome.table.rows.push(MetricRow {
                query_id: r.query_id.clone(),
                condition: r.condition,
                metric: m.name().to_string(),
                version: m.version(),
                score: scores.as_ref().map(|s| s[i]),
            });
        }
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::{CellStatus, GenerationRecord, SamplingParams, RUN_SCHEMA_VERSION};
    use crate::retrieval::RetrievedDocument;
    use proptest::prelude::*;

    fn bag(pairs: &[(&str, usize)]) -> TokenBag {
        pairs
            .iter()
            .flat_map(|(t, n)| std::iter::repeat_n(t.to_string(), *n))
            .collect()
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize("The Area!"), bag(&[("area", 1)]));
        assert_eq!(normalize(""), TokenBag::default());
        assert_eq!(
            normalize("Pi r squared, pi R SQUARED."),
            bag(&[("pi", 2), ("r", 2), ("squared", 2)])
        );
        assert_eq!(
            normalize_with("The Area!", &NormalizationSpec::keep_articles()),
            bag(&[("the", 1), ("area", 1)])
        );
        assert_eq!(normalize("don't  stop"), bag(&[("dont", 1), ("stop", 1)]));
    }

    #[test]
    fn knowledge_f1_examples() {
        assert_eq!(knowledge_f1("area of circles", "area of circles"), 1.0);
        assert_eq!(knowledge_f1("apples", "oranges"), 0.0);
        let f = knowledge_f1("pi r squared", "area equals pi times r squared");
        assert!((f - 2.0 / 3.0).abs() < 1e-4);
        assert_eq!(knowledge_f1("", "x"), 0.0);
    }

    #[test]
    fn kf1pp_examples() {
        assert_eq!(kf1pp("area of circles", "area of circles", "why"), 1.0);
        assert_eq!(
            kf1pp("what is a monomial", "monomials have one term", "what is monomial"),
            0.0
        );

        let q = "what is the area of a circle";
        let r = "the area of a circle is pi r squared";
        let k = "area of a circle equals pi times r squared";
        // Hand computation: filtered response {pi, r, squared}; knowledge has 9 tokens.
        let keep = NormalizationSpec::keep_articles();
        assert!((kf1pp_with(r, k, q, &keep) - 0.5).abs() < 1e-4);
        // With article removal the knowledge bag has 8 tokens: 2·(3/8)/(1+3/8) = 6/11.
        assert!((kf1pp(r, k, q) - 6.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn kf1pp_score_itself_is_not_monotone_in_query() {
        // Dropping an off-document response token raises precision.
        let before = kf1pp("pi apple", "pi", "");
        let after = kf1pp("pi apple", "pi", "apple");
        assert!((before - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(after, 1.0);
    }

    /// Bag F1 over plain token lists using repeated linear search.
    fn oracle_f1(response: &[String], knowledge: &[String]) -> f64 {
        if response.is_empty() || knowledge.is_empty() {
            return 0.0;
        }
        let mut pool: Vec<&String> = knowledge.iter().collect();
        let mut common = 0usize;
        for t in response {
            if let Some(i) = pool.iter().position(|k| *k == t) {
                pool.remove(i);
                common += 1;
            }
        }
        if common == 0 {
            return 0.0;
        }
        let p = common as f64 / response.len() as f64;
        let r = common as f64 / knowledge.len() as f64;
        2.0 * p * r / (p + r)
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(
            prop::sample::select(vec!["area", "pi", "circle", "radius", "sum", "two", "of", "is"]),
            0..12,
        )
        .prop_map(|v| v.into_iter().map(str::to_string).collect())
    }

    proptest! {
        #[test]
        fn metrics_match_list_oracle(r in words(), k in words(), q in words()) {
            let (rt, kt, qt) = (r.join(" "), k.join(" "), q.join(" "));
            prop_assert!((knowledge_f1(&rt, &kt) - oracle_f1(&r, &k)).abs() < 1e-12);
            let filtered: Vec<String> = r.iter().filter(|t| !q.contains(t)).cloned().collect();
            prop_assert!((kf1pp(&rt, &kt, &qt) - oracle_f1(&filtered, &k)).abs() < 1e-12);
        }

        #[test]
        fn kf1pp_properties(r in words(), k in words(), q in words(), extra in words()) {
            let (rt, kt, qt) = (r.join(" "), k.join(" "), q.join(" "));
            let s = kf1pp(&rt, &kt, &qt);
            prop_assert!((0.0..=1.0).contains(&s));
            if !r.iter().any(|t| q.contains(t)) {
                prop_assert_eq!(s, knowledge_f1(&rt, &kt));
            }
            // Case and punctuation do not matter.
            let shouted = format!("{}!", rt.to_uppercase());
            prop_assert_eq!(kf1pp(&shouted, &kt, &qt), s);
            // A larger query only removes more of the response: the filtered bag
            // and its overlap with the knowledge shrink monotonically.
            let bigger = format!("{qt} {}", extra.join(" "));
            let resp = normalize(&rt);
            let know = normalize(&kt);
            let small_f = resp.without_types_of(&normalize(&qt));
            let big_f = resp.without_types_of(&normalize(&bigger));
            prop_assert!(big_f.total() <= small_f.total());
            prop_assert!(big_f.overlap(&know) <= small_f.overlap(&know));
            // Covering every response type always scores zero.
            prop_assert_eq!(kf1pp(&rt, &kt, &format!("{qt} {rt}")), 0.0);
        }
    }

    fn record(
        qid: &str,
        condition: GuidanceCondition,
        response: &str,
        doc: Option<&str>,
        ok: bool,
    ) -> GenerationRecord {
        GenerationRecord {
            schema_version: RUN_SCHEMA_VERSION,
            query_id: qid.into(),
            query_text: "what is area".into(),
            condition,
            retrieved: doc.map(|t| RetrievedDocument {
                matched_subsection_id: "s".into(),
                included_segment_ids: vec!["s".into()],
                text: t.into(),
                token_count: 1,
                similarity: 1.0,
                truncated: false,
            }),
            prompt: vec![],
            response_text: response.into(),
            finish_reason: None,
            model_id: "m".into(),
            sampling: SamplingParams::default(),
            timestamp: String::new(),
            status: if ok {
                CellStatus::Ok
            } else {
                CellStatus::Failed { error: "x".into() }
            },
            request: None,
            response: None,
        }
    }

    struct Broken;

    impl GroundednessMetric for Broken {
        fn name(&self) -> &str {
            "bertscore"
        }
        fn version(&self) -> String {
            "ext".into()
        }
        fn score_batch(&self, _: &[MetricInput<'_>]) -> Result<Vec<f64>, MetricError> {
            Err(MetricError::Adapter {
                adapter: "bertscore".into(),
                message: "exit 1".into(),
            })
        }
    }

    #[test]
    fn score_run_uses_query_document_for_none() {
        let run = RunArtifact::from_records([
            record("q1", GuidanceCondition::None, "area is space inside", None, true),
            record("q1", GuidanceCondition::Low, "", Some("area is space inside"), true),
            record("q1", GuidanceCondition::High, "x", Some("area is space inside"), false),
            record("q2", GuidanceCondition::None, "lonely", None, true),
        ]);
        let kf = Kf1pp::default();
        let out = score_run(&run, &[&kf, &Broken]);
        assert_eq!(out.table.rows.len(), 4);
        let none = out.table.get("q1", GuidanceCondition::None, "kf1pp").unwrap();
        // Query removes {area, is}: P = 2/2, R = 2/4.
        assert!((none.score.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            out.table.get("q1", GuidanceCondition::Low, "kf1pp").unwrap().score,
            Some(0.0)
        );
        assert_eq!(
            out.table.get("q1", GuidanceCondition::Low, "bertscore").unwrap().score,
            None
        );
        assert_eq!(out.skipped.len(), 2);
        assert_eq!(out.unavailable.len(), 1);

        let csv = out.table.to_csv().unwrap();
        assert!(csv.starts_with("query_id,condition,metric,version,score\n"));
        assert_eq!(MetricTable::from_csv(&csv).unwrap(), out.table);
        assert_eq!(MetricTable::from_jsonl(&out.table.to_jsonl()).unwrap(), out.table);
        assert!(score_run(&RunArtifact::default(), &[&kf]).table.rows.is_empty());
    }

    #[test]
    fn registry_builds_native_metrics() {
        let reg = metrics();
        let m = reg.build("kf1pp", &MetricSettings::default()).unwrap();
        assert_eq!(m.name(), "kf1pp");
        assert!(reg.build("bleurt", &MetricSettings::default()).is_err());
    }
}
