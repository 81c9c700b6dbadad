//! Long-format CSV for judgments, used both for anonymized export and for
//! importing annotations collected elsewhere.
//!
//! Response judgments: one row per (query, annotator, condition) with columns
//! `query_id,annotator_id,condition,rank,groundedness`. `rank` is 1 (best) to
//! 3 and may be blank when only groundedness was collected; `groundedness` is
//! `0|1|2` or `none|partial|perfect`. Conditions may be written `none`,
//! `low`, `high` or `no guidance`, `low guidance`, `high guidance`.
//!
//! Relevance judgments: `query_id,annotator_id,relevance` with `0..=3` or
//! `wrong|topic|partial|perfect`.
//!
//! Header names are case-insensitive; `query` and `annotator` are accepted as
//! aliases.

use std::collections::{BTreeMap, HashMap};

use super::{CampaignError, GroundednessJudgment, Judgments, RankingJudgment, RelevanceJudgment};
use crate::generation::GuidanceCondition;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgmentCsv {
    pub responses: String,
    pub relevance: String,
}

fn parse_err(line: usize, message: impl Into<String>) -> CampaignError {
    CampaignError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_condition(s: &str) -> Option<GuidanceCondition> {
    let s = s.trim().to_ascii_lowercase();
    let s = s.strip_suffix(" guidance").unwrap_or(&s);
    match s {
        "no" => Some(GuidanceCondition::None),
        other => other.parse().ok().filter(|c| GuidanceCondition::RANKED.contains(c)),
    }
}

fn parse_ordinal(s: &str, labels: &[&str]) -> Option<u8> {
    let s = s.trim().to_ascii_lowercase();
    if let Ok(n) = s.parse::<u8>() {
        return (usize::from(n) < labels.len()).then_some(n);
    }
    labels.iter().position(|l| *l == s).map(|i| i as u8)
}

const GROUNDEDNESS_LABELS: [&str; 3] = ["none", "partial", "perfect"];
const RELEVANCE_LABELS: [&str; 4] = ["wrong", "topic", "partial", "perfect"];

fn column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

/// Reads either CSV layout, chosen by its header.
pub fn import_judgments_csv(text: &str) -> Result<Judgments, CampaignError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let q = column(&headers, &["query_id", "query"]).ok_or_else(|| parse_err(1, "missing query_id column"))?;
    let a =
        column(&headers, &["annotator_id", "annotator"]).ok_or_else(|| parse_err(1, "missing annotator_id column"))?;
    let cond = column(&headers, &["condition"]);
    let rel = column(&headers, &["relevance"]);
    let mut out = Judgments::default();

    if let (None, Some(rel)) = (cond, rel) {
        let mut seen = HashMap::new();
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let value = parse_ordinal(&row[rel], &RELEVANCE_LABELS)
                .ok_or_else(|| parse_err(line, format!("bad relevance `{}`", &row[rel])))?;
            if seen.insert((row[q].to_string(), row[a].to_string()), line).is_some() {
                return Err(parse_err(
                    line,
                    "second relevance judgment for this query and annotator",
                ));
            }
            out.relevance.push(RelevanceJudgment {
                query_id: row[q].to_string(),
                annotator_id: row[a].to_string(),
                relevance: value,
            });
        }
        return Ok(out);
    }

    let cond = cond.ok_or_else(|| parse_err(1, "expected a condition or relevance column"))?;
    let rank = column(&headers, &["rank"]);
    let grounded = column(&headers, &["groundedness", "faithfulness"]);
    if rank.is_none() && grounded.is_none() {
        return Err(parse_err(1, "expected rank and/or groundedness columns"));
    }
    let mut order: Vec<(String, String)> = Vec::new();
    let mut ranks: HashMap<(String, String), (usize, BTreeMap<GuidanceCondition, u8>)> = HashMap::new();
    let mut seen = HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let key = (row[q].to_string(), row[a].to_string());
        let c =
            parse_condition(&row[cond]).ok_or_else(|| parse_err(line, format!("bad condition `{}`", &row[cond])))?;
        if seen.insert((key.clone(), c), line).is_some() {
            return Err(parse_err(line, "duplicate row for this query, annotator and condition"));
        }
        if !ranks.contains_key(&key) {
            order.push(key.clone());
        }
        let entry = ranks.entry(key.clone()).or_insert_with(|| (line, BTreeMap::new()));
        if let Some(r) = rank.map(|r| &row[r]).filter(|s| !s.is_empty()) {
            let r: u8 = r
                .parse()
                .ok()
                .filter(|r| (1..=3).contains(r))
                .ok_or_else(|| parse_err(line, format!("bad rank `{r}`")))?;
            entry.1.insert(c, r);
        }
        if let Some(g) = grounded.map(|g| &row[g]).filter(|s| !s.is_empty()) {
            let value = parse_ordinal(g, &GROUNDEDNESS_LABELS)
                .ok_or_else(|| parse_err(line, format!("bad groundedness `{g}`")))?;
            out.groundedness.push(GroundednessJudgment {
                query_id: key.0.clone(),
                annotator_id: key.1.clone(),
                condition: c,
                value,
            });
        }
    }
    for key in order {
        let (line, r) = ranks.remove(&key).expect("keyed above");
        if r.is_empty() {
            continue;
        }
        let mut values: Vec<u8> = r.values().copied().collect();
        values.sort_unstable();
        if r.len() != 3 || values != [1, 2, 3] {
            return Err(parse_err(
                line,
                format!("ranks for {} by {} are not a permutation of 1, 2, 3", key.0, key.1),
            ));
        }
        out.rankings.push(RankingJudgment {
            query_id: key.0,
            annotator_id: key.1,
            ranks: r,
        });
    }
    Ok(out)
}

/// (query, annotator, condition) of one response judgment.
type CellKey<'a> = (&'a str, &'a str, GuidanceCondition);

/// Writes both layouts. With `pseudonymize`, annotator ids become `R1`, `R2`,
/// ... in order of first appearance, consistently across both files.
pub fn export_judgments_csv(judgments: &Judgments, pseudonymize: bool) -> Result<JudgmentCsv, CampaignError> {
    let mut names: HashMap<&str, String> = HashMap::new();
    let ids = judgments
        .rankings
        .iter()
        .map(|r| r.annotator_id.as_str())
        .chain(judgments.groundedness.iter().map(|g| g.annotator_id.as_str()))
        .chain(judgments.relevance.iter().map(|r| r.annotator_id.as_str()));
    for id in ids {
        let next = names.len() + 1;
        names.entry(id).or_insert_with(|| {
            if pseudonymize {
                format!("R{next}")
            } else {
                id.to_string()
            }
        });
    }

    let mut keys: Vec<(&str, &str)> = Vec::new();
    let mut cells: HashMap<CellKey<'_>, (Option<u8>, Option<u8>)> = HashMap::new();
    for r in &judgments.rankings {
        let key = (r.query_id.as_str(), r.annotator_id.as_str());
        if !keys.contains(&key) {
            keys.push(key);
        }
        for (c, rank) in &r.ranks {
            cells.entry((key.0, key.1, *c)).or_default().0 = Some(*rank);
        }
    }
    for g in &judgments.groundedness {
        let key = (g.query_id.as_str(), g.annotator_id.as_str());
        if !keys.contains(&key) {
            keys.push(key);
        }
        cells.entry((key.0, key.1, g.condition)).or_default().1 = Some(g.value);
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["query_id", "annotator_id", "condition", "rank", "groundedness"])?;
    for (qid, aid) in keys {
        for c in GuidanceCondition::RANKED {
            if let Some((rank, g)) = cells.get(&(qid, aid, c)) {
                w.write_record([
                    qid,
                    &names[aid],
                    c.as_str(),
                    &rank.map(|r| r.to_string()).unwrap_or_default(),
                    &g.map(|g| g.to_string()).unwrap_or_default(),
                ])?;
            }
        }
    }
    let responses = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8");

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["query_id", "annotator_id", "relevance"])?;
    for r in &judgments.relevance {
        w.write_record([
            r.query_id.as_str(),
            &names[r.annotator_id.as_str()],
            &r.relevance.to_string(),
        ])?;
    }
    let relevance = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8");
    Ok(JudgmentCsv { responses, relevance })
}
