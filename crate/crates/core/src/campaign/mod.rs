//! Human annotation campaigns: blinded ranking/groundedness tasks and
//! document-relevance tasks, their assignment to annotators, submission
//! validation, and aggregation back to guidance conditions.

mod io;
mod store;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::generation::{GuidanceCondition, RunArtifact};

pub use io::{export_judgments_csv, import_judgments_csv, JudgmentCsv};
pub use store::{AnnotatorProgress, CampaignStore, Progress};

pub const CAMPAIGN_SCHEMA_VERSION: u32 = 1;

/// Shown in every ranking task, in this slot count.
pub const RANKING_SLOTS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("run is not ready for a campaign: {}", gaps.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    MissingConditions { gaps: Vec<RunGap> },
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error("unknown campaign `{0}`")]
    UnknownCampaign(String),
    #[error("campaign `{0}` already exists")]
    CampaignExists(String),
    #[error("annotator `{0}` is not part of this campaign")]
    UnknownAnnotator(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{task_id}` is not assigned to `{annotator_id}`")]
    NotAssigned { task_id: String, annotator_id: String },
    #[error("invalid submission: {}", errors.iter().map(|e| format!("{}: {}", e.field, e.message)).collect::<Vec<_>>().join("; "))]
    Validation { errors: Vec<FieldError> },
    #[error("task `{task_id}` was already submitted by `{annotator_id}`")]
    Duplicate { task_id: String, annotator_id: String },
    #[error("campaign file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One query that cannot be turned into a task, and what is missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunGap {
    pub query_id: String,
    pub missing: Vec<String>,
}

impl fmt::Display for RunGap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} lacks {}", self.query_id, self.missing.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Rank three responses and judge each one's groundedness.
    #[default]
    Ranking,
    /// Judge how relevant the retrieved document is to the query.
    Relevance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentedResponse {
    /// Zero-based display position.
    pub slot: usize,
    pub text: String,
}

/// One query as assigned to one annotator. Each assignment has its own slot
/// order; `shuffle_map[slot]` is the condition shown in that slot and never
/// leaves the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub kind: TaskKind,
    pub annotator_id: String,
    pub survey: usize,
    pub query_id: String,
    pub query_text: String,
    pub presented_responses: Vec<PresentedResponse>,
    pub document_text: String,
    pub shuffle_map: Vec<GuidanceCondition>,
}

impl AnnotationTask {
    /// The annotator-visible payload.
    pub fn view(&self, position: usize, total: usize) -> TaskView {
        TaskView {
            task_id: self.task_id.clone(),
            kind: self.kind,
            query: self.query_text.clone(),
            responses: self.presented_responses.clone(),
            document: self.document_text.clone(),
            position,
            total,
        }
    }
}

/// What an annotator's browser receives: no condition labels, no query id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub kind: TaskKind,
    pub query: String,
    pub responses: Vec<PresentedResponse>,
    pub document: String,
    /// 1-based index of this task in the annotator's plan.
    pub position: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub kind: TaskKind,
    /// Queries per survey. Empty means one survey with every query.
    pub survey_sizes: Vec<usize>,
    pub annotators: Vec<String>,
    pub min_annotators_per_query: usize,
    pub max_annotators_per_query: usize,
    /// Explicit annotators for each survey. When absent, surveys are
    /// staffed round-robin with `min_annotators_per_query` annotators each.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub survey_annotators: Option<Vec<Vec<String>>>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            kind: TaskKind::Ranking,
            survey_sizes: Vec::new(),
            annotators: Vec::new(),
            min_annotators_per_query: 3,
            max_annotators_per_query: 4,
            survey_annotators: None,
        }
    }
}

impl CampaignConfig {
    /// The four-survey layout used for the 51-query study: surveys of
    /// 15/15/15/6 queries and nine respondents whose per-annotator query
    /// counts are 30, 30, 21, 21, 21, 15, 15, 15 and 6.
    pub fn study_layout() -> Self {
        let a = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        Self {
            kind: TaskKind::Ranking,
            survey_sizes: vec![15, 15, 15, 6],
            annotators: (1..=9).map(|i| format!("A{i}")).collect(),
            min_annotators_per_query: 3,
            max_annotators_per_query: 4,
            survey_annotators: Some(vec![
                a(&["A1", "A2", "A3", "A6"]),
                a(&["A1", "A4", "A7"]),
                a(&["A2", "A5", "A8"]),
                a(&["A3", "A4", "A5", "A9"]),
            ]),
        }
    }

    /// Every annotator judges every query once.
    pub fn relevance(annotators: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let annotators: Vec<String> = annotators.into_iter().map(Into::into).collect();
        Self {
            kind: TaskKind::Relevance,
            min_annotators_per_query: annotators.len(),
            max_annotators_per_query: annotators.len(),
            annotators,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Submission {
    Ranking(AnnotationSubmission),
    Relevance(RelevanceSubmission),
}

impl Submission {
    pub fn task_id(&self) -> &str {
        match self {
            Self::Ranking(s) => &s.task_id,
            Self::Relevance(s) => &s.task_id,
        }
    }

    pub fn annotator_id(&self) -> &str {
        match self {
            Self::Ranking(s) => &s.annotator_id,
            Self::Relevance(s) => &s.annotator_id,
        }
    }
}

/// `ranks[slot]` is 1 (best) to 3; `groundedness[slot]` is None=0,
/// Partial=1, Perfect=2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSubmission {
    pub task_id: String,
    pub annotator_id: String,
    pub ranks: Vec<u8>,
    pub groundedness: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub timestamp: String,
}

/// `relevance` is Wrong=0, Topic=1, Partial=2, Perfect=3.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceSubmission {
    pub task_id: String,
    pub annotator_id: String,
    pub relevance: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub timestamp: String,
}

/// A submission as it arrives from a client, before validation. Numbers are
/// wide so out-of-range values become field errors rather than parse errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubmissionPayload {
    pub task_id: String,
    pub annotator_id: String,
    #[serde(default)]
    pub ranks: Option<Vec<i64>>,
    #[serde(default)]
    pub groundedness: Option<Vec<Option<i64>>>,
    #[serde(default)]
    pub relevance: Option<i64>,
    #[serde(default)]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Acknowledgment {
    pub task_id: String,
    pub annotator_id: String,
    pub remaining: usize,
}

fn validate(
    task: &AnnotationTask,
    payload: &SubmissionPayload,
    timestamp: String,
) -> Result<Submission, CampaignError> {
    let mut errors = Vec::new();
    let notes = payload.notes.clone().filter(|n| !n.trim().is_empty());
    let submission = match task.kind {
        TaskKind::Ranking => {
            if payload.relevance.is_some() {
                errors.push(FieldError::new("relevance", "not part of a ranking task"));
            }
            let ranks = match &payload.ranks {
                None => {
                    errors.push(FieldError::new("ranks", "required"));
                    Vec::new()
                }
                Some(r) if r.len() != RANKING_SLOTS => {
                    errors.push(FieldError::new(
                        "ranks",
                        format!("expected {RANKING_SLOTS} ranks, got {}", r.len()),
                    ));
                    Vec::new()
                }
                Some(r) => {
                    let mut sorted = r.clone();
                    sorted.sort_unstable();
                    if sorted != [1, 2, 3] {
                        let msg = if r.iter().all(|x| (1..=3).contains(x)) {
                            "ranks must be a permutation of 1, 2, 3 (no ties)"
                        } else {
                            "ranks must be 1, 2 or 3"
                        };
                        errors.push(FieldError::new("ranks", msg));
                    }
                    r.iter().map(|&x| x as u8).collect()
                }
            };
            let mut grounded = Vec::with_capacity(RANKING_SLOTS);
            match &payload.groundedness {
                None => errors.push(FieldError::new("groundedness", "required")),
                Some(g) if g.len() != RANKING_SLOTS => errors.push(FieldError::new(
                    "groundedness",
                    format!("expected {RANKING_SLOTS} judgments, got {}", g.len()),
                )),
                Some(g) => {
                    for (i, v) in g.iter().enumerate() {
                        match v {
                            None => errors.push(FieldError::new(format!("groundedness[{i}]"), "required")),
                            Some(x) if !(0..=2).contains(x) => errors.push(FieldError::new(
                                format!("groundedness[{i}]"),
                                "must be 0 (none), 1 (partial) or 2 (perfect)",
                            )),
                            Some(x) => grounded.push(*x as u8),
                        }
                    }
                }
            }
            Submission::Ranking(AnnotationSubmission {
                task_id: payload.task_id.clone(),
                annotator_id: payload.annotator_id.clone(),
                ranks,
                groundedness: grounded,
                notes,
                timestamp,
            })
        }
        TaskKind::Relevance => {
            if payload.ranks.is_some() {
                errors.push(FieldError::new("ranks", "not part of a relevance task"));
            }
            if payload.groundedness.is_some() {
                errors.push(FieldError::new("groundedness", "not part of a relevance task"));
            }
            let relevance = match payload.relevance {
                None => {
                    errors.push(FieldError::new("relevance", "required"));
                    0
                }
                Some(x) if !(0..=3).contains(&x) => {
                    errors.push(FieldError::new(
                        "relevance",
                        "must be 0 (wrong), 1 (topic), 2 (partial) or 3 (perfect)",
                    ));
                    0
                }
                Some(x) => x as u8,
            };
            Submission::Relevance(RelevanceSubmission {
                task_id: payload.task_id.clone(),
                annotator_id: payload.annotator_id.clone(),
                relevance,
                notes,
                timestamp,
            })
        }
    };
    if errors.is_empty() {
        Ok(submission)
    } else {
        Err(CampaignError::Validation { errors })
    }
}

/// Paragraphs of the retrieved document as a bulleted list.
pub fn bullet_paragraphs(text: &str) -> String {
    text.split("\n\n")
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| format!("• {p}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub id: String,
    pub kind: TaskKind,
    pub seed: u64,
    pub config: CampaignConfig,
    /// Query ids of each survey.
    pub surveys: Vec<Vec<String>>,
    pub tasks: Vec<AnnotationTask>,
    /// Annotator → task ids in presentation order.
    pub plan: BTreeMap<String, Vec<String>>,
    pub submissions: Vec<Submission>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CampaignStatus {
    Open,
    Complete,
}

fn run_gaps(run: &RunArtifact, kind: TaskKind) -> Vec<RunGap> {
    let mut gaps = Vec::new();
    for qid in run.query_ids() {
        let mut missing = Vec::new();
        match kind {
            TaskKind::Ranking => {
                for c in GuidanceCondition::RANKED {
                    match run.get(qid, c) {
                        Some(r) if r.is_ok() => {}
                        Some(_) => missing.push(format!("{c} (generation failed)")),
                        None => missing.push(c.to_string()),
                    }
                }
            }
            TaskKind::Relevance => {}
        }
        if run.document_for(qid).is_none() {
            missing.push("retrieved document".into());
        }
        if !missing.is_empty() {
            gaps.push(RunGap {
                query_id: qid.to_string(),
                missing,
            });
        }
    }
    gaps
}

fn staff_surveys(config: &CampaignConfig, n_surveys: usize) -> Result<Vec<Vec<String>>, CampaignError> {
    let known: BTreeSet<&str> = config.annotators.iter().map(String::as_str).collect();
    if known.len() != config.annotators.len() {
        return Err(CampaignError::Config("annotator ids must be unique".into()));
    }
    let (lo, hi) = (config.min_annotators_per_query, config.max_annotators_per_query);
    if lo == 0 || lo > hi {
        return Err(CampaignError::Config(format!(
            "annotators per query must satisfy 1 <= min <= max, got {lo}..{hi}"
        )));
    }
    let staffed = match &config.survey_annotators {
        Some(lists) => {
            if lists.len() != n_surveys {
                return Err(CampaignError::Config(format!(
                    "survey_annotators has {} entries for {n_surveys} surveys",
                    lists.len()
                )));
            }
            lists.clone()
        }
        None => {
            if config.annotators.len() < lo {
                return Err(CampaignError::Config(format!(
                    "{} annotators cannot give each query {lo} annotations",
                    config.annotators.len()
                )));
            }
            let mut next = 0;
            (0..n_surveys)
                .map(|_| {
                    (0..lo)
                        .map(|_| {
                            let a = config.annotators[next % config.annotators.len()].clone();
                            next += 1;
                            a
                        })
                        .collect()
                })
                .collect()
        }
    };
    for (s, list) in staffed.iter().enumerate() {
        if list.len() < lo || list.len() > hi {
            return Err(CampaignError::Config(format!(
                "survey {} has {} annotators, outside {lo}..={hi}",
                s + 1,
                list.len()
            )));
        }
        let distinct: BTreeSet<&str> = list.iter().map(String::as_str).collect();
        if distinct.len() != list.len() {
            return Err(CampaignError::Config(format!(
                "survey {} lists an annotator twice",
                s + 1
            )));
        }
        if let Some(unknown) = list.iter().find(|a| !known.contains(a.as_str())) {
            return Err(CampaignError::Config(format!(
                "survey {} names unknown annotator `{unknown}`",
                s + 1
            )));
        }
    }
    Ok(staffed)
}

/// Builds a campaign over every query in `run`. Query order, survey
/// membership, per-annotator order and per-task slot order all come from one
/// ChaCha8 stream seeded with `seed`.
pub fn create_campaign(
    id: &str,
    run: &RunArtifact,
    config: &CampaignConfig,
    seed: u64,
) -> Result<Campaign, CampaignError> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(CampaignError::Config(format!(
            "campaign id `{id}` must be non-empty [A-Za-z0-9_-]"
        )));
    }
    let gaps = run_gaps(run, config.kind);
    if !gaps.is_empty() {
        return Err(CampaignError::MissingConditions { gaps });
    }
    let mut query_ids: Vec<&str> = run.query_ids();
    if query_ids.is_empty() {
        return Err(CampaignError::Config("run has no queries".into()));
    }
    let sizes = if config.survey_sizes.is_empty() {
        vec![query_ids.len()]
    } else {
        config.survey_sizes.clone()
    };
    if sizes.contains(&0) || sizes.iter().sum::<usize>() != query_ids.len() {
        return Err(CampaignError::Config(format!(
            "survey sizes {sizes:?} do not partition {} queries",
            query_ids.len()
        )));
    }
    let staffing = staff_surveys(config, sizes.len())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    query_ids.shuffle(&mut rng);
    let mut surveys = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for n in &sizes {
        surveys.push(
            query_ids[start..start + n]
                .iter()
                .map(|q| q.to_string())
                .collect::<Vec<_>>(),
        );
        start += n;
    }

    let mut tasks = Vec::new();
    let mut plan: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for annotator in &config.annotators {
        let mut mine = Vec::new();
        for (s, survey) in surveys.iter().enumerate() {
            if !staffing[s].contains(annotator) {
                continue;
            }
            let mut order = survey.clone();
            order.shuffle(&mut rng);
            for qid in order {
                let task_id = format!("t{:04}", tasks.len() + 1);
                let document = run.document_for(&qid).expect("checked by run_gaps");
                let query_text = run
                    .records
                    .iter()
                    .find(|r| r.query_id == qid)
                    .map(|r| r.query_text.clone())
                    .unwrap_or_default();
                let (presented, shuffle_map) = match config.kind {
                    TaskKind::Ranking => {
                        let mut map = GuidanceCondition::RANKED.to_vec();
                        map.shuffle(&mut rng);
                        let presented = map
                            .iter()
                            .enumerate()
                            .map(|(slot, c)| PresentedResponse {
                                slot,
                                text: run.get(&qid, *c).expect("checked by run_gaps").response_text.clone(),
                            })
                            .collect();
                        (presented, map)
                    }
                    TaskKind::Relevance => (Vec::new(), Vec::new()),
                };
                mine.push(task_id.clone());
                tasks.push(AnnotationTask {
                    task_id,
                    kind: config.kind,
                    annotator_id: annotator.clone(),
                    survey: s,
                    query_id: qid,
                    query_text,
                    presented_responses: presented,
                    document_text: bullet_paragraphs(&document.text),
                    shuffle_map,
                });
            }
        }
        if !mine.is_empty() {
            plan.insert(annotator.clone(), mine);
        }
    }
    Ok(Campaign {
        id: id.to_string(),
        kind: config.kind,
        seed,
        config: config.clone(),
        surveys,
        tasks,
        plan,
        submissions: Vec::new(),
    })
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum CampaignLine {
    Campaign {
        schema_version: u32,
        id: String,
        kind: TaskKind,
        seed: u64,
        config: CampaignConfig,
        surveys: Vec<Vec<String>>,
    },
    Task(AnnotationTask),
    Assignment {
        annotator_id: String,
        task_ids: Vec<String>,
    },
    Submission(Submission),
}

fn line(l: &CampaignLine) -> String {
    serde_json::to_string(l).expect("campaign line serializes") + "\n"
}

impl Campaign {
    pub fn task(&self, task_id: &str) -> Option<&AnnotationTask> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    fn submitted(&self) -> HashMap<(&str, &str), &Submission> {
        self.submissions
            .iter()
            .map(|s| ((s.task_id(), s.annotator_id()), s))
            .collect()
    }

    /// First task in the annotator's plan they have not submitted.
    pub fn next_task(&self, annotator_id: &str) -> Result<Option<TaskView>, CampaignError> {
        let plan = self
            .plan
            .get(annotator_id)
            .ok_or_else(|| CampaignError::UnknownAnnotator(annotator_id.to_string()))?;
        let done = self.submitted();
        Ok(plan
            .iter()
            .enumerate()
            .find(|(_, t)| !done.contains_key(&(t.as_str(), annotator_id)))
            .map(|(i, t)| self.task(t).expect("plan refers to tasks").view(i + 1, plan.len())))
    }

    /// Validates a submission without recording it.
    pub fn check_submission(
        &self,
        payload: &SubmissionPayload,
        timestamp: String,
    ) -> Result<Submission, CampaignError> {
        let task = self
            .task(&payload.task_id)
            .ok_or_else(|| CampaignError::UnknownTask(payload.task_id.clone()))?;
        if !self.plan.contains_key(&payload.annotator_id) {
            return Err(CampaignError::UnknownAnnotator(payload.annotator_id.clone()));
        }
        if task.annotator_id != payload.annotator_id {
            return Err(CampaignError::NotAssigned {
                task_id: payload.task_id.clone(),
                annotator_id: payload.annotator_id.clone(),
            });
        }
        if self
            .submitted()
            .contains_key(&(payload.task_id.as_str(), payload.annotator_id.as_str()))
        {
            return Err(CampaignError::Duplicate {
                task_id: payload.task_id.clone(),
                annotator_id: payload.annotator_id.clone(),
            });
        }
        validate(task, payload, timestamp)
    }

    pub fn submit_at(
        &mut self,
        payload: &SubmissionPayload,
        timestamp: String,
    ) -> Result<Acknowledgment, CampaignError> {
        let submission = self.check_submission(payload, timestamp)?;
        self.submissions.push(submission);
        Ok(self.ack(&payload.task_id, &payload.annotator_id))
    }

    pub fn submit(&mut self, payload: &SubmissionPayload) -> Result<Acknowledgment, CampaignError> {
        self.submit_at(payload, chrono::Utc::now().to_rfc3339())
    }

    fn ack(&self, task_id: &str, annotator_id: &str) -> Acknowledgment {
        let done = self.submitted();
        let remaining = self.plan[annotator_id]
            .iter()
            .filter(|t| !done.contains_key(&(t.as_str(), annotator_id)))
            .count();
        Acknowledgment {
            task_id: task_id.to_string(),
            annotator_id: annotator_id.to_string(),
            remaining,
        }
    }

    pub fn status(&self) -> CampaignStatus {
        if self.submissions.len() >= self.tasks.len() {
            CampaignStatus::Complete
        } else {
            CampaignStatus::Open
        }
    }

    /// Submissions mapped from slots back to conditions.
    pub fn judgments(&self) -> Judgments {
        let mut out = Judgments::default();
        for s in &self.submissions {
            let Some(task) = self.task(s.task_id()) else { continue };
            match s {
                Submission::Ranking(r) => {
                    let ranks = task.shuffle_map.iter().copied().zip(r.ranks.iter().copied()).collect();
                    out.rankings.push(RankingJudgment {
                        query_id: task.query_id.clone(),
                        annotator_id: r.annotator_id.clone(),
                        ranks,
                    });
                    for (c, g) in task.shuffle_map.iter().zip(&r.groundedness) {
                        out.groundedness.push(GroundednessJudgment {
                            query_id: task.query_id.clone(),
                            annotator_id: r.annotator_id.clone(),
                            condition: *c,
                            value: *g,
                        });
                    }
                }
                Submission::Relevance(r) => out.relevance.push(RelevanceJudgment {
                    query_id: task.query_id.clone(),
                    annotator_id: r.annotator_id.clone(),
                    relevance: r.relevance,
                }),
            }
        }
        out
    }

    pub fn aggregate(&self) -> AggregateJudgments {
        aggregate(&self.judgments())
    }

    /// Header, tasks, assignments, then submissions in arrival order.
    pub fn to_jsonl(&self) -> String {
        let mut out = line(&CampaignLine::Campaign {
            schema_version: CAMPAIGN_SCHEMA_VERSION,
            id: self.id.clone(),
            kind: self.kind,
            seed: self.seed,
            config: self.config.clone(),
            surveys: self.surveys.clone(),
        });
        for t in &self.tasks {
            out += &line(&CampaignLine::Task(t.clone()));
        }
        for (a, ids) in &self.plan {
            out += &line(&CampaignLine::Assignment {
                annotator_id: a.clone(),
                task_ids: ids.clone(),
            });
        }
        for s in &self.submissions {
            out += &submission_line(s);
        }
        out
    }

    /// Inverse of [`Campaign::to_jsonl`]. A final line cut off mid-write is
    /// ignored; submissions are re-checked against the plan.
    pub fn from_jsonl(text: &str) -> Result<Self, CampaignError> {
        let mut campaign: Option<Campaign> = None;
        let lines: Vec<&str> = text.lines().collect();
        let truncated_tail = !text.is_empty() && !text.ends_with('\n');
        for (i, raw) in lines.iter().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| CampaignError::Parse { line: i + 1, message };
            let parsed: CampaignLine = match serde_json::from_str(raw) {
                Ok(l) => l,
                Err(_) if truncated_tail && i + 1 == lines.len() => {
                    log::warn!("ignoring truncated final campaign line {}", i + 1);
                    break;
                }
                Err(e) => return Err(parse_err(e.to_string())),
            };
            match (parsed, campaign.as_mut()) {
                (
                    CampaignLine::Campaign {
                        schema_version,
                        id,
                        kind,
                        seed,
                        config,
                        surveys,
                    },
                    None,
                ) => {
                    if schema_version != CAMPAIGN_SCHEMA_VERSION {
                        return Err(parse_err(format!("unsupported schema version {schema_version}")));
                    }
                    campaign = Some(Campaign {
                        id,
                        kind,
                        seed,
                        config,
                        surveys,
                        tasks: Vec::new(),
                        plan: BTreeMap::new(),
                        submissions: Vec::new(),
                    });
                }
                (CampaignLine::Campaign { .. }, Some(_)) => return Err(parse_err("second campaign header".into())),
                (_, None) => return Err(parse_err("expected campaign header first".into())),
                (CampaignLine::Task(t), Some(c)) => c.tasks.push(t),
                (CampaignLine::Assignment { annotator_id, task_ids }, Some(c)) => {
                    if let Some(missing) = task_ids.iter().find(|t| c.task(t).is_none()) {
                        return Err(parse_err(format!("assignment names unknown task `{missing}`")));
                    }
                    c.plan.insert(annotator_id, task_ids);
                }
                (CampaignLine::Submission(s), Some(c)) => {
                    if c.task(s.task_id()).is_none_or(|t| t.annotator_id != s.annotator_id()) {
                        return Err(parse_err(format!("submission for unassigned task `{}`", s.task_id())));
                    }
                    if c.submitted().contains_key(&(s.task_id(), s.annotator_id())) {
                        return Err(parse_err(format!("duplicate submission for `{}`", s.task_id())));
                    }
                    c.submissions.push(s);
                }
            }
        }
        campaign.ok_or(CampaignError::Parse {
            line: 0,
            message: "empty campaign file".into(),
        })
    }
}

fn submission_line(s: &Submission) -> String {
    line(&CampaignLine::Submission(s.clone()))
}

/// Per-condition ranks given by one annotator to one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingJudgment {
    pub query_id: String,
    pub annotator_id: String,
    pub ranks: BTreeMap<GuidanceCondition, u8>,
}

impl RankingJudgment {
    /// Ordered (winner, loser) pairs: three per ranking of three.
    pub fn pairs(&self) -> Vec<(GuidanceCondition, GuidanceCondition)> {
        let mut out = Vec::new();
        for (a, ra) in &self.ranks {
            for (b, rb) in &self.ranks {
                if ra < rb {
                    out.push((*a, *b));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundednessJudgment {
    pub query_id: String,
    pub annotator_id: String,
    pub condition: GuidanceCondition,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceJudgment {
    pub query_id: String,
    pub annotator_id: String,
    pub relevance: u8,
}

/// Condition-resolved judgments, independent of how they were collected.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgments {
    pub rankings: Vec<RankingJudgment>,
    pub groundedness: Vec<GroundednessJudgment>,
    pub relevance: Vec<RelevanceJudgment>,
}

impl Judgments {
    pub fn merge(mut self, other: Judgments) -> Judgments {
        self.rankings.extend(other.rankings);
        self.groundedness.extend(other.groundedness);
        self.relevance.extend(other.relevance);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundednessMean {
    pub query_id: String,
    pub condition: GuidanceCondition,
    pub mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceMean {
    pub query_id: String,
    pub mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseCount {
    pub winner: GuidanceCondition,
    pub loser: GuidanceCondition,
    pub wins: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateJudgments {
    /// Sorted by (query, condition).
    pub groundedness: Vec<GroundednessMean>,
    /// Sorted by query.
    pub relevance: Vec<RelevanceMean>,
    /// `rank_distribution[c][r - 1]` counts rankings placing `c` at rank `r`.
    pub rank_distribution: BTreeMap<GuidanceCondition, [usize; RANKING_SLOTS]>,
    /// Every ordered pair of ranked conditions, including zero counts.
    pub pairwise: Vec<PairwiseCount>,
    pub n_rankings: usize,
    pub judgments: Judgments,
}

impl AggregateJudgments {
    pub fn groundedness_mean(&self, query_id: &str, condition: GuidanceCondition) -> Option<f64> {
        self.groundedness
            .iter()
            .find(|g| g.query_id == query_id && g.condition == condition)
            .map(|g| g.mean)
    }

    pub fn relevance_mean(&self, query_id: &str) -> Option<f64> {
        self.relevance.iter().find(|r| r.query_id == query_id).map(|r| r.mean)
    }

    pub fn wins(&self, winner: GuidanceCondition, loser: GuidanceCondition) -> usize {
        self.pairwise
            .iter()
            .find(|p| p.winner == winner && p.loser == loser)
            .map_or(0, |p| p.wins)
    }
}

pub fn aggregate(judgments: &Judgments) -> AggregateJudgments {
    let mut g: BTreeMap<(String, GuidanceCondition), (f64, usize)> = BTreeMap::new();
    for j in &judgments.groundedness {
        let e = g.entry((j.query_id.clone(), j.condition)).or_default();
        e.0 += f64::from(j.value);
        e.1 += 1;
    }
    let mut rel: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for j in &judgments.relevance {
        let e = rel.entry(j.query_id.clone()).or_default();
        e.0 += f64::from(j.relevance);
        e.1 += 1;
    }
    let mut dist: BTreeMap<GuidanceCondition, [usize; RANKING_SLOTS]> = BTreeMap::new();
    let mut wins: BTreeMap<(GuidanceCondition, GuidanceCondition), usize> = BTreeMap::new();
    for r in &judgments.rankings {
        for (c, rank) in &r.ranks {
            if (1..=RANKING_SLOTS as u8).contains(rank) {
                dist.entry(*c).or_default()[usize::from(*rank) - 1] += 1;
            }
        }
        for pair in r.pairs() {
            *wins.entry(pair).or_default() += 1;
        }
    }
    if !judgments.rankings.is_empty() {
        for c in GuidanceCondition::RANKED {
            dist.entry(c).or_default();
        }
    }
    let mut pairwise = Vec::new();
    if !judgments.rankings.is_empty() {
        for a in GuidanceCondition::RANKED {
            for b in GuidanceCondition::RANKED {
                if a != b {
                    pairwise.push(PairwiseCount {
                        winner: a,
                        loser: b,
                        wins: wins.get(&(a, b)).copied().unwrap_or(0),
                    });
                }
            }
        }
    }
    AggregateJudgments {
        groundedness: g
            .into_iter()
            .map(|((query_id, condition), (sum, n))| GroundednessMean {
                query_id,
                condition,
                mean: sum / n as f64,
                n,
            })
            .collect(),
        relevance: rel
            .into_iter()
            .map(|(query_id, (sum, n))| RelevanceMean {
                query_id,
                mean: sum / n as f64,
                n,
            })
            .collect(),
        rank_distribution: dist,
        pairwise,
        n_rankings: judgments.rankings.len(),
        judgments: judgments.clone(),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::generation::{CellStatus, GenerationRecord, SamplingParams, RUN_SCHEMA_VERSION};
    use crate::retrieval::RetrievedDocument;
    use proptest::prelude::*;

    pub(crate) fn sample_run(n_queries: usize) -> RunArtifact {
        let mut records = Vec::new();
        for q in 0..n_queries {
            for c in GuidanceCondition::ALL {
                records.push(GenerationRecord {
                    schema_version: RUN_SCHEMA_VERSION,
                    query_id: format!("q{q:02}"),
                    query_text: format!("question {q}"),
                    condition: c,
                    retrieved: c.uses_document().then(|| RetrievedDocument {
                        matched_subsection_id: "s".into(),
                        included_segment_ids: vec!["s".into()],
                        text: format!("First paragraph {q}.\n\nSecond paragraph {q}."),
                        token_count: 8,
                        similarity: 0.5,
                        truncated: false,
                    }),
                    prompt: vec![],
                    response_text: format!("answer {q} written in style {}", c as u8),
                    finish_reason: Some("stop".into()),
                    model_id: "mock-echo".into(),
                    sampling: SamplingParams::default(),
                    timestamp: String::new(),
                    status: CellStatus::Ok,
                    request: None,
                    response: None,
                });
            }
        }
        RunArtifact::from_records(records)
    }

    fn ranking(task_id: &str, annotator: &str, ranks: [i64; 3], grounded: [i64; 3]) -> SubmissionPayload {
        SubmissionPayload {
            task_id: task_id.into(),
            annotator_id: annotator.into(),
            ranks: Some(ranks.to_vec()),
            groundedness: Some(grounded.iter().map(|g| Some(*g)).collect()),
            ..Default::default()
        }
    }

    fn small_config(annotators: &[&str]) -> CampaignConfig {
        CampaignConfig {
            annotators: annotators.iter().map(|a| a.to_string()).collect(),
            min_annotators_per_query: annotators.len().min(3),
            max_annotators_per_query: annotators.len().max(4),
            ..Default::default()
        }
    }

    #[test]
    fn study_layout_partitions_51_queries() {
        let run = sample_run(51);
        let c = create_campaign("c1", &run, &CampaignConfig::study_layout(), 7).unwrap();
        let sizes: Vec<usize> = c.surveys.iter().map(Vec::len).collect();
        assert_eq!(sizes, [15, 15, 15, 6]);
        let mut all: Vec<&String> = c.surveys.iter().flatten().collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 51);
        let counts: Vec<usize> = (1..=9).map(|i| c.plan[&format!("A{i}")].len()).collect();
        assert_eq!(counts, [30, 30, 21, 21, 21, 15, 15, 15, 6]);
        assert_eq!(c.tasks.len(), 174);
        let mut per_query: HashMap<&str, BTreeSet<&str>> = HashMap::new();
        for t in &c.tasks {
            assert!(per_query.entry(&t.query_id).or_default().insert(&t.annotator_id));
        }
        let threes = per_query.values().filter(|s| s.len() == 3).count();
        assert_eq!((threes, 51 - threes), (30, 21));
        assert!(per_query.values().all(|s| (3..=4).contains(&s.len())));
    }

    #[test]
    fn same_seed_same_bytes() {
        let run = sample_run(10);
        let cfg = small_config(&["a", "b", "c", "d"]);
        let one = create_campaign("c", &run, &cfg, 42).unwrap().to_jsonl();
        assert_eq!(one, create_campaign("c", &run, &cfg, 42).unwrap().to_jsonl());
        assert_ne!(one, create_campaign("c", &run, &cfg, 43).unwrap().to_jsonl());
    }

    #[test]
    fn single_query_three_annotators() {
        let run = sample_run(1);
        let c = create_campaign("c", &run, &small_config(&["a", "b", "c"]), 1).unwrap();
        assert_eq!(c.tasks.len(), 3);
        for t in &c.tasks {
            assert_eq!(t.presented_responses.len(), 3);
            let mut m = t.shuffle_map.clone();
            m.sort();
            assert_eq!(m, GuidanceCondition::RANKED);
            for (slot, r) in t.presented_responses.iter().enumerate() {
                assert_eq!(r.text, run.get(&t.query_id, t.shuffle_map[slot]).unwrap().response_text);
            }
        }
    }

    #[test]
    fn slot_order_is_uniform() {
        let run = sample_run(1);
        let cfg = CampaignConfig {
            min_annotators_per_query: 1,
            ..small_config(&["a"])
        };
        let mut counts: HashMap<Vec<GuidanceCondition>, usize> = HashMap::new();
        for seed in 0..6000 {
            let c = create_campaign("c", &run, &cfg, seed).unwrap();
            *counts.entry(c.tasks[0].shuffle_map.clone()).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        // Expected 1000 each; sd ≈ 29.
        assert!(counts.values().all(|&n| (850..=1150).contains(&n)), "{counts:?}");
    }

    #[test]
    fn missing_condition_lists_gaps() {
        let mut run = sample_run(3);
        run.records
            .retain(|r| !(r.query_id == "q01" && r.condition == GuidanceCondition::High));
        run.records
            .iter_mut()
            .find(|r| r.query_id == "q02" && r.condition == GuidanceCondition::Low)
            .unwrap()
            .status = CellStatus::Failed { error: "x".into() };
        match create_campaign("c", &run, &small_config(&["a", "b", "c"]), 1) {
            Err(CampaignError::MissingConditions { gaps }) => {
                assert_eq!(gaps.len(), 2);
                assert_eq!(gaps[0].query_id, "q01");
                assert_eq!(gaps[0].missing, ["high"]);
                assert!(gaps[1].missing[0].starts_with("low"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        let run = sample_run(4);
        let mut cfg = small_config(&["a", "b", "c"]);
        cfg.survey_sizes = vec![3, 3];
        assert!(matches!(
            create_campaign("c", &run, &cfg, 1),
            Err(CampaignError::Config(_))
        ));
        let cfg = small_config(&["a", "b"]);
        let cfg = CampaignConfig {
            min_annotators_per_query: 3,
            ..cfg
        };
        assert!(matches!(
            create_campaign("c", &run, &cfg, 1),
            Err(CampaignError::Config(_))
        ));
        assert!(create_campaign("../x", &run, &small_config(&["a", "b", "c"]), 1).is_err());
    }

    #[test]
    fn next_task_and_submission_rules() {
        let run = sample_run(2);
        let mut c = create_campaign("c", &run, &small_config(&["a", "b", "c"]), 3).unwrap();
        let first = c.next_task("a").unwrap().unwrap();
        assert_eq!(c.next_task("a").unwrap().unwrap(), first);
        assert_eq!(first.position, 1);
        assert!(matches!(c.next_task("zed"), Err(CampaignError::UnknownAnnotator(_))));

        let tied = c.submit_at(&ranking(&first.task_id, "a", [1, 1, 2], [0, 1, 2]), "t".into());
        match tied {
            Err(CampaignError::Validation { errors }) => assert_eq!(errors[0].field, "ranks"),
            other => panic!("unexpected {other:?}"),
        }
        let mut missing = ranking(&first.task_id, "a", [2, 1, 3], [1, 2, 0]);
        missing.groundedness = Some(vec![Some(1), None, Some(0)]);
        match c.submit_at(&missing, "t".into()) {
            Err(CampaignError::Validation { errors }) => assert_eq!(errors[0].field, "groundedness[1]"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            c.submit_at(&ranking(&first.task_id, "b", [2, 1, 3], [1, 2, 0]), "t".into()),
            Err(CampaignError::NotAssigned { .. })
        ));

        let ack = c
            .submit_at(&ranking(&first.task_id, "a", [2, 1, 3], [1, 2, 0]), "t".into())
            .unwrap();
        assert_eq!(ack.remaining, 1);
        assert!(matches!(
            c.submit_at(&ranking(&first.task_id, "a", [2, 1, 3], [1, 2, 0]), "t".into()),
            Err(CampaignError::Duplicate { .. })
        ));
        let second = c.next_task("a").unwrap().unwrap();
        assert_ne!(second.task_id, first.task_id);
        c.submit_at(&ranking(&second.task_id, "a", [1, 2, 3], [0, 0, 0]), "t".into())
            .unwrap();
        assert_eq!(c.next_task("a").unwrap(), None);
        assert_eq!(c.status(), CampaignStatus::Open);
    }

    #[test]
    fn views_are_blind() {
        let run = sample_run(5);
        let c = create_campaign("c", &run, &small_config(&["a", "b", "c"]), 9).unwrap();
        for (a, ids) in &c.plan {
            for (i, id) in ids.iter().enumerate() {
                let view = c.task(id).unwrap().view(i + 1, ids.len());
                let json = serde_json::to_value(&view).unwrap();
                assert_no_condition_labels(&json);
                assert_eq!(&c.task(id).unwrap().annotator_id, a);
            }
        }
    }

    /// Fails if any key mentions conditions or an exact string value is a
    /// condition label.
    pub(crate) fn assert_no_condition_labels(v: &serde_json::Value) {
        match v {
            serde_json::Value::Object(m) => {
                for (k, x) in m {
                    let k = k.to_ascii_lowercase();
                    assert!(
                        !k.contains("condition") && !k.contains("shuffle") && !k.contains("guidance"),
                        "key {k}"
                    );
                    assert_no_condition_labels(x);
                }
            }
            serde_json::Value::Array(xs) => xs.iter().for_each(assert_no_condition_labels),
            serde_json::Value::String(s) => {
                let s = s.trim().to_ascii_lowercase();
                assert!(!GuidanceCondition::ALL.iter().any(|c| c.as_str() == s), "value {s}");
            }
            _ => {}
        }
    }

    #[test]
    fn aggregate_unshuffles() {
        let run = sample_run(1);
        let mut c = create_campaign("c", &run, &small_config(&["a", "b", "c"]), 5).unwrap();
        let slot_of = |c: &Campaign, annotator: &str, cond: GuidanceCondition| {
            let t = c.tasks.iter().find(|t| t.annotator_id == annotator).unwrap();
            (
                t.task_id.clone(),
                t.shuffle_map.iter().position(|x| *x == cond).unwrap(),
            )
        };
        let order = [GuidanceCondition::Low, GuidanceCondition::None, GuidanceCondition::High];
        for (annotator, gh) in [("a", 1), ("b", 2)] {
            let mut ranks = [0i64; 3];
            let mut grounded = [0i64; 3];
            let mut task = String::new();
            for (r, cond) in order.iter().enumerate() {
                let (t, slot) = slot_of(&c, annotator, *cond);
                task = t;
                ranks[slot] = r as i64 + 1;
                grounded[slot] = if *cond == GuidanceCondition::High { gh } else { 0 };
            }
            c.submit_at(&ranking(&task, annotator, ranks, grounded), "t".into())
                .unwrap();
        }
        let agg = c.aggregate();
        assert_eq!(agg.groundedness_mean("q00", GuidanceCondition::High), Some(1.5));
        assert_eq!(agg.groundedness_mean("q00", GuidanceCondition::Low), Some(0.0));
        assert_eq!(agg.wins(GuidanceCondition::Low, GuidanceCondition::None), 2);
        assert_eq!(agg.wins(GuidanceCondition::Low, GuidanceCondition::High), 2);
        assert_eq!(agg.wins(GuidanceCondition::None, GuidanceCondition::High), 2);
        assert_eq!(agg.wins(GuidanceCondition::High, GuidanceCondition::Low), 0);
        assert_eq!(agg.rank_distribution[&GuidanceCondition::Low], [2, 0, 0]);
        assert_eq!(agg.n_rankings, 2);
    }

    #[test]
    fn relevance_campaign() {
        let run = sample_run(3);
        let mut c = create_campaign("r", &run, &CampaignConfig::relevance(["A1", "A6", "A10"]), 2).unwrap();
        assert_eq!(c.tasks.len(), 9);
        let t = c.next_task("A6").unwrap().unwrap();
        assert!(t.responses.is_empty());
        assert_eq!(t.document.lines().count(), 2);
        assert!(t.document.lines().all(|l| l.starts_with("• ")));
        let mut p = SubmissionPayload {
            task_id: t.task_id.clone(),
            annotator_id: "A6".into(),
            relevance: Some(4),
            ..Default::default()
        };
        assert!(matches!(
            c.submit_at(&p, "t".into()),
            Err(CampaignError::Validation { .. })
        ));
        p.relevance = Some(2);
        c.submit_at(&p, "t".into()).unwrap();
        let agg = c.aggregate();
        assert_eq!(agg.relevance.len(), 1);
        assert_eq!(agg.relevance[0].mean, 2.0);
        assert!(agg.pairwise.is_empty());
    }

    #[test]
    fn jsonl_round_trip_and_truncation() {
        let run = sample_run(2);
        let mut c = create_campaign("c", &run, &small_config(&["a", "b", "c"]), 3).unwrap();
        let t = c.next_task("b").unwrap().unwrap();
        c.submit_at(
            &ranking(&t.task_id, "b", [3, 1, 2], [2, 2, 1]),
            "2024-01-01T00:00:00Z".into(),
        )
        .unwrap();
        let text = c.to_jsonl();
        assert_eq!(Campaign::from_jsonl(&text).unwrap(), c);
        let cut = &text[..text.len() - 10];
        let back = Campaign::from_jsonl(cut).unwrap();
        assert!(back.submissions.is_empty());
        assert!(Campaign::from_jsonl("{\"record\":\"task\"}\n").is_err());
    }

    fn perm() -> impl Strategy<Value = [i64; 3]> {
        Just([1i64, 2, 3]).prop_shuffle().prop_map(|v| [v[0], v[1], v[2]])
    }

    proptest! {
        #[test]
        fn pairwise_totals_are_three_per_ranking(rankings in prop::collection::vec((perm(), prop::array::uniform3(0i64..=2)), 1..12), seed in 0u64..1000) {
            let run = sample_run(rankings.len());
            let cfg = CampaignConfig { min_annotators_per_query: 1, ..small_config(&["a"]) };
            let mut c = create_campaign("c", &run, &cfg, seed).unwrap();
            for (ranks, g) in &rankings {
                let t = c.next_task("a").unwrap().unwrap();
                c.submit_at(&ranking(&t.task_id, "a", *ranks, *g), "t".into()).unwrap();
            }
            let agg = c.aggregate();
            let total: usize = agg.pairwise.iter().map(|p| p.wins).sum();
            prop_assert_eq!(total, 3 * rankings.len());
            for cond in GuidanceCondition::RANKED {
                prop_assert_eq!(agg.rank_distribution[&cond].iter().sum::<usize>(), rankings.len());
                let as_winner: usize = agg.pairwise.iter().filter(|p| p.winner == cond).map(|p| p.wins).sum();
                let as_loser: usize = agg.pairwise.iter().filter(|p| p.loser == cond).map(|p| p.wins).sum();
                prop_assert_eq!(as_winner + as_loser, 2 * rankings.len());
            }
            for j in &agg.judgments.rankings {
                let mut r: Vec<u8> = j.ranks.values().copied().collect();
                r.sort();
                prop_assert_eq!(r, vec![1, 2, 3]);
            }
        }

        #[test]
        fn plan_respects_bounds(n in 1usize..30, n_annot in 3usize..8, seed in 0u64..500) {
            let run = sample_run(n);
            let ids: Vec<String> = (0..n_annot).map(|i| format!("x{i}")).collect();
            let cfg = CampaignConfig { annotators: ids, ..Default::default() };
            let c = create_campaign("c", &run, &cfg, seed).unwrap();
            let mut per_query: HashMap<&str, Vec<&str>> = HashMap::new();
            for t in &c.tasks {
                per_query.entry(&t.query_id).or_default().push(&t.annotator_id);
            }
            prop_assert_eq!(per_query.len(), n);
            for annotators in per_query.values() {
                prop_assert!((3..=4).contains(&annotators.len()));
                let uniq: BTreeSet<_> = annotators.iter().collect();
                prop_assert_eq!(uniq.len(), annotators.len());
            }
        }
    }
}
