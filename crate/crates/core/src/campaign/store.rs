use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;

use super::{
    submission_line, Acknowledgment, AggregateJudgments, Campaign, CampaignError, CampaignStatus, SubmissionPayload,
    TaskKind, TaskView,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnnotatorProgress {
    pub annotator_id: String,
    pub assigned: usize,
    pub submitted: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub campaign_id: String,
    pub kind: TaskKind,
    pub status: CampaignStatus,
    pub total_tasks: usize,
    pub submitted: usize,
    pub annotators: Vec<AnnotatorProgress>,
}

/// Campaigns held in memory, each persisted as `<dir>/<id>.jsonl`.
/// Submissions are appended under the campaign's lock before they become
/// visible, so an acknowledged submission is on disk.
#[derive(Default)]
pub struct CampaignStore {
    dir: Option<PathBuf>,
    campaigns: RwLock<BTreeMap<String, Arc<Mutex<Campaign>>>>,
}

impl CampaignStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads every `*.jsonl` campaign in `dir`, creating the directory.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, CampaignError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut campaigns = BTreeMap::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let mut text = fs::read_to_string(&path)?;
            if !text.is_empty() && !text.ends_with('\n') {
                // Drop a partial last line so the next append starts clean.
                let keep = text.rfind('\n').map_or(0, |i| i + 1);
                text.truncate(keep);
                fs::write(&path, &text)?;
            }
            let campaign = Campaign::from_jsonl(&text)?;
            campaigns.insert(campaign.id.clone(), Arc::new(Mutex::new(campaign)));
        }
        Ok(Self {
            dir: Some(dir),
            campaigns: RwLock::new(campaigns),
        })
    }

    fn path_for(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    pub fn ids(&self) -> Vec<String> {
        self.campaigns.read().expect("store lock").keys().cloned().collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.campaigns.read().expect("store lock").contains_key(id)
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Campaign>>, CampaignError> {
        self.campaigns
            .read()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| CampaignError::UnknownCampaign(id.to_string()))
    }

    pub fn insert(&self, campaign: Campaign) -> Result<(), CampaignError> {
        let mut all = self.campaigns.write().expect("store lock");
        if all.contains_key(&campaign.id) {
            return Err(CampaignError::CampaignExists(campaign.id));
        }
        if let Some(path) = self.path_for(&campaign.id) {
            if path.exists() {
                return Err(CampaignError::CampaignExists(campaign.id));
            }
            fs::write(&path, campaign.to_jsonl())?;
        }
        all.insert(campaign.id.clone(), Arc::new(Mutex::new(campaign)));
        Ok(())
    }

    /// Runs `f` on a consistent snapshot of the campaign.
    pub fn with<R>(&self, id: &str, f: impl FnOnce(&Campaign) -> R) -> Result<R, CampaignError> {
        let c = self.get(id)?;
        let guard = c.lock().expect("campaign lock");
        Ok(f(&guard))
    }

    pub fn next_task(&self, id: &str, annotator_id: &str) -> Result<Option<TaskView>, CampaignError> {
        self.with(id, |c| c.next_task(annotator_id))?
    }

    pub fn submit(&self, id: &str, payload: &SubmissionPayload) -> Result<Acknowledgment, CampaignError> {
        self.submit_at(id, payload, chrono::Utc::now().to_rfc3339())
    }

    pub fn submit_at(
        &self,
        id: &str,
        payload: &SubmissionPayload,
        timestamp: String,
    ) -> Result<Acknowledgment, CampaignError> {
        let c = self.get(id)?;
        let mut campaign = c.lock().expect("campaign lock");
        let submission = campaign.check_submission(payload, timestamp)?;
        if let Some(path) = self.path_for(id) {
            let mut f = OpenOptions::new().append(true).open(path)?;
            f.write_all(submission_line(&submission).as_bytes())?;
            f.flush()?;
        }
        campaign.submissions.push(submission);
        Ok(campaign.ack(&payload.task_id, &payload.annotator_id))
    }

    pub fn progress(&self, id: &str) -> Result<Progress, CampaignError> {
        self.with(id, progress)
    }

    pub fn aggregate(&self, id: &str) -> Result<AggregateJudgments, CampaignError> {
        self.with(id, Campaign::aggregate)
    }

    pub fn export(&self, id: &str) -> Result<String, CampaignError> {
        self.with(id, Campaign::to_jsonl)
    }
}

pub(super) fn progress(c: &Campaign) -> Progress {
    let annotators = c
        .plan
        .iter()
        .map(|(a, ids)| AnnotatorProgress {
            annotator_id: a.clone(),
            assigned: ids.len(),
            submitted: c.submissions.iter().filter(|s| s.annotator_id() == a).count(),
        })
        .collect();
    Progress {
        campaign_id: c.id.clone(),
        kind: c.kind,
        status: c.status(),
        total_tasks: c.tasks.len(),
        submitted: c.submissions.len(),
        annotators,
    }
}
