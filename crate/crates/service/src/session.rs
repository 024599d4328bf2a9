use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use annotator_core::campaign::Progress;
use annotator_core::{
    class_frequencies, AnnotationJournal, Campaign, CampaignConfig, Dataset, Error,
    FrequencyReport, JournalEntry, JournalWriter, LabelSet, PointCloud, Result, Strategy,
    VoxelCoord,
};
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AwaitingLabel,
    Advancing,
    Done,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::AwaitingLabel => "awaiting_label",
            Status::Advancing => "advancing",
            Status::Done => "done",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointPayload {
    pub index: u32,
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

/// Body of `GET /session/{id}/next`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryPayload {
    pub session_id: String,
    pub status: Status,
    pub round: u32,
    pub scan_id: String,
    pub coord: VoxelCoord,
    pub voxel_size: f64,
    pub strategy: Strategy,
    pub score: f64,
    pub points: Vec<PointPayload>,
    pub progress: Progress,
}

/// Body of `POST /session/{id}/label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub scan_id: String,
    pub coord: VoxelCoord,
    pub labels: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelAck {
    pub session_id: String,
    pub accepted: bool,
    pub status: Status,
    pub journal_entries: usize,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub status: Status,
    pub mode: annotator_core::Mode,
    pub strategy: Strategy,
    pub voxel_size: f64,
    pub progress: Progress,
}

/// Failures surfaced to HTTP clients.
#[derive(Debug)]
pub enum SessionError {
    /// The campaign has no more queries.
    Done(Progress),
    /// The submission does not match the pending query, or none is pending.
    Conflict(String),
    /// The labels are malformed.
    Invalid(String),
    Internal(Error),
}

impl From<Error> for SessionError {
    fn from(e: Error) -> Self {
        match e {
            Error::Usage(m) => SessionError::Conflict(m),
            Error::Integrity(m) => SessionError::Invalid(m),
            other => SessionError::Internal(other),
        }
    }
}

struct Writer {
    campaign: Campaign,
    journal: JournalWriter,
}

#[derive(Debug, Clone, Copy)]
struct Snapshot {
    status: Status,
    progress: Progress,
}

/// One live campaign. All mutations go through a single lock; scan data is
/// shared read-only.
pub struct Session {
    id: String,
    config: CampaignConfig,
    writer: Mutex<Writer>,
    snapshot: RwLock<Snapshot>,
    clouds: Arc<BTreeMap<String, PointCloud>>,
    ground_truth: Option<BTreeMap<String, LabelSet>>,
    class_names: Vec<String>,
}

fn status_of(c: &Campaign) -> Status {
    if c.is_done() {
        Status::Done
    } else if c.pending_query().is_some() {
        Status::AwaitingLabel
    } else {
        Status::Advancing
    }
}

impl Session {
    /// Starts or resumes a campaign whose journal lives at `journal_path`.
    pub fn open(
        id: impl Into<String>,
        config: CampaignConfig,
        target: Dataset,
        source: Option<Dataset>,
        class_names: Vec<String>,
        journal_path: &Path,
    ) -> Result<Self> {
        let clouds: BTreeMap<String, PointCloud> = target
            .scans()
            .iter()
            .map(|s| (s.id().to_string(), s.cloud.clone()))
            .collect();
        let ground_truth = target
            .scans()
            .iter()
            .map(|s| s.labels.clone().map(|l| (s.id().to_string(), l)))
            .collect::<Option<BTreeMap<_, _>>>();
        let mut campaign = Campaign::new(config.clone(), target, source)?;
        let journal = if journal_path.exists() {
            let existing = AnnotationJournal::load(journal_path)?;
            campaign.resume(&existing)?;
            log::info!(
                "resumed {} entries from {}",
                existing.len(),
                journal_path.display()
            );
            JournalWriter::open_append(journal_path)?
        } else {
            if let Some(dir) = journal_path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.to_path_buf(),
                    source: e,
                })?;
            }
            JournalWriter::create(journal_path, campaign.journal())?
        };
        campaign.next_query()?;
        let snapshot = Snapshot {
            status: status_of(&campaign),
            progress: campaign.progress(),
        };
        Ok(Session {
            id: id.into(),
            config,
            writer: Mutex::new(Writer { campaign, journal }),
            snapshot: RwLock::new(snapshot),
            clouds: Arc::new(clouds),
            ground_truth,
            class_names,
        })
    }

    /// Loads data named by a service config and opens its session.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self> {
        let data = cfg.sources().load()?;
        let config = cfg.campaign_config(data.map.class_count())?;
        Session::open(
            cfg.session_id.clone(),
            config,
            data.target,
            data.source,
            data.map.class_names(),
            &cfg.journal_path(),
        )
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn classes(&self) -> u16 {
        self.config.classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn cloud(&self, scan_id: &str) -> Option<&PointCloud> {
        self.clouds.get(scan_id)
    }

    pub fn journal_path(&self) -> PathBuf {
        self.lock().journal.path().to_path_buf()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Writer> {
        self.writer.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn publish(&self, c: &Campaign) -> Snapshot {
        let s = Snapshot {
            status: status_of(c),
            progress: c.progress(),
        };
        *self.snapshot.write().unwrap_or_else(|p| p.into_inner()) = s;
        s
    }

    /// Status without waiting on a retrain in progress.
    pub fn view(&self) -> SessionView {
        let s = *self.snapshot.read().unwrap_or_else(|p| p.into_inner());
        SessionView {
            session_id: self.id.clone(),
            status: s.status,
            mode: self.config.mode,
            strategy: self.config.strategy,
            voxel_size: self.config.voxel_size,
            progress: s.progress,
        }
    }

    /// The pending query, retraining first when a round just finished.
    pub fn next(&self) -> Result<QueryPayload, SessionError> {
        let mut w = self.lock();
        if w.campaign.pending_query().is_none() && !w.campaign.is_done() {
            let mut s = self.snapshot.write().unwrap_or_else(|p| p.into_inner());
            s.status = Status::Advancing;
        }
        let query = w
            .campaign
            .next_query()
            .map_err(SessionError::Internal)?
            .cloned();
        let snap = self.publish(&w.campaign);
        let Some(q) = query else {
            return Err(SessionError::Done(snap.progress));
        };
        let cloud = &self.clouds[&q.scan_id];
        let points = q
            .point_indices
            .iter()
            .map(|&i| {
                let p = cloud.points()[i as usize];
                PointPayload {
                    index: i,
                    x: p.x,
                    y: p.y,
                    z: p.z,
                    intensity: p.intensity,
                }
            })
            .collect();
        Ok(QueryPayload {
            session_id: self.id.clone(),
            status: snap.status,
            round: q.round,
            scan_id: q.scan_id,
            coord: q.coord,
            voxel_size: self.config.voxel_size,
            strategy: q.strategy,
            score: q.score,
            points,
            progress: snap.progress,
        })
    }

    /// Validates, persists and commits one answer.
    pub fn label(&self, req: LabelRequest) -> Result<LabelAck, SessionError> {
        let mut w = self.lock();
        if w.campaign.is_done() {
            return Err(SessionError::Conflict("campaign is done".into()));
        }
        let entry: JournalEntry =
            w.campaign
                .preview_submission(&req.scan_id, req.coord, req.labels.clone())?;
        let k = self.config.classes;
        if let Some(l) = req.labels.iter().find(|&&l| l == 0 || l > k) {
            return Err(SessionError::Invalid(format!("label {l} outside 1..={k}")));
        }
        w.journal.append(std::slice::from_ref(&entry))?;
        w.campaign.submit(&req.scan_id, req.coord, req.labels)?;
        let snap = self.publish(&w.campaign);
        log::debug!(
            "labeled {} voxel {} ({} points)",
            entry.scan_id,
            entry.coord,
            entry.point_indices.len()
        );
        Ok(LabelAck {
            session_id: self.id.clone(),
            accepted: true,
            status: snap.status,
            journal_entries: w.campaign.journal().len(),
            progress: snap.progress,
        })
    }

    /// Selected-class frequencies against the pool's label distribution.
    /// The pool is ground truth when every scan has it, else the current
    /// pseudo labels, else unlabeled.
    pub fn stats(&self) -> Result<FrequencyReport> {
        let w = self.lock();
        let base: BTreeMap<String, LabelSet> = match &self.ground_truth {
            Some(gt) => gt.clone(),
            None => self
                .clouds
                .iter()
                .map(|(id, cloud)| {
                    let labels = w
                        .campaign
                        .pseudo_labels(id)
                        .unwrap_or_else(|| vec![0; cloud.len()]);
                    Ok((id.clone(), LabelSet::new(labels, self.config.classes)?))
                })
                .collect::<Result<_>>()?,
        };
        class_frequencies(w.campaign.journal(), &base, &self.class_names)
    }

    pub fn journal(&self) -> AnnotationJournal {
        self.lock().campaign.journal().clone()
    }
}
