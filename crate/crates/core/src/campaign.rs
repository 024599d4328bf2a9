//! Multi-round annotation campaigns.
//!
//! Each round selects at most one voxel per scan using the predictions
//! current at round start, obtains labels for every selected voxel, commits
//! them to the journal, then retrains the toy learner and refreshes
//! predictions. The model after round `r` is a pure function of the
//! configuration and the journal through round `r`, which is what makes a
//! journal file sufficient to resume a campaign.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::journal::{AnnotationJournal, JournalEntry, JournalHeader};
use crate::learner::{
    featurize, fit, pretrain_source, FeatureRow, FitConfig, ModelState, Objective, ToyModel,
    TrainingSet,
};
use crate::oracle::Oracle;
use crate::prediction::PredictionMatrix;
use crate::report::{accuracy, compute_miou};
use crate::strategy::{select_voxel, SelectionParams, Strategy};
use crate::voxel::{build_index, check_voxel_size, VoxelCoord, VoxelIndex, SELECTION_VOXEL_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Target-only active learning from a cold model.
    Al,
    /// Warm start from a source-pretrained model; no source data in the loop.
    Asfda,
    /// Warm start, and source data stays in every retraining.
    Ada,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Al => "al",
            Mode::Asfda => "asfda",
            Mode::Ada => "ada",
        }
    }

    pub fn objective(self) -> Objective {
        match self {
            Mode::Al => Objective::Al,
            Mode::Asfda => Objective::Asfda,
            Mode::Ada => Objective::Ada,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "al" => Ok(Mode::Al),
            "asfda" => Ok(Mode::Asfda),
            "ada" => Ok(Mode::Ada),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

/// Annotation allowance per scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    VoxelsPerScan(u32),
    PointsPerScan(u64),
}

impl Default for Budget {
    fn default() -> Self {
        Budget::VoxelsPerScan(5)
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::VoxelsPerScan(v) => write!(f, "{v} voxels per scan"),
            Budget::PointsPerScan(p) => write!(f, "{p} points per scan"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub mode: Mode,
    pub strategy: Strategy,
    pub voxel_size: f64,
    pub budget: Budget,
    pub seed: u64,
    pub classes: u16,
    /// The fit seed is overridden by `seed`.
    pub learner: FitConfig,
    pub selection: SelectionParams,
}

impl CampaignConfig {
    pub fn new(classes: u16) -> Self {
        CampaignConfig {
            mode: Mode::Al,
            strategy: Strategy::Vcd,
            voxel_size: SELECTION_VOXEL_SIZE,
            budget: Budget::default(),
            seed: 0,
            classes,
            learner: FitConfig::default(),
            selection: SelectionParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_voxel_size(self.voxel_size)?;
        match self.budget {
            Budget::VoxelsPerScan(0) | Budget::PointsPerScan(0) => {
                return Err(Error::Config("budget must be at least 1".into()))
            }
            _ => {}
        }
        if self.classes == 0 {
            return Err(Error::Config("at least one class is required".into()));
        }
        if self.strategy == Strategy::Margin && self.classes < 2 {
            return Err(Error::Config("margin needs at least two classes".into()));
        }
        if !(self.learner.learning_rate.is_finite() && self.learner.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.selection.min_points_per_voxel == 0 {
            return Err(Error::Config(
                "min_points_per_voxel must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            seed: self.seed,
            ..self.learner
        }
    }

    pub fn journal_header(&self) -> JournalHeader {
        JournalHeader {
            mode: self.mode,
            strategy: self.strategy,
            voxel_size: self.voxel_size,
            budget: self.budget,
            seed: self.seed,
            classes: self.classes,
        }
    }
}

/// Strategy actually used for a round. A model with no training cannot
/// rank voxels, so an untrained AL model falls back to random selection;
/// warm-started modes use the configured strategy from round 1.
pub fn cold_start_policy(
    mode: Mode,
    round: u32,
    model_state: ModelState,
    configured: Strategy,
) -> Strategy {
    let _ = (mode, round);
    match model_state {
        ModelState::Untrained => Strategy::Random,
        ModelState::Trained | ModelState::SourcePretrained => configured,
    }
}

/// Splitmix64 over the campaign seed, scan position and round.
fn derive_seed(seed: u64, scan: usize, round: u32) -> u64 {
    let mut z = seed
        ^ (scan as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ u64::from(round).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Query {
    pub scan_id: String,
    #[serde(skip)]
    pub scan_index: usize,
    pub round: u32,
    pub coord: VoxelCoord,
    pub strategy: Strategy,
    pub score: f64,
    pub point_indices: Vec<u32>,
}

impl Query {
    fn into_entry(self, labels: Vec<u16>) -> JournalEntry {
        JournalEntry {
            scan_id: self.scan_id,
            round: self.round,
            coord: self.coord,
            strategy: self.strategy,
            score: self.score,
            point_indices: self.point_indices,
            revealed_labels: labels,
        }
    }
}

#[derive(Debug, Clone)]
struct RoundPlan {
    round: u32,
    queries: Vec<Query>,
    answered: usize,
    exhausted_scans: usize,
}

impl RoundPlan {
    fn pending(&self) -> Option<&Query> {
        self.queries.get(self.answered)
    }

    fn is_complete(&self) -> bool {
        self.answered == self.queries.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluatedOn {
    HeldOut,
    Annotated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: u32,
    pub new_entries: usize,
    /// Cumulative annotated points over all scans after this round.
    pub annotated_points: u64,
    /// Scans that still had budget but no eligible voxel.
    pub exhausted_scans: usize,
    pub accuracy: Option<f64>,
    pub miou: Option<f64>,
    pub evaluated_on: EvaluatedOn,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CampaignMetrics {
    pub rounds: Vec<RoundMetrics>,
}

impl CampaignMetrics {
    pub fn rounds_executed(&self) -> usize {
        self.rounds.len()
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.rounds.last().and_then(|r| r.accuracy)
    }

    pub fn final_miou(&self) -> Option<f64> {
        self.rounds.last().and_then(|r| r.miou)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub round: u32,
    pub completed_rounds: u32,
    pub max_rounds: Option<u32>,
    pub entries: usize,
    pub annotated_points: u64,
    pub pending_in_round: usize,
    pub done: bool,
}

struct ScanState {
    cloud: PointCloud,
    features: Vec<FeatureRow>,
    index: VoxelIndex,
    selected: BTreeSet<VoxelCoord>,
    annotated_points: u64,
}

struct EvalSet {
    rows: Vec<FeatureRow>,
    labels: Vec<u16>,
}

pub struct Campaign {
    config: CampaignConfig,
    scans: Vec<ScanState>,
    lookup: HashMap<String, usize>,
    base_model: ToyModel,
    source_set: Option<TrainingSet>,
    model: ToyModel,
    predictions: Vec<Option<PredictionMatrix>>,
    journal: AnnotationJournal,
    completed_rounds: u32,
    plan: Option<RoundPlan>,
    done: bool,
    eval: Option<EvalSet>,
    metrics: CampaignMetrics,
}

impl fmt::Debug for Campaign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Campaign")
            .field("config", &self.config)
            .field("scans", &self.scans.len())
            .field("entries", &self.journal.len())
            .field("completed_rounds", &self.completed_rounds)
            .field("done", &self.done)
            .finish()
    }
}

impl Campaign {
    /// Validates the configuration, voxelizes the target scans and, for the
    /// warm-started modes, pretrains on the source dataset. Target labels,
    /// if present, are ignored; labels only ever come from the oracle.
    pub fn new(config: CampaignConfig, target: Dataset, source: Option<Dataset>) -> Result<Self> {
        config.validate()?;
        if target.is_empty() {
            return Err(Error::Config("target dataset has no scans".into()));
        }
        let source = match (config.mode, source) {
            (Mode::Al, Some(_)) => {
                return Err(Error::Config(
                    "AL mode does not take a source dataset".into(),
                ))
            }
            (Mode::Al, None) => None,
            (mode, None) => {
                return Err(Error::Config(format!(
                    "{mode} mode requires a source dataset"
                )))
            }
            (_, Some(s)) => {
                s.require_labels("source")?;
                if let Some(bad) = s
                    .scans()
                    .iter()
                    .find(|sc| sc.labels.as_ref().unwrap().class_count() != config.classes)
                {
                    return Err(Error::Config(format!(
                        "source scan {} uses a different class count than the campaign",
                        bad.id()
                    )));
                }
                Some(s.training_set()?)
            }
        };
        let voxel_size = config.voxel_size;
        let scans = target
            .into_scans()
            .into_par_iter()
            .map(|s| {
                let index = build_index(&s.cloud, voxel_size)?;
                Ok(ScanState {
                    features: featurize(&s.cloud),
                    cloud: s.cloud,
                    index,
                    selected: BTreeSet::new(),
                    annotated_points: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let lookup = scans
            .iter()
            .enumerate()
            .map(|(i, s)| (s.cloud.scan_id().to_string(), i))
            .collect();
        let classes = usize::from(config.classes);
        let fit_config = config.fit_config();
        let base_model = match &source {
            Some(src) => pretrain_source(classes, fit_config, src)?,
            None => ToyModel::fresh(classes, fit_config)?,
        };
        let source_set = match config.mode {
            Mode::Ada => source,
            _ => None,
        };
        let mut campaign = Campaign {
            journal: AnnotationJournal::new(config.journal_header()),
            predictions: vec![None; scans.len()],
            model: base_model.clone(),
            config,
            scans,
            lookup,
            base_model,
            source_set,
            completed_rounds: 0,
            plan: None,
            done: false,
            eval: None,
            metrics: CampaignMetrics::default(),
        };
        campaign.refresh_predictions()?;
        Ok(campaign)
    }

    /// Labeled scans whose accuracy and mIoU are reported after each round.
    pub fn with_evaluation(mut self, eval: &Dataset) -> Result<Self> {
        eval.require_labels("evaluation")?;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for s in eval.scans() {
            rows.extend(featurize(&s.cloud));
            labels.extend_from_slice(s.labels.as_ref().unwrap().labels());
        }
        self.eval = Some(EvalSet { rows, labels });
        Ok(self)
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    pub fn journal(&self) -> &AnnotationJournal {
        &self.journal
    }

    pub fn model(&self) -> &ToyModel {
        &self.model
    }

    pub fn metrics(&self) -> &CampaignMetrics {
        &self.metrics
    }

    pub fn scan_ids(&self) -> impl Iterator<Item = &str> {
        self.scans.iter().map(|s| s.cloud.scan_id())
    }

    pub fn cloud(&self, scan_id: &str) -> Option<&PointCloud> {
        self.lookup.get(scan_id).map(|&i| &self.scans[i].cloud)
    }

    pub fn voxel_index(&self, scan_id: &str) -> Option<&VoxelIndex> {
        self.lookup.get(scan_id).map(|&i| &self.scans[i].index)
    }

    pub fn predictions(&self, scan_id: &str) -> Option<&PredictionMatrix> {
        self.lookup
            .get(scan_id)
            .and_then(|&i| self.predictions[i].as_ref())
    }

    /// Predicted train ids for a scan, when the model has been trained.
    pub fn pseudo_labels(&self, scan_id: &str) -> Option<Vec<u16>> {
        self.predictions(scan_id).map(|p| p.pseudo_labels().0)
    }

    pub fn completed_rounds(&self) -> u32 {
        self.completed_rounds
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// True when a finished round is waiting for its retrain, which the
    /// next call to [`Campaign::next_query`] performs.
    pub fn is_advancing(&self) -> bool {
        self.plan.as_ref().is_some_and(RoundPlan::is_complete)
    }

    pub fn max_rounds(&self) -> Option<u32> {
        match self.config.budget {
            Budget::VoxelsPerScan(v) => Some(v),
            Budget::PointsPerScan(_) => None,
        }
    }

    pub fn progress(&self) -> Progress {
        let (round, pending) = match &self.plan {
            Some(p) => (p.round, p.queries.len() - p.answered),
            None => (self.completed_rounds, 0),
        };
        Progress {
            round,
            completed_rounds: self.completed_rounds,
            max_rounds: self.max_rounds(),
            entries: self.journal.len(),
            annotated_points: self.scans.iter().map(|s| s.annotated_points).sum(),
            pending_in_round: pending,
            done: self.done,
        }
    }

    fn refresh_predictions(&mut self) -> Result<()> {
        if self.model.state() == ModelState::Untrained {
            self.predictions = vec![None; self.scans.len()];
            return Ok(());
        }
        let model = &self.model;
        self.predictions = self
            .scans
            .par_iter()
            .map(|s| model.predict_rows(&s.features).map(Some))
            .collect::<Result<_>>()?;
        Ok(())
    }

    fn annotated_set(&self) -> TrainingSet {
        let mut set = TrainingSet::new();
        for e in self.journal.entries() {
            let scan = &self.scans[self.lookup[&e.scan_id]];
            for (&i, &l) in e.point_indices.iter().zip(&e.revealed_labels) {
                set.push(scan.features[i as usize], l);
            }
        }
        set
    }

    fn retrain(&mut self) -> Result<()> {
        let data = self.annotated_set();
        if data.is_empty() {
            log::warn!(
                "no labeled points after round {}; keeping model",
                self.completed_rounds
            );
            return Ok(());
        }
        self.model = fit(
            &self.base_model,
            &data,
            self.config.mode.objective(),
            self.source_set.as_ref(),
        )?;
        self.refresh_predictions()
    }

    fn evaluate(&self) -> (Option<f64>, Option<f64>, EvaluatedOn) {
        if self.model.state() == ModelState::Untrained {
            let on = if self.eval.is_some() {
                EvaluatedOn::HeldOut
            } else {
                EvaluatedOn::Annotated
            };
            return (None, None, on);
        }
        let (rows, truth, on) = match &self.eval {
            Some(e) => (e.rows.clone(), e.labels.clone(), EvaluatedOn::HeldOut),
            None => {
                let set = self.annotated_set();
                (
                    set.rows().to_vec(),
                    set.labels().collect(),
                    EvaluatedOn::Annotated,
                )
            }
        };
        let pred = self.model.predict_labels(&rows);
        let acc = accuracy(&pred, &truth);
        let miou = compute_miou(&pred, &truth, self.config.classes)
            .ok()
            .and_then(|m| m.mean);
        (acc, miou, on)
    }

    fn compute_plan(&self, round: u32) -> Result<RoundPlan> {
        let empty = RoundPlan {
            round,
            queries: Vec::new(),
            answered: 0,
            exhausted_scans: 0,
        };
        if let Budget::VoxelsPerScan(v) = self.config.budget {
            if round > v {
                return Ok(empty);
            }
        }
        let strategy = cold_start_policy(
            self.config.mode,
            round,
            self.model.state(),
            self.config.strategy,
        );
        let budget = self.config.budget;
        let params = self.config.selection;
        let seed = self.config.seed;
        let picks = self
            .scans
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                if let Budget::PointsPerScan(p) = budget {
                    if s.annotated_points >= p {
                        return Ok(None);
                    }
                }
                let pick = select_voxel(
                    &s.index,
                    self.predictions[i].as_ref(),
                    strategy,
                    &s.selected,
                    &params,
                    derive_seed(seed, i, round),
                )?;
                Ok(Some(pick.map(|score| Query {
                    scan_id: s.cloud.scan_id().to_string(),
                    scan_index: i,
                    round,
                    coord: score.coord,
                    strategy,
                    score: score.value,
                    point_indices: s.index.get(&score.coord).unwrap().to_vec(),
                })))
            })
            .collect::<Result<Vec<Option<Option<Query>>>>>()?;
        let exhausted_scans = picks.iter().filter(|p| matches!(p, Some(None))).count();
        if exhausted_scans > 0 {
            log::info!("round {round}: {exhausted_scans} scans have no eligible voxel left");
        }
        Ok(RoundPlan {
            round,
            queries: picks.into_iter().flatten().flatten().collect(),
            answered: 0,
            exhausted_scans,
        })
    }

    fn record(&mut self, entry: &JournalEntry) {
        let i = self.lookup[&entry.scan_id];
        let scan = &mut self.scans[i];
        scan.selected.insert(entry.coord);
        scan.annotated_points += entry.point_indices.len() as u64;
    }

    fn finish_round(&mut self) -> Result<()> {
        let plan = self.plan.take().expect("finishing a planned round");
        debug_assert!(plan.is_complete());
        self.completed_rounds = plan.round;
        self.retrain()?;
        let (accuracy, miou, evaluated_on) = self.evaluate();
        self.metrics.rounds.push(RoundMetrics {
            round: plan.round,
            new_entries: plan.queries.len(),
            annotated_points: self.scans.iter().map(|s| s.annotated_points).sum(),
            exhausted_scans: plan.exhausted_scans,
            accuracy,
            miou,
            evaluated_on,
        });
        Ok(())
    }

    /// Finishes a completed round and plans the next one if needed.
    fn ensure_plan(&mut self) -> Result<()> {
        if let Some(plan) = &self.plan {
            if !plan.is_complete() {
                return Ok(());
            }
            self.finish_round()?;
        }
        if self.done {
            return Ok(());
        }
        let plan = self.compute_plan(self.completed_rounds + 1)?;
        if plan.queries.is_empty() {
            self.done = true;
        } else {
            self.plan = Some(plan);
        }
        Ok(())
    }

    /// The voxel awaiting labels, planning (and retraining) as needed.
    /// `None` once the budget is exhausted.
    pub fn next_query(&mut self) -> Result<Option<&Query>> {
        self.ensure_plan()?;
        Ok(self.plan.as_ref().and_then(RoundPlan::pending))
    }

    /// The voxel awaiting labels without advancing the campaign.
    pub fn pending_query(&self) -> Option<&Query> {
        self.plan.as_ref().and_then(RoundPlan::pending)
    }

    fn check_labels(&self, query: &Query, labels: &[u16]) -> Result<()> {
        if labels.len() != query.point_indices.len() {
            return Err(Error::Integrity(format!(
                "scan {} voxel {}: expected {} labels, got {}",
                query.scan_id,
                query.coord,
                query.point_indices.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > self.config.classes) {
            return Err(Error::Integrity(format!(
                "label {l} outside 0..={}",
                self.config.classes
            )));
        }
        Ok(())
    }

    /// The journal entry `submit` would commit, without committing it.
    /// The submission must name the pending query's scan and coordinate.
    pub fn preview_submission(
        &self,
        scan_id: &str,
        coord: VoxelCoord,
        labels: Vec<u16>,
    ) -> Result<JournalEntry> {
        let query = self
            .pending_query()
            .ok_or_else(|| Error::Usage("no query is pending".into()))?;
        if query.scan_id != scan_id || query.coord != coord {
            return Err(Error::Usage(format!(
                "submission for scan {scan_id} voxel {coord} does not match pending query \
                 (scan {} voxel {})",
                query.scan_id, query.coord
            )));
        }
        self.check_labels(query, &labels)?;
        Ok(query.clone().into_entry(labels))
    }

    /// Labels the pending voxel.
    pub fn submit(
        &mut self,
        scan_id: &str,
        coord: VoxelCoord,
        labels: Vec<u16>,
    ) -> Result<JournalEntry> {
        let entry = self.preview_submission(scan_id, coord, labels)?;
        self.journal.append(entry.clone())?;
        self.record(&entry);
        self.plan.as_mut().unwrap().answered += 1;
        Ok(entry)
    }

    /// Runs one full round against `oracle`. Either every selected voxel of
    /// the round is committed or, on any oracle failure, none is.
    pub fn run_round(&mut self, oracle: &mut dyn Oracle) -> Result<Vec<JournalEntry>> {
        self.ensure_plan()?;
        let Some(plan) = &self.plan else {
            return Ok(Vec::new());
        };
        let mut entries = Vec::with_capacity(plan.queries.len() - plan.answered);
        for q in &plan.queries[plan.answered..] {
            let labels = oracle.label_voxel(&q.scan_id, &q.point_indices)?;
            self.check_labels(q, &labels)
                .map_err(|e| Error::Oracle(e.to_string()))?;
            entries.push(q.clone().into_entry(labels));
        }
        self.journal.append_all(entries.clone())?;
        for e in &entries {
            self.record(e);
        }
        let plan = self.plan.as_mut().unwrap();
        plan.answered = plan.queries.len();
        self.finish_round()?;
        Ok(entries)
    }

    /// Runs rounds until the budget is exhausted, handing each committed
    /// round to `on_round` (for persistence).
    pub fn run(
        &mut self,
        oracle: &mut dyn Oracle,
        mut on_round: impl FnMut(&[JournalEntry]) -> Result<()>,
    ) -> Result<()> {
        loop {
            let entries = self.run_round(oracle)?;
            if entries.is_empty() {
                self.ensure_plan()?;
                if self.done {
                    return Ok(());
                }
                continue;
            }
            on_round(&entries)?;
        }
    }

    /// Replays a persisted journal onto a fresh campaign. Each round is
    /// re-planned and checked against the journal, so the restored state is
    /// exactly the state of the run that wrote it. A trailing partial round
    /// (from a live session) is left pending.
    pub fn resume(&mut self, journal: &AnnotationJournal) -> Result<()> {
        if !self.journal.is_empty() || self.completed_rounds != 0 || self.plan.is_some() {
            return Err(Error::Usage("resume needs a fresh campaign".into()));
        }
        if journal.header() != self.journal.header() {
            return Err(Error::Config(format!(
                "journal was written by a different campaign configuration: {:?}",
                journal.header()
            )));
        }
        let entries = journal.entries();
        let mut pos = 0;
        while pos < entries.len() {
            self.ensure_plan()?;
            let Some(plan) = &self.plan else {
                return Err(Error::Integrity(format!(
                    "journal continues past the end of the campaign ({} extra entries)",
                    entries.len() - pos
                )));
            };
            let round = plan.round;
            while pos < entries.len() && entries[pos].round == round {
                let e = &entries[pos];
                let expected = self.pending_query().ok_or_else(|| {
                    Error::Integrity(format!("round {round} has more entries than selections"))
                })?;
                if expected.scan_id != e.scan_id
                    || expected.coord != e.coord
                    || expected.strategy != e.strategy
                    || expected.point_indices != e.point_indices
                {
                    return Err(Error::Integrity(format!(
                        "journal entry for scan {} voxel {} in round {round} does not match \
                         the replayed selection (scan {} voxel {})",
                        e.scan_id, e.coord, expected.scan_id, expected.coord
                    )));
                }
                self.submit(&e.scan_id, e.coord, e.revealed_labels.clone())?;
                pos += 1;
            }
            if pos < entries.len() && !self.plan.as_ref().unwrap().is_complete() {
                return Err(Error::Integrity(format!(
                    "round {round} is incomplete but the journal continues with round {}",
                    entries[pos].round
                )));
            }
        }
        if self.plan.as_ref().is_some_and(RoundPlan::is_complete) {
            self.ensure_plan()?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct CampaignOutcome {
    pub journal: AnnotationJournal,
    pub model: ToyModel,
    pub metrics: CampaignMetrics,
}

/// Builds and runs a campaign to budget exhaustion.
pub fn run_campaign(
    config: CampaignConfig,
    target: Dataset,
    source: Option<Dataset>,
    eval: Option<&Dataset>,
    oracle: &mut dyn Oracle,
) -> Result<CampaignOutcome> {
    let mut campaign = Campaign::new(config, target, source)?;
    if let Some(e) = eval {
        campaign = campaign.with_evaluation(e)?;
    }
    campaign.run(oracle, |_| Ok(()))?;
    Ok(CampaignOutcome {
        journal: campaign.journal.clone(),
        model: campaign.model.clone(),
        metrics: campaign.metrics.clone(),
    })
}
