//! Multinomial logistic classifier over handcrafted per-point features.
//!
//! Features per point: `x, y, z, range, intensity, z/range` plus a bias
//! column. The model standardizes the six raw features with a per-feature
//! center and scale fixed the first time it is fit, then applies a
//! `K x 7` weight matrix followed by softmax. Training is full-batch
//! gradient descent on mean cross-entropy; a step that would raise the
//! loss is retried at half the step size, so the loss never increases.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{LabelSet, Point, PointCloud, IGNORE_ID};
use crate::error::{Error, Result};
use crate::prediction::{PredictionMatrix, PredictionSource};

pub const FEATURE_DIM: usize = 6;
pub const ROW_DIM: usize = FEATURE_DIM + 1;

pub type FeatureRow = [f64; ROW_DIM];

const CHECKPOINT_HEADER: &str = "annotator-toy-model v1";
const MIN_STEP: f64 = 1e-12;
const INIT_SPREAD: f64 = 0.01;

pub fn featurize_point(p: &Point) -> FeatureRow {
    let (x, y, z) = (f64::from(p.x), f64::from(p.y), f64::from(p.z));
    let range = (x * x + y * y + z * z).sqrt();
    let elevation = if range > 0.0 { z / range } else { 0.0 };
    [x, y, z, range, f64::from(p.intensity), elevation, 1.0]
}

pub fn featurize(cloud: &PointCloud) -> Vec<FeatureRow> {
    cloud.points().iter().map(featurize_point).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 0.1,
            epochs: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelState {
    Untrained,
    Trained,
    SourcePretrained,
}

impl ModelState {
    fn as_str(self) -> &'static str {
        match self {
            ModelState::Untrained => "untrained",
            ModelState::Trained => "trained",
            ModelState::SourcePretrained => "source-pretrained",
        }
    }
}

impl FromStr for ModelState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "untrained" => Ok(ModelState::Untrained),
            "trained" => Ok(ModelState::Trained),
            "source-pretrained" => Ok(ModelState::SourcePretrained),
            _ => Err(Error::Config(format!("unknown model state {s:?}"))),
        }
    }
}

/// Which loss a fit minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Mean cross-entropy of the annotated target points.
    Al,
    /// Same loss as `Al`; the caller starts from source-pretrained weights.
    Asfda,
    /// Mean cross-entropy on source plus mean cross-entropy on target.
    Ada,
}

/// Labeled feature rows with ignore-labeled points removed. Targets are
/// zero-based class indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    rows: Vec<FeatureRow>,
    targets: Vec<usize>,
}

impl TrainingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: FeatureRow, label: u16) {
        if label != IGNORE_ID {
            self.rows.push(row);
            self.targets.push(usize::from(label) - 1);
        }
    }

    pub fn from_cloud(cloud: &PointCloud, labels: &LabelSet) -> Result<Self> {
        labels.check_pairs_with(cloud)?;
        let mut set = TrainingSet::new();
        for (p, &l) in cloud.points().iter().zip(labels.labels()) {
            set.push(featurize_point(p), l);
        }
        Ok(set)
    }

    pub fn extend(&mut self, other: &TrainingSet) {
        self.rows.extend_from_slice(&other.rows);
        self.targets.extend_from_slice(&other.targets);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }

    /// Train ids `1..=K`.
    pub fn labels(&self) -> impl Iterator<Item = u16> + '_ {
        self.targets.iter().map(|&t| t as u16 + 1)
    }

    fn max_target(&self) -> Option<usize> {
        self.targets.iter().copied().max()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    classes: usize,
    feature_dim: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    config: FitConfig,
    state: ModelState,
}

impl ToyModel {
    /// Untrained model with small seed-determined weights.
    pub fn fresh(classes: usize, config: FitConfig) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Config("model needs at least one class".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let weights = (0..classes * ROW_DIM)
            .map(|_| rng.random_range(-INIT_SPREAD..INIT_SPREAD))
            .collect();
        Ok(ToyModel {
            classes,
            feature_dim: FEATURE_DIM,
            center: vec![0.0; FEATURE_DIM],
            scale: vec![1.0; FEATURE_DIM],
            weights,
            config,
            state: ModelState::Untrained,
        })
    }

    pub fn from_parts(
        classes: usize,
        feature_dim: usize,
        center: Vec<f64>,
        scale: Vec<f64>,
        weights: Vec<f64>,
        config: FitConfig,
        state: ModelState,
    ) -> Result<Self> {
        if classes == 0
            || center.len() != feature_dim
            || scale.len() != feature_dim
            || weights.len() != classes * (feature_dim + 1)
        {
            return Err(Error::Usage(format!(
                "inconsistent model shape: {classes} classes, {feature_dim} features, \
                 {} weights, {} centers, {} scales",
                weights.len(),
                center.len(),
                scale.len()
            )));
        }
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || center.iter().chain(&weights).any(|v| !v.is_finite())
        {
            return Err(Error::Usage("model parameters must be finite".into()));
        }
        Ok(ToyModel {
            classes,
            feature_dim,
            center,
            scale,
            weights,
            config,
            state,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn state(&self) -> ModelState {
        self.state
    }

    pub fn set_state(&mut self, state: ModelState) {
        self.state = state;
    }

    pub fn with_config(mut self, config: FitConfig) -> Self {
        self.config = config;
        self
    }

    fn check_dims(&self) -> Result<()> {
        if self.feature_dim != FEATURE_DIM {
            return Err(Error::Usage(format!(
                "model expects {} features, featurizer produces {FEATURE_DIM}",
                self.feature_dim
            )));
        }
        Ok(())
    }

    fn standardize(&self, row: &FeatureRow) -> FeatureRow {
        let mut out = *row;
        for j in 0..FEATURE_DIM {
            out[j] = (row[j] - self.center[j]) / self.scale[j];
        }
        out[FEATURE_DIM] = 1.0;
        out
    }

    fn fit_standardization(&mut self, rows: &[FeatureRow]) {
        let n = rows.len() as f64;
        for j in 0..FEATURE_DIM {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            self.center[j] = mean;
            self.scale[j] = if sd > 1e-12 { sd } else { 1.0 };
        }
    }

    pub fn logits(&self, row: &FeatureRow) -> Vec<f64> {
        logits_of(&self.weights, self.classes, &self.standardize(row))
    }

    pub fn predict_row(&self, row: &FeatureRow) -> Vec<f64> {
        let mut l = self.logits(row);
        softmax_in_place(&mut l);
        l
    }

    pub fn predict_rows(&self, rows: &[FeatureRow]) -> Result<PredictionMatrix> {
        self.check_dims()?;
        if rows.is_empty() {
            return Err(Error::Usage("no rows to predict".into()));
        }
        let values: Vec<f64> = rows
            .par_iter()
            .flat_map_iter(|r| self.predict_row(r))
            .collect();
        Ok(PredictionMatrix::from_trusted(
            values,
            self.classes,
            PredictionSource::ToyLearner,
        ))
    }

    pub fn predict_proba(&self, cloud: &PointCloud) -> Result<PredictionMatrix> {
        self.predict_rows(&featurize(cloud))
    }

    /// Train ids `1..=K` of the most probable class per row.
    pub fn predict_labels(&self, rows: &[FeatureRow]) -> Vec<u16> {
        rows.par_iter()
            .map(|r| crate::prediction::argmax(&self.logits(r)) as u16 + 1)
            .collect()
    }

    pub fn to_checkpoint(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CHECKPOINT_HEADER}");
        let _ = writeln!(s, "classes {}", self.classes);
        let _ = writeln!(s, "features {}", self.feature_dim);
        let _ = writeln!(s, "learning_rate {}", fmt17(self.config.learning_rate));
        let _ = writeln!(s, "epochs {}", self.config.epochs);
        let _ = writeln!(s, "seed {}", self.config.seed);
        let _ = writeln!(s, "state {}", self.state.as_str());
        let _ = writeln!(s, "center {}", join17(&self.center));
        let _ = writeln!(s, "scale {}", join17(&self.scale));
        let _ = writeln!(s, "weights");
        for row in self.weights.chunks_exact(self.feature_dim + 1) {
            let _ = writeln!(s, "{}", join17(row));
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("model checkpoint: {what}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(CHECKPOINT_HEADER) {
            return Err(bad("missing header"));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {key}")))?;
            line.strip_prefix(key)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| bad(&format!("expected {key}, got {line:?}")))
        };
        let num = |v: String, key: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| bad(&format!("bad {key}")))
        };
        let int = |v: String, key: &str| -> Result<u64> {
            v.parse::<u64>().map_err(|_| bad(&format!("bad {key}")))
        };
        let classes = int(field("classes")?, "classes")? as usize;
        let feature_dim = int(field("features")?, "features")? as usize;
        let learning_rate = num(field("learning_rate")?, "learning_rate")?;
        let epochs = int(field("epochs")?, "epochs")? as usize;
        let seed = int(field("seed")?, "seed")?;
        let state: ModelState = field("state")?.parse()?;
        let vec = |v: String, key: &str| -> Result<Vec<f64>> {
            v.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| bad(&format!("bad {key} value {t:?}")))
                })
                .collect()
        };
        let center = vec(field("center")?, "center")?;
        let scale = vec(field("scale")?, "scale")?;
        if !field("weights")?.is_empty() {
            return Err(bad("malformed weights marker"));
        }
        let mut weights = Vec::new();
        for line in lines {
            weights.extend(vec(line.to_string(), "weights")?);
        }
        ToyModel::from_parts(
            classes,
            feature_dim,
            center,
            scale,
            weights,
            FitConfig {
                learning_rate,
                epochs,
                seed,
            },
            state,
        )
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn join17(vals: &[f64]) -> String {
    vals.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(" ")
}

fn logits_of(weights: &[f64], classes: usize, z: &FeatureRow) -> Vec<f64> {
    let mut out = vec![0.0; classes];
    logits_into(weights, z, &mut out);
    out
}

fn logits_into(weights: &[f64], z: &FeatureRow, out: &mut [f64]) {
    for (o, w) in out.iter_mut().zip(weights.chunks_exact(ROW_DIM)) {
        *o = w.iter().zip(z).map(|(w, x)| w * x).sum();
    }
}

pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

/// Standardized rows paired with targets, ready for the optimizer.
struct Batch {
    rows: Vec<FeatureRow>,
    targets: Vec<usize>,
}

impl Batch {
    fn new(model: &ToyModel, set: &TrainingSet) -> Self {
        Batch {
            rows: set.rows.iter().map(|r| model.standardize(r)).collect(),
            targets: set.targets.clone(),
        }
    }

    /// Adds this batch's mean loss and mean gradient into the accumulators.
    fn accumulate(&self, weights: &[f64], classes: usize, loss: &mut f64, grad: &mut [f64]) {
        let n = self.rows.len() as f64;
        let mut total = 0.0;
        let mut local = vec![0.0; grad.len()];
        let mut l = vec![0.0; classes];
        for (z, &t) in self.rows.iter().zip(&self.targets) {
            logits_into(weights, z, &mut l);
            let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + l.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - l[t];
            for v in l.iter_mut() {
                *v = (*v - lse).exp();
            }
            l[t] -= 1.0;
            for (dk, g) in l.iter().zip(local.chunks_exact_mut(ROW_DIM)) {
                for (g, x) in g.iter_mut().zip(z) {
                    *g += dk * x;
                }
            }
        }
        *loss += total / n;
        for (g, l) in grad.iter_mut().zip(local) {
            *g += l / n;
        }
    }
}

struct Problem {
    target: Batch,
    source: Option<Batch>,
    classes: usize,
}

impl Problem {
    fn loss_and_gradient(&self, weights: &[f64]) -> (f64, Vec<f64>) {
        let mut loss = 0.0;
        let mut grad = vec![0.0; weights.len()];
        self.target
            .accumulate(weights, self.classes, &mut loss, &mut grad);
        if let Some(src) = &self.source {
            src.accumulate(weights, self.classes, &mut loss, &mut grad);
        }
        (loss, grad)
    }
}

fn prepare(
    init: &ToyModel,
    data: &TrainingSet,
    objective: Objective,
    source: Option<&TrainingSet>,
) -> Result<(ToyModel, Problem)> {
    init.check_dims()?;
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let source = match (objective, source) {
        (Objective::Ada, Some(s)) if !s.is_empty() => Some(s),
        (Objective::Ada, _) => {
            return Err(Error::Usage(
                "ada objective requires labeled source data".into(),
            ))
        }
        _ => None,
    };
    let max_target = data
        .max_target()
        .max(source.and_then(TrainingSet::max_target))
        .unwrap_or(0);
    if max_target >= init.classes {
        return Err(Error::Usage(format!(
            "label {} exceeds the model's {} classes",
            max_target + 1,
            init.classes
        )));
    }
    let mut model = init.clone();
    if model.state == ModelState::Untrained {
        let mut all = data.rows.clone();
        if let Some(s) = source {
            all.extend_from_slice(&s.rows);
        }
        model.fit_standardization(&all);
    }
    let problem = Problem {
        target: Batch::new(&model, data),
        source: source.map(|s| Batch::new(&model, s)),
        classes: model.classes,
    };
    Ok((model, problem))
}

/// Objective value and gradient with respect to the weight matrix
/// (row-major, `K x 7`) at the model's current weights.
pub fn loss_and_gradient(
    model: &ToyModel,
    data: &TrainingSet,
    objective: Objective,
    source: Option<&TrainingSet>,
) -> Result<(f64, Vec<f64>)> {
    let (model, problem) = prepare(model, data, objective, source)?;
    Ok(problem.loss_and_gradient(&model.weights))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub initial_loss: f64,
    pub final_loss: f64,
}

pub fn fit(
    init: &ToyModel,
    data: &TrainingSet,
    objective: Objective,
    source: Option<&TrainingSet>,
) -> Result<ToyModel> {
    fit_with_report(init, data, objective, source).map(|(m, _)| m)
}

pub fn fit_with_report(
    init: &ToyModel,
    data: &TrainingSet,
    objective: Objective,
    source: Option<&TrainingSet>,
) -> Result<(ToyModel, FitReport)> {
    let (mut model, problem) = prepare(init, data, objective, source)?;
    let (mut loss, mut grad) = problem.loss_and_gradient(&model.weights);
    let initial_loss = loss;
    let mut step = model.config.learning_rate;
    for _ in 0..model.config.epochs {
        loop {
            let candidate: Vec<f64> = model
                .weights
                .iter()
                .zip(&grad)
                .map(|(w, g)| w - step * g)
                .collect();
            let (next_loss, next_grad) = problem.loss_and_gradient(&candidate);
            if next_loss <= loss {
                model.weights = candidate;
                loss = next_loss;
                grad = next_grad;
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                break;
            }
        }
    }
    if !(loss <= initial_loss) {
        return Err(Error::Invariant(format!(
            "training loss rose from {initial_loss} to {loss}"
        )));
    }
    if model.config.epochs > 0 {
        model.state = ModelState::Trained;
    }
    Ok((
        model,
        FitReport {
            initial_loss,
            final_loss: loss,
        },
    ))
}

/// Fits a fresh model on labeled source data and marks it as the warm start.
pub fn pretrain_source(
    classes: usize,
    config: FitConfig,
    source: &TrainingSet,
) -> Result<ToyModel> {
    let fresh = ToyModel::fresh(classes, config)?;
    let mut model = fit(&fresh, source, Objective::Al, None)?;
    model.state = ModelState::SourcePretrained;
    Ok(model)
}
