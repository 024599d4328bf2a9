//! Campaign metrics and the report files written to a run directory.
//!
//! `frequencies.csv` has columns `class_id,name,selected_count,selected_share,base_share,lift`
//! with one row per train id `1..=K`; `lift` is `inf` when a class was selected
//! but never occurs in the base labels. `curve.csv` has columns
//! `round,budget,metric,value` with one row per executed round, `budget`
//! being cumulative annotated points; `value` is empty when the model could
//! not be evaluated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::campaign::{CampaignConfig, CampaignMetrics};
use crate::cloud::{LabelSet, IGNORE_ID};
use crate::error::{Error, Result};
use crate::journal::AnnotationJournal;

pub const FREQUENCIES_FILE: &str = "frequencies.csv";
pub const CURVE_FILE: &str = "curve.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum Lift {
    Finite(f64),
    Infinite,
}

impl Lift {
    pub fn value(self) -> f64 {
        match self {
            Lift::Finite(v) => v,
            Lift::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassFrequency {
    pub class_id: u16,
    pub name: String,
    pub selected_count: u64,
    pub selected_share: f64,
    pub base_share: f64,
    pub lift: Lift,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyReport {
    pub classes: Vec<ClassFrequency>,
    /// Selected points whose revealed label is the ignore id.
    pub ignored_count: u64,
    /// True when the journal has no labeled (non-ignore) point.
    pub empty: bool,
}

impl FrequencyReport {
    pub fn total_selected(&self) -> u64 {
        self.classes.iter().map(|c| c.selected_count).sum::<u64>() + self.ignored_count
    }

    pub fn get(&self, class_id: u16) -> Option<&ClassFrequency> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }

    /// Summed shares over a set of classes.
    pub fn shares_of(&self, ids: &[u16]) -> (f64, f64) {
        self.classes
            .iter()
            .filter(|c| ids.contains(&c.class_id))
            .fold((0.0, 0.0), |(s, b), c| {
                (s + c.selected_share, b + c.base_share)
            })
    }
}

fn shares(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .map(|&c| {
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        })
        .collect()
}

/// Per-class counts of revealed labels against the class distribution of
/// `base` (all points of the referenced scans' label sets).
pub fn class_frequencies(
    journal: &AnnotationJournal,
    base: &BTreeMap<String, LabelSet>,
    names: &[String],
) -> Result<FrequencyReport> {
    let k = usize::from(journal.header().classes);
    let mut selected = vec![0u64; k + 1];
    for e in journal.entries() {
        let labels = base.get(&e.scan_id).ok_or_else(|| {
            Error::Integrity(format!("journal references unknown scan {}", e.scan_id))
        })?;
        if let Some(&i) = e
            .point_indices
            .iter()
            .find(|&&i| i as usize >= labels.len())
        {
            return Err(Error::Integrity(format!(
                "journal references point {i} of scan {} which has {} points",
                e.scan_id,
                labels.len()
            )));
        }
        for &l in &e.revealed_labels {
            let l = usize::from(l);
            if l > k {
                return Err(Error::Integrity(format!(
                    "revealed label {l} beyond {k} classes"
                )));
            }
            selected[l] += 1;
        }
    }
    let mut base_counts = vec![0u64; k + 1];
    for labels in base.values() {
        for &l in labels.labels() {
            if let Some(c) = base_counts.get_mut(usize::from(l)) {
                *c += 1;
            }
        }
    }
    let sel_share = shares(&selected[1..]);
    let base_share = shares(&base_counts[1..]);
    let classes = (1..=k)
        .map(|id| {
            let (s, b) = (sel_share[id - 1], base_share[id - 1]);
            let lift = match (s > 0.0, b > 0.0) {
                (_, true) => Lift::Finite(s / b),
                (false, false) => Lift::Finite(0.0),
                (true, false) => Lift::Infinite,
            };
            ClassFrequency {
                class_id: id as u16,
                name: names
                    .get(id - 1)
                    .cloned()
                    .unwrap_or_else(|| format!("class-{id}")),
                selected_count: selected[id],
                selected_share: s,
                base_share: b,
                lift,
            }
        })
        .collect();
    Ok(FrequencyReport {
        classes,
        ignored_count: selected[usize::from(IGNORE_ID)],
        empty: selected[1..].iter().all(|&c| c == 0),
    })
}

/// Fraction of positions with non-ignore truth where `pred` matches.
pub fn accuracy(pred: &[u16], truth: &[u16]) -> Option<f64> {
    let (hit, n) = pred
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t != IGNORE_ID)
        .fold((0u64, 0u64), |(h, n), (p, t)| {
            (h + u64::from(p == t), n + 1)
        });
    (n > 0).then(|| hit as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiouReport {
    /// IoU per train id `1..=K`; `None` for classes absent from both.
    pub per_class: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

/// Per-class IoU over positions with non-ignore truth. Predictions of the
/// ignore id count as false negatives for the true class.
pub fn compute_miou(pred: &[u16], truth: &[u16], classes: u16) -> Result<MiouReport> {
    if pred.len() != truth.len() {
        return Err(Error::Usage(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let k = usize::from(classes);
    let mut tp = vec![0u64; k + 1];
    let mut fp = vec![0u64; k + 1];
    let mut fn_ = vec![0u64; k + 1];
    for (&p, &t) in pred.iter().zip(truth) {
        if t == IGNORE_ID {
            continue;
        }
        let (p, t) = (usize::from(p), usize::from(t));
        if t > k || p > k {
            return Err(Error::Usage(format!("class id beyond {k} classes")));
        }
        if p == t {
            tp[t] += 1;
        } else {
            fn_[t] += 1;
            if p != 0 {
                fp[p] += 1;
            }
        }
    }
    let per_class: Vec<Option<f64>> = (1..=k)
        .map(|c| {
            let denom = tp[c] + fp[c] + fn_[c];
            (denom > 0).then(|| tp[c] as f64 / denom as f64)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok(MiouReport { per_class, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub round: u32,
    pub budget: u64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricCurve {
    pub metric: String,
    pub points: Vec<CurvePoint>,
}

impl MetricCurve {
    /// mIoU per round against cumulative annotated points.
    pub fn from_metrics(metrics: &CampaignMetrics) -> Self {
        MetricCurve {
            metric: "miou".into(),
            points: metrics
                .rounds
                .iter()
                .map(|r| CurvePoint {
                    round: r.round,
                    budget: r.annotated_points,
                    value: r.miou,
                })
                .collect(),
        }
    }

    pub fn budget_is_increasing(&self) -> bool {
        self.points.windows(2).all(|w| w[0].budget < w[1].budget)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_bytes<R: AsRef<[u8]>>(header: &[&str], rows: impl IntoIterator<Item = Vec<R>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

pub fn frequencies_csv(report: &FrequencyReport) -> Vec<u8> {
    csv_bytes(
        &[
            "class_id",
            "name",
            "selected_count",
            "selected_share",
            "base_share",
            "lift",
        ],
        report.classes.iter().map(|c| {
            vec![
                c.class_id.to_string(),
                c.name.clone(),
                c.selected_count.to_string(),
                c.selected_share.to_string(),
                c.base_share.to_string(),
                match c.lift {
                    Lift::Finite(v) => v.to_string(),
                    Lift::Infinite => "inf".into(),
                },
            ]
        }),
    )
}

pub fn curve_csv(curve: &MetricCurve) -> Vec<u8> {
    csv_bytes(
        &["round", "budget", "metric", "value"],
        curve.points.iter().map(|p| {
            vec![
                p.round.to_string(),
                p.budget.to_string(),
                curve.metric.clone(),
                opt(p.value),
            ]
        }),
    )
}

pub fn summary_text(
    config: &CampaignConfig,
    journal: &AnnotationJournal,
    metrics: &CampaignMetrics,
    frequencies: &FrequencyReport,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mode: {}", config.mode);
    let _ = writeln!(s, "strategy: {}", config.strategy);
    let _ = writeln!(s, "voxel_size: {}", config.voxel_size);
    let _ = writeln!(s, "budget: {}", config.budget);
    let _ = writeln!(s, "seed: {}", config.seed);
    let _ = writeln!(s, "rounds: {}", metrics.rounds_executed());
    let _ = writeln!(s, "entries: {}", journal.len());
    let _ = writeln!(s, "annotated_points: {}", journal.total_points());
    let _ = writeln!(s, "ignored_points: {}", frequencies.ignored_count);
    let exhausted: usize = metrics.rounds.iter().map(|r| r.exhausted_scans).sum();
    let _ = writeln!(s, "exhausted_scan_rounds: {exhausted}");
    let _ = writeln!(s, "final_accuracy: {}", opt(metrics.final_accuracy()));
    let _ = writeln!(s, "final_miou: {}", opt(metrics.final_miou()));
    if let Some(r) = metrics.rounds.last() {
        let on = match r.evaluated_on {
            crate::campaign::EvaluatedOn::HeldOut => "held-out",
            crate::campaign::EvaluatedOn::Annotated => "annotated",
        };
        let _ = writeln!(s, "evaluated_on: {on}");
    }
    if frequencies.empty {
        let _ = writeln!(s, "note: no labeled points were selected");
    }
    s
}

/// Writes the three report files into `dir`, creating it if needed.
pub fn emit_report(
    dir: impl AsRef<Path>,
    frequencies: &FrequencyReport,
    curve: &MetricCurve,
    summary: &str,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in [
        (FREQUENCIES_FILE, frequencies_csv(frequencies)),
        (CURVE_FILE, curve_csv(curve)),
        (SUMMARY_FILE, summary.as_bytes().to_vec()),
    ] {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
