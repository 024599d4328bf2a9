//! Voxel acquisition strategies.
//!
//! | strategy | per-point value              | per-voxel aggregate | winner  |
//! |----------|------------------------------|---------------------|---------|
//! | random   | -                            | -                   | uniform |
//! | entropy  | Shannon entropy of `p_i`     | max                 | highest |
//! | margin   | `max(p_i) - second(p_i)`     | max (configurable)  | lowest  |
//! | vcd      | -                            | entropy of the pseudo-label histogram | highest |
//!
//! Logarithms are natural. Ties between voxels go to the lexicographically
//! smallest coordinate.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::{PredictionMatrix, PseudoLabels, ROW_SUM_TOLERANCE};
use crate::voxel::{VoxelCoord, VoxelIndex};

const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Entropy,
    Margin,
    Vcd,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Random,
        Strategy::Entropy,
        Strategy::Margin,
        Strategy::Vcd,
    ];

    pub fn needs_predictions(self) -> bool {
        self != Strategy::Random
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Entropy => "entropy",
            Strategy::Margin => "margin",
            Strategy::Vcd => "vcd",
        }
    }

    fn prefers_lowest(self) -> bool {
        self == Strategy::Margin
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

/// How per-point margins combine into a voxel score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginAggregate {
    #[default]
    Max,
    Min,
}

impl FromStr for MarginAggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(MarginAggregate::Max),
            "min" => Ok(MarginAggregate::Min),
            _ => Err(Error::Config(format!("unknown margin aggregate {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionParams {
    /// Buckets with fewer points are never selected.
    pub min_points_per_voxel: usize,
    pub margin_aggregate: MarginAggregate,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            min_points_per_voxel: 1,
            margin_aggregate: MarginAggregate::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelScore {
    pub coord: VoxelCoord,
    pub value: f64,
    pub strategy: Strategy,
}

/// `-Σ p ln p` with `0 ln 0 = 0`.
pub fn point_entropy(row: &[f64]) -> f64 {
    -row.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Gap between the largest and second-largest probability.
pub fn point_margin(row: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in row {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    first - second
}

/// Entropy of a class histogram. Counts are summed in descending order so
/// the value depends only on the multiset of counts.
pub fn histogram_entropy(counts: &mut [u32]) -> f64 {
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let total: u32 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = f64::from(total);
    -counts
        .iter()
        .take_while(|&&c| c > 0)
        .map(|&c| {
            let q = f64::from(c) / n;
            q * q.ln()
        })
        .sum::<f64>()
}

fn check_range(coord: VoxelCoord, strategy: Strategy, value: f64, upper: f64) -> Result<f64> {
    // Rows may sum to 1 ± ROW_SUM_TOLERANCE, which moves entropy by at most
    // that much times (ln K + 1).
    let slack = RANGE_SLACK + ROW_SUM_TOLERANCE * (upper + 1.0);
    if value.is_finite() && value >= -slack && value <= upper + slack {
        Ok(value.max(0.0))
    } else {
        Err(Error::Invariant(format!(
            "{strategy} score {value} of voxel {coord} outside [0, {upper}]"
        )))
    }
}

fn non_empty(coord: VoxelCoord, bucket: &[u32]) -> Result<()> {
    if bucket.is_empty() {
        Err(Error::Invariant(format!("voxel {coord} has no points")))
    } else {
        Ok(())
    }
}

fn fold_max(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

fn fold_min(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::INFINITY, f64::min)
}

pub fn score_entropy(
    coord: VoxelCoord,
    bucket: &[u32],
    predictions: &PredictionMatrix,
) -> Result<VoxelScore> {
    non_empty(coord, bucket)?;
    let value = fold_max(
        bucket
            .iter()
            .map(|&i| point_entropy(predictions.row(i as usize))),
    );
    let upper = (predictions.classes() as f64).ln();
    Ok(VoxelScore {
        coord,
        value: check_range(coord, Strategy::Entropy, value, upper)?,
        strategy: Strategy::Entropy,
    })
}

pub fn score_margin(
    coord: VoxelCoord,
    bucket: &[u32],
    predictions: &PredictionMatrix,
    aggregate: MarginAggregate,
) -> Result<VoxelScore> {
    if predictions.classes() < 2 {
        return Err(Error::Config("margin needs at least two classes".into()));
    }
    non_empty(coord, bucket)?;
    let margins = bucket
        .iter()
        .map(|&i| point_margin(predictions.row(i as usize)));
    let value = match aggregate {
        MarginAggregate::Max => fold_max(margins),
        MarginAggregate::Min => fold_min(margins),
    };
    Ok(VoxelScore {
        coord,
        value: check_range(coord, Strategy::Margin, value, 1.0)?,
        strategy: Strategy::Margin,
    })
}

pub fn score_vcd(
    coord: VoxelCoord,
    bucket: &[u32],
    pseudo: &PseudoLabels,
    classes: usize,
) -> Result<VoxelScore> {
    non_empty(coord, bucket)?;
    let mut counts = vec![0u32; classes + 1];
    for &i in bucket {
        let label = pseudo.0[i as usize] as usize;
        if label == 0 || label > classes {
            return Err(Error::Invariant(format!(
                "pseudo-label {label} outside 1..={classes}"
            )));
        }
        counts[label] += 1;
    }
    let value = histogram_entropy(&mut counts);
    Ok(VoxelScore {
        coord,
        value: check_range(coord, Strategy::Vcd, value, (classes as f64).ln())?,
        strategy: Strategy::Vcd,
    })
}

/// Scores every bucket of `index` that passes the occupancy filter and is
/// not excluded, in lexicographic order.
pub fn score_voxels(
    index: &VoxelIndex,
    predictions: &PredictionMatrix,
    strategy: Strategy,
    excluded: &BTreeSet<VoxelCoord>,
    params: &SelectionParams,
) -> Result<Vec<VoxelScore>> {
    if predictions.rows() != index.point_count() {
        return Err(Error::Usage(format!(
            "{} prediction rows for {} points",
            predictions.rows(),
            index.point_count()
        )));
    }
    let pseudo = (strategy == Strategy::Vcd).then(|| predictions.pseudo_labels());
    eligible(index, excluded, params)
        .map(|(coord, bucket)| match strategy {
            Strategy::Entropy => score_entropy(coord, bucket, predictions),
            Strategy::Margin => score_margin(coord, bucket, predictions, params.margin_aggregate),
            Strategy::Vcd => score_vcd(
                coord,
                bucket,
                pseudo.as_ref().expect("computed for vcd"),
                predictions.classes(),
            ),
            Strategy::Random => Ok(VoxelScore {
                coord,
                value: 0.0,
                strategy,
            }),
        })
        .collect()
}

fn eligible<'a>(
    index: &'a VoxelIndex,
    excluded: &'a BTreeSet<VoxelCoord>,
    params: &'a SelectionParams,
) -> impl Iterator<Item = (VoxelCoord, &'a [u32])> + 'a {
    index
        .iter()
        .filter(move |(c, b)| b.len() >= params.min_points_per_voxel && !excluded.contains(c))
        .map(|(c, b)| (*c, b))
}

/// Picks this scan's next voxel, or `None` when nothing eligible remains.
/// `seed` only matters for [`Strategy::Random`].
pub fn select_voxel(
    index: &VoxelIndex,
    predictions: Option<&PredictionMatrix>,
    strategy: Strategy,
    excluded: &BTreeSet<VoxelCoord>,
    params: &SelectionParams,
    seed: u64,
) -> Result<Option<VoxelScore>> {
    if strategy == Strategy::Random {
        let candidates: Vec<VoxelCoord> =
            eligible(index, excluded, params).map(|(c, _)| c).collect();
        if candidates.is_empty() {
            return Ok(None);
        }
        let pick = ChaCha8Rng::seed_from_u64(seed).random_range(0..candidates.len());
        return Ok(Some(VoxelScore {
            coord: candidates[pick],
            value: 0.0,
            strategy,
        }));
    }
    let predictions = predictions
        .ok_or_else(|| Error::Usage(format!("strategy {strategy} requires predictions")))?;
    let scores = score_voxels(index, predictions, strategy, excluded, params)?;
    let lowest = strategy.prefers_lowest();
    let mut best: Option<VoxelScore> = None;
    for s in scores {
        let better = match &best {
            None => true,
            Some(b) if lowest => s.value < b.value,
            Some(b) => s.value > b.value,
        };
        if better {
            best = Some(s);
        }
    }
    Ok(best)
}
