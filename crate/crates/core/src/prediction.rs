//! Per-point class-probability matrices and the `APRD` prediction file.
//!
//! ```text
//! "APRD" | N: u32 LE | K: u32 LE | N*K f32 LE, row-major
//! ```
//! Column `k` holds the probability of train class `k + 1`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const ROW_SUM_TOLERANCE: f64 = 1e-5;
pub const PREDICTION_MAGIC: &[u8; 4] = b"APRD";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionSource {
    File,
    ToyLearner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    values: Vec<f64>,
    classes: usize,
    source: PredictionSource,
}

impl PredictionMatrix {
    /// Validates every row: entries in [0, 1] and row sums within
    /// [`ROW_SUM_TOLERANCE`] of 1.
    pub fn new(values: Vec<f64>, classes: usize, source: PredictionSource) -> Result<Self> {
        if classes == 0 || values.is_empty() || !values.len().is_multiple_of(classes) {
            return Err(Error::Usage(format!(
                "{} probabilities cannot form rows of {classes} classes",
                values.len()
            )));
        }
        for (i, row) in values.chunks_exact(classes).enumerate() {
            check_row(row).map_err(|why| Error::Usage(format!("row {i}: {why}")))?;
        }
        Ok(PredictionMatrix {
            values,
            classes,
            source,
        })
    }

    pub(crate) fn from_trusted(values: Vec<f64>, classes: usize, source: PredictionSource) -> Self {
        debug_assert!(values.chunks_exact(classes).all(|r| check_row(r).is_ok()));
        PredictionMatrix {
            values,
            classes,
            source,
        }
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.classes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn source(&self) -> PredictionSource {
        self.source
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.classes..(i + 1) * self.classes]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.classes)
    }

    /// Argmax per row as train ids `1..=K`; ties go to the lowest class.
    pub fn pseudo_labels(&self) -> PseudoLabels {
        PseudoLabels(self.iter_rows().map(|r| argmax(r) as u16 + 1).collect())
    }
}

fn check_row(row: &[f64]) -> std::result::Result<(), String> {
    if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(format!("probability {v} outside [0, 1]"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(format!("row sums to {sum}"));
    }
    Ok(())
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Train-id argmax of each prediction row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabels(pub Vec<u16>);

impl PseudoLabels {
    pub fn as_slice(&self) -> &[u16] {
        &self.0
    }
}

pub fn encode_predictions(p: &PredictionMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + p.values.len() * 4);
    out.extend_from_slice(PREDICTION_MAGIC);
    out.extend_from_slice(&(p.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(p.classes as u32).to_le_bytes());
    for &v in &p.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Decodes an `APRD` buffer. Rows off the sum-to-one tolerance are
/// renormalized with a warning; negative or non-finite entries are errors.
pub fn decode_predictions(bytes: &[u8], origin: &Path) -> Result<PredictionMatrix> {
    if bytes.len() < 12 || &bytes[..4] != PREDICTION_MAGIC {
        return Err(Error::malformed(origin, "missing APRD header"));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let k = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if n == 0 || k == 0 || n.checked_mul(k).and_then(|c| c.checked_mul(4)) != Some(body.len()) {
        return Err(Error::malformed(
            origin,
            format!(
                "header N={n} K={k} does not match {} payload bytes",
                body.len()
            ),
        ));
    }
    let mut values: Vec<f64> = body
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    for (i, row) in values.chunks_exact_mut(k).enumerate() {
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::malformed(
                origin,
                format!("row {i} has a negative or non-finite probability"),
            ));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            if sum <= 0.0 {
                return Err(Error::malformed(origin, format!("row {i} sums to zero")));
            }
            log::warn!("{}: row {i} sums to {sum}; renormalizing", origin.display());
            row.iter_mut().for_each(|v| *v /= sum);
        }
    }
    PredictionMatrix::new(values, k, PredictionSource::File)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<PredictionMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_predictions(&bytes, path)
}

pub fn write_predictions(p: &PredictionMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_predictions(p)).map_err(|e| Error::io(path, e))
}
