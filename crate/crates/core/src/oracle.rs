use std::collections::BTreeMap;

use crate::cloud::LabelSet;
use crate::error::{Error, Result};

/// Labeling authority for queried voxels. Must return one label per
/// requested index, and the same labels for the same request.
pub trait Oracle {
    fn label_voxel(&mut self, scan_id: &str, point_indices: &[u32]) -> Result<Vec<u16>>;
}

/// Answers from ground-truth label files.
#[derive(Debug, Clone, Default)]
pub struct SimulatedOracle {
    labels: BTreeMap<String, LabelSet>,
}

impl SimulatedOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_scan(mut self, scan_id: impl Into<String>, labels: LabelSet) -> Self {
        self.insert(scan_id, labels);
        self
    }

    pub fn insert(&mut self, scan_id: impl Into<String>, labels: LabelSet) {
        self.labels.insert(scan_id.into(), labels);
    }

    pub fn labels_of(&self, scan_id: &str) -> Option<&LabelSet> {
        self.labels.get(scan_id)
    }

    pub fn lookup(&self, scan_id: &str, point_indices: &[u32]) -> Result<Vec<u16>> {
        let labels = self
            .labels
            .get(scan_id)
            .ok_or_else(|| Error::Usage(format!("oracle has no labels for scan {scan_id}")))?
            .labels();
        point_indices
            .iter()
            .map(|&i| {
                labels.get(i as usize).copied().ok_or_else(|| {
                    Error::Usage(format!(
                        "scan {scan_id}: index {i} out of range for {} labels",
                        labels.len()
                    ))
                })
            })
            .collect()
    }
}

impl Oracle for SimulatedOracle {
    fn label_voxel(&mut self, scan_id: &str, point_indices: &[u32]) -> Result<Vec<u16>> {
        self.lookup(scan_id, point_indices)
    }
}

/// Builds a ground-truth oracle over one scan's labels.
pub fn simulated_oracle(scan_id: impl Into<String>, labels: LabelSet) -> SimulatedOracle {
    SimulatedOracle::new().with_scan(scan_id, labels)
}
