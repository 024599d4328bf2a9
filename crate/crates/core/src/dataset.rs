use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;

use crate::classmap::ClassMap;
use crate::cloud::{LabelSet, PointCloud};
use crate::error::{Error, Result};
use crate::io::{label_path_for, read_labels, read_points_with, scan_files, ReadOptions};
use crate::learner::TrainingSet;

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub cloud: PointCloud,
    pub labels: Option<LabelSet>,
}

impl Scan {
    pub fn new(cloud: PointCloud, labels: Option<LabelSet>) -> Result<Self> {
        if let Some(l) = &labels {
            l.check_pairs_with(&cloud)?;
        }
        Ok(Scan { cloud, labels })
    }

    pub fn id(&self) -> &str {
        self.cloud.scan_id()
    }
}

/// An ordered collection of scans with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    scans: Vec<Scan>,
}

impl Dataset {
    pub fn new(scans: Vec<Scan>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &scans {
            if !seen.insert(s.id().to_string()) {
                return Err(Error::Config(format!("duplicate scan id {}", s.id())));
            }
        }
        Ok(Dataset { scans })
    }

    /// Reads every `*.bin` under `scan_dir`; with `label_dir`, each scan's
    /// `.label` file of the same stem is read through `map`.
    pub fn load(
        scan_dir: impl AsRef<Path>,
        label_dir: Option<&Path>,
        map: &ClassMap,
        opts: ReadOptions,
    ) -> Result<Self> {
        let files = scan_files(scan_dir)?;
        let scans = files
            .par_iter()
            .map(|f| {
                let cloud = read_points_with(f, opts)?;
                let labels = label_dir
                    .map(|dir| read_labels(label_path_for(f, dir), map))
                    .transpose()?;
                Scan::new(cloud, labels)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(scans)
    }

    pub fn scans(&self) -> &[Scan] {
        &self.scans
    }

    pub fn len(&self) -> usize {
        self.scans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Scan> {
        self.scans.iter().find(|s| s.id() == id)
    }

    pub fn into_scans(self) -> Vec<Scan> {
        self.scans
    }

    pub fn require_labels(&self, what: &str) -> Result<()> {
        match self.scans.iter().find(|s| s.labels.is_none()) {
            Some(s) => Err(Error::Config(format!(
                "{what} scan {} has no labels",
                s.id()
            ))),
            None => Ok(()),
        }
    }

    /// All labeled points as one training set.
    pub fn training_set(&self) -> Result<TrainingSet> {
        self.require_labels("training")?;
        let mut set = TrainingSet::new();
        for s in &self.scans {
            set.extend(&TrainingSet::from_cloud(
                &s.cloud,
                s.labels.as_ref().unwrap(),
            )?);
        }
        Ok(set)
    }
}
