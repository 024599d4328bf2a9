//! In-memory scan and label containers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Semantic id reserved for unlabeled / ignored points.
pub const IGNORE_ID: u16 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl Point {
    pub const fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Point { x, y, z, intensity }
    }

    pub fn xyz(&self) -> [f32; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

/// One LiDAR scan. Point order is the identity of each point: index `i`
/// always refers to the `i`-th record read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    scan_id: String,
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(scan_id: impl Into<String>, points: Vec<Point>) -> Result<Self> {
        let scan_id = scan_id.into();
        if points.is_empty() {
            return Err(Error::Usage(format!("scan {scan_id} has no points")));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::Usage(format!(
                "scan {scan_id}: point {i} has a non-finite component"
            )));
        }
        Ok(PointCloud { scan_id, points })
    }

    pub fn scan_id(&self) -> &str {
        &self.scan_id
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-point train ids in `0..=K`, where 0 is ignore.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<u16>,
    class_count: u16,
}

impl LabelSet {
    pub fn new(labels: Vec<u16>, class_count: u16) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::Config("class count must be positive".into()));
        }
        if let Some((i, &id)) = labels.iter().enumerate().find(|(_, &l)| l > class_count) {
            return Err(Error::Usage(format!(
                "label {id} at index {i} exceeds class count {class_count}"
            )));
        }
        Ok(LabelSet {
            labels,
            class_count,
        })
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn class_count(&self) -> u16 {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn check_pairs_with(&self, cloud: &PointCloud) -> Result<()> {
        if self.len() != cloud.len() {
            return Err(Error::Usage(format!(
                "scan {}: {} labels for {} points",
                cloud.scan_id(),
                self.len(),
                cloud.len()
            )));
        }
        Ok(())
    }
}
