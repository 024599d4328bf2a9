//! Voxelization of a scan into integer grid cells.
//!
//! A point `p` falls into cell `floor(p / Δ)` componentwise, with true
//! (mathematical) floor: `floor(-0.8) == -1`. A coordinate that lands
//! exactly on a cell boundary belongs to the higher-indexed cell.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Training-side voxel size in meters.
pub const TRAIN_VOXEL_SIZE: f64 = 0.05;
/// Selection-side voxel size in meters.
pub const SELECTION_VOXEL_SIZE: f64 = 0.25;

const PARALLEL_THRESHOLD: usize = 1 << 14;

/// Integer cell coordinate. Ordering is lexicographic over `(a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 3]", into = "[i32; 3]")]
pub struct VoxelCoord {
    pub a: i32,
    pub b: i32,
    pub c: i32,
}

impl VoxelCoord {
    pub const fn new(a: i32, b: i32, c: i32) -> Self {
        VoxelCoord { a, b, c }
    }
}

impl From<[i32; 3]> for VoxelCoord {
    fn from([a, b, c]: [i32; 3]) -> Self {
        VoxelCoord { a, b, c }
    }
}

impl From<VoxelCoord> for [i32; 3] {
    fn from(v: VoxelCoord) -> Self {
        [v.a, v.b, v.c]
    }
}

impl fmt::Display for VoxelCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.a, self.b, self.c)
    }
}

pub fn check_voxel_size(size: f64) -> Result<()> {
    if size.is_finite() && size > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "voxel size must be a positive finite length, got {size}"
        )))
    }
}

fn cell(v: f32, size: f64) -> Option<i32> {
    let q = (f64::from(v) / size).floor();
    (q >= f64::from(i32::MIN) && q <= f64::from(i32::MAX)).then_some(q as i32)
}

fn cell_of(p: [f32; 3], size: f64) -> Option<VoxelCoord> {
    Some(VoxelCoord::new(
        cell(p[0], size)?,
        cell(p[1], size)?,
        cell(p[2], size)?,
    ))
}

pub fn voxel_of(p: [f32; 3], size: f64) -> Result<VoxelCoord> {
    check_voxel_size(size)?;
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::Usage(format!("non-finite point {p:?}")));
    }
    cell_of(p, size).ok_or_else(|| {
        Error::Config(format!(
            "point {p:?} is outside the addressable grid at voxel size {size}"
        ))
    })
}

/// Partition of a scan's point indices by voxel cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelIndex {
    voxel_size: f64,
    point_count: usize,
    buckets: BTreeMap<VoxelCoord, Vec<u32>>,
}

impl VoxelIndex {
    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn point_count(&self) -> usize {
        self.point_count
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn get(&self, coord: &VoxelCoord) -> Option<&[u32]> {
        self.buckets.get(coord).map(Vec::as_slice)
    }

    pub fn contains(&self, coord: &VoxelCoord) -> bool {
        self.buckets.contains_key(coord)
    }

    /// Buckets in lexicographic coordinate order.
    pub fn iter(&self) -> impl Iterator<Item = (&VoxelCoord, &[u32])> {
        self.buckets.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn coords(&self) -> impl Iterator<Item = &VoxelCoord> {
        self.buckets.keys()
    }
}

pub fn build_index(cloud: &PointCloud, size: f64) -> Result<VoxelIndex> {
    check_voxel_size(size)?;
    let points = cloud.points();
    let compute = |p: &crate::cloud::Point| {
        cell_of(p.xyz(), size).ok_or_else(|| {
            Error::Config(format!(
                "scan {}: point {:?} is outside the addressable grid at voxel size {size}",
                cloud.scan_id(),
                p.xyz()
            ))
        })
    };
    let coords: Vec<VoxelCoord> = if points.len() >= PARALLEL_THRESHOLD {
        points.par_iter().map(compute).collect::<Result<_>>()?
    } else {
        points.iter().map(compute).collect::<Result<_>>()?
    };
    let mut buckets: BTreeMap<VoxelCoord, Vec<u32>> = BTreeMap::new();
    for (i, coord) in coords.into_iter().enumerate() {
        buckets.entry(coord).or_default().push(i as u32);
    }
    Ok(VoxelIndex {
        voxel_size: size,
        point_count: points.len(),
        buckets,
    })
}
