//! Seeded synthetic scan generators for simulations, tests and demos.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{LabelSet, Point, PointCloud};
use crate::dataset::{Dataset, Scan};
use crate::error::{Error, Result};
use crate::io::{write_labels, write_points};
use crate::oracle::SimulatedOracle;

fn normal(mean: f32, sd: f32) -> Normal<f32> {
    Normal::new(mean, sd).expect("finite normal parameters")
}

fn scan_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(i as u64)
        .rotate_left(17)
}

/// Ground-truth oracle over every labeled scan of `data`.
pub fn oracle_for(data: &Dataset) -> SimulatedOracle {
    let mut oracle = SimulatedOracle::new();
    for s in data.scans() {
        if let Some(l) = &s.labels {
            oracle.insert(s.id(), l.clone());
        }
    }
    oracle
}

/// Writes each scan as `<id>.bin` under `scan_dir` and, when labeled, as
/// `<id>.label` under `label_dir`.
pub fn write_dataset(data: &Dataset, scan_dir: &Path, label_dir: Option<&Path>) -> Result<()> {
    for dir in std::iter::once(scan_dir).chain(label_dir) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for s in data.scans() {
        write_points(&s.cloud, scan_dir.join(format!("{}.bin", s.id())))?;
        if let (Some(dir), Some(labels)) = (label_dir, &s.labels) {
            write_labels(labels, dir.join(format!("{}.label", s.id())))?;
        }
    }
    Ok(())
}

/// Isotropic Gaussian blobs, one per class, with a class-specific
/// intensity level.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDomain {
    pub centers: Vec<[f32; 3]>,
    pub spread: f32,
    pub intensities: Vec<f32>,
    pub intensity_sd: f32,
}

impl MixtureDomain {
    /// `classes` blobs on a ring of radius 3 m.
    pub fn target(classes: u16) -> Self {
        let k = usize::from(classes);
        let centers = (0..k)
            .map(|c| {
                let t = std::f32::consts::TAU * c as f32 / k as f32;
                [3.0 * t.cos(), 3.0 * t.sin(), 0.3 * c as f32]
            })
            .collect();
        let intensities = (0..k).map(|c| (c as f32 + 0.5) / k as f32).collect();
        MixtureDomain {
            centers,
            spread: 1.4,
            intensities,
            intensity_sd: 0.12,
        }
    }

    /// The same domain under a rigid offset and an intensity bias.
    pub fn shifted(&self, offset: [f32; 3], intensity_shift: f32) -> Self {
        MixtureDomain {
            centers: self
                .centers
                .iter()
                .map(|c| [c[0] + offset[0], c[1] + offset[1], c[2] + offset[2]])
                .collect(),
            intensities: self
                .intensities
                .iter()
                .map(|i| i + intensity_shift)
                .collect(),
            ..self.clone()
        }
    }

    pub fn classes(&self) -> u16 {
        self.centers.len() as u16
    }

    pub fn scan(&self, scan_id: impl Into<String>, points: usize, seed: u64) -> Result<Scan> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.centers.len();
        let jitter = normal(0.0, self.spread);
        let mut pts = Vec::with_capacity(points);
        let mut labels = Vec::with_capacity(points);
        for _ in 0..points {
            let c = rng.random_range(0..k);
            let m = self.centers[c];
            let i = normal(self.intensities[c], self.intensity_sd).sample(&mut rng);
            pts.push(Point::new(
                m[0] + jitter.sample(&mut rng),
                m[1] + jitter.sample(&mut rng),
                m[2] + 0.3 * jitter.sample(&mut rng),
                i.clamp(0.0, 1.0),
            ));
            labels.push(c as u16 + 1);
        }
        Scan::new(
            PointCloud::new(scan_id, pts)?,
            Some(LabelSet::new(labels, self.classes())?),
        )
    }

    pub fn dataset(&self, prefix: &str, scans: usize, points: usize, seed: u64) -> Result<Dataset> {
        let scans = (0..scans)
            .map(|i| self.scan(format!("{prefix}{i:04}"), points, scan_seed(seed, i)))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(scans)
    }
}

/// Street-like scenes with three common classes (road, sidewalk, building)
/// and two rare ones (pole, person). Rare objects stand on or beside the
/// common surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct LongTailScene {
    pub half_extent: f32,
    pub road_points: usize,
    pub sidewalk_points: usize,
    pub building_points: usize,
    pub poles: usize,
    pub points_per_pole: usize,
    pub people: usize,
    pub points_per_person: usize,
    pub intensity_shift: f32,
}

impl Default for LongTailScene {
    fn default() -> Self {
        LongTailScene {
            half_extent: 20.0,
            road_points: 1200,
            sidewalk_points: 900,
            building_points: 600,
            poles: 4,
            points_per_pole: 40,
            people: 3,
            points_per_person: 50,
            intensity_shift: 0.0,
        }
    }
}

impl LongTailScene {
    pub const CLASSES: u16 = 5;
    pub const COMMON: [u16; 3] = [1, 2, 3];
    pub const RARE: [u16; 2] = [4, 5];
    pub const NAMES: [&'static str; 5] = ["road", "sidewalk", "building", "pole", "person"];

    const ROAD_HALF_WIDTH: f32 = 6.0;
    const WALL_Y: f32 = 14.0;
    const GROUND_Z: f32 = -1.7;
    const INTENSITY: [f32; 5] = [0.15, 0.35, 0.55, 0.75, 0.95];

    pub fn scan(&self, scan_id: impl Into<String>, seed: u64) -> Result<Scan> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        let e = self.half_extent;
        let noise = normal(0.0, 0.02);
        let mut push = |rng: &mut ChaCha8Rng, x: f32, y: f32, z: f32, class: u16| {
            let base = Self::INTENSITY[usize::from(class - 1)] + self.intensity_shift;
            let i = normal(base, 0.04).sample(rng).clamp(0.0, 1.0);
            pts.push(Point::new(x, y, z + noise.sample(rng), i));
            labels.push(class);
        };
        let side = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for _ in 0..self.road_points {
            let (x, y) = (
                rng.random_range(-e..e),
                rng.random_range(-Self::ROAD_HALF_WIDTH..Self::ROAD_HALF_WIDTH),
            );
            push(&mut rng, x, y, Self::GROUND_Z, 1);
        }
        for _ in 0..self.sidewalk_points {
            let x = rng.random_range(-e..e);
            let y = side(&mut rng) * rng.random_range(Self::ROAD_HALF_WIDTH..Self::WALL_Y);
            push(&mut rng, x, y, Self::GROUND_Z + 0.1, 2);
        }
        for _ in 0..self.building_points {
            let x = rng.random_range(-e..e);
            let y = side(&mut rng) * rng.random_range(Self::WALL_Y..Self::WALL_Y + 0.3);
            let z = rng.random_range(Self::GROUND_Z + 0.1..Self::GROUND_Z + 5.0);
            push(&mut rng, x, y, z, 3);
        }
        for _ in 0..self.poles {
            // At the curb, touching both road and sidewalk.
            let x0 = rng.random_range(-e + 1.0..e - 1.0);
            let y0 = side(&mut rng) * Self::ROAD_HALF_WIDTH;
            for _ in 0..self.points_per_pole {
                let a = rng.random_range(0.0..std::f32::consts::TAU);
                let z = rng.random_range(Self::GROUND_Z..Self::GROUND_Z + 3.5);
                push(&mut rng, x0 + 0.08 * a.cos(), y0 + 0.08 * a.sin(), z, 4);
            }
        }
        for _ in 0..self.people {
            let x0 = rng.random_range(-e + 1.0..e - 1.0);
            let y0 = rng.random_range(-Self::ROAD_HALF_WIDTH + 0.5..Self::ROAD_HALF_WIDTH - 0.5);
            for _ in 0..self.points_per_person {
                let x = x0 + rng.random_range(-0.25..0.25);
                let y = y0 + rng.random_range(-0.25..0.25);
                let z = rng.random_range(Self::GROUND_Z..Self::GROUND_Z + 1.7);
                push(&mut rng, x, y, z, 5);
            }
        }
        Scan::new(
            PointCloud::new(scan_id, pts)?,
            Some(LabelSet::new(labels, Self::CLASSES)?),
        )
    }

    pub fn dataset(&self, prefix: &str, scans: usize, seed: u64) -> Result<Dataset> {
        let scans = (0..scans)
            .map(|i| self.scan(format!("{prefix}{i:04}"), scan_seed(seed, i)))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(scans)
    }
}

/// A flat square of `cells × cells` points on a `spacing` lattice, each
/// point at the center of its lattice cell so no point lies on a voxel
/// boundary for any size that is a multiple of `spacing`. Points with
/// `x < 0` are class 1, the rest class 2.
pub fn lattice_plane(scan_id: impl Into<String>, cells: u32, spacing: f32) -> Result<Scan> {
    let half = cells as i64 / 2;
    let mut pts = Vec::with_capacity((cells * cells) as usize);
    let mut labels = Vec::with_capacity(pts.capacity());
    for i in 0..i64::from(cells) {
        for j in 0..i64::from(cells) {
            let x = ((i - half) as f64 + 0.5) * f64::from(spacing);
            let y = ((j - half) as f64 + 0.5) * f64::from(spacing);
            let class = if x < 0.0 { 1 } else { 2 };
            pts.push(Point::new(
                x as f32,
                y as f32,
                0.5 * spacing,
                0.3 * class as f32,
            ));
            labels.push(class);
        }
    }
    Scan::new(
        PointCloud::new(scan_id, pts)?,
        Some(LabelSet::new(labels, 2)?),
    )
}

/// Uniform points in a cube of side `extent` centered on the origin, with
/// uniform random labels over `classes`.
pub fn uniform_scan(
    scan_id: impl Into<String>,
    points: usize,
    extent: f32,
    classes: u16,
    seed: u64,
) -> Result<Scan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = extent / 2.0;
    let pts = (0..points)
        .map(|_| {
            Point::new(
                rng.random_range(-h..h),
                rng.random_range(-h..h),
                rng.random_range(-h..h),
                rng.random_range(0.0..1.0),
            )
        })
        .collect();
    let labels = (0..points).map(|_| rng.random_range(1..=classes)).collect();
    Scan::new(
        PointCloud::new(scan_id, pts)?,
        Some(LabelSet::new(labels, classes)?),
    )
}
