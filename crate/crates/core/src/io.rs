//! Binary scan (`.bin`) and label (`.label`) files.
//!
//! ```text
//! .bin   N records of [x: f32][y: f32][z: f32][intensity: f32]   little-endian, 16 B each
//!        (nuScenes layout: 5 floats, the trailing ring index is dropped)
//! .label N records of u32, low 16 bits = semantic id, high 16 bits = instance id
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::classmap::ClassMap;
use crate::cloud::{LabelSet, Point, PointCloud};
use crate::error::{Error, Result};

pub const KITTI_RECORD_BYTES: usize = 16;
pub const LABEL_RECORD_BYTES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PointLayout {
    /// x, y, z, intensity.
    #[default]
    Kitti,
    /// x, y, z, intensity, ring index.
    NuScenes,
}

impl std::str::FromStr for PointLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kitti" => Ok(PointLayout::Kitti),
            "nuscenes" => Ok(PointLayout::NuScenes),
            _ => Err(Error::Config(format!("unknown point layout {s:?}"))),
        }
    }
}

impl PointLayout {
    pub fn record_bytes(self) -> usize {
        match self {
            PointLayout::Kitti => 16,
            PointLayout::NuScenes => 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadOptions {
    pub layout: PointLayout,
    /// Rescale intensities above 1 by 1/255 before clamping to [0, 1].
    pub rescale_intensity: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            layout: PointLayout::Kitti,
            rescale_intensity: true,
        }
    }
}

pub fn normalize_intensity(raw: f32, rescale: bool) -> f32 {
    let v = if rescale && raw > 1.0 {
        raw / 255.0
    } else {
        raw
    };
    v.clamp(0.0, 1.0)
}

fn scan_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn read_points(path: impl AsRef<Path>) -> Result<PointCloud> {
    read_points_with(path, ReadOptions::default())
}

pub fn read_points_with(path: impl AsRef<Path>, opts: ReadOptions) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let points = decode_points(&bytes, opts).map_err(|e| match e {
        DecodeError::Size(len) => Error::malformed(
            path,
            format!(
                "size {len} is not a positive multiple of {}",
                opts.layout.record_bytes()
            ),
        ),
        DecodeError::NonFinite(index) => Error::CorruptPoint {
            path: path.to_path_buf(),
            index,
        },
    })?;
    PointCloud::new(scan_id_of(path), points)
}

#[derive(Debug)]
pub(crate) enum DecodeError {
    Size(usize),
    NonFinite(usize),
}

pub(crate) fn decode_points(
    bytes: &[u8],
    opts: ReadOptions,
) -> std::result::Result<Vec<Point>, DecodeError> {
    let stride = opts.layout.record_bytes();
    if bytes.is_empty() || !bytes.len().is_multiple_of(stride) {
        return Err(DecodeError::Size(bytes.len()));
    }
    let f = |rec: &[u8], k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
    bytes
        .chunks_exact(stride)
        .enumerate()
        .map(|(i, rec)| {
            let (x, y, z, raw) = (f(rec, 0), f(rec, 1), f(rec, 2), f(rec, 3));
            if !(x.is_finite() && y.is_finite() && z.is_finite() && raw.is_finite()) {
                return Err(DecodeError::NonFinite(i));
            }
            Ok(Point::new(
                x,
                y,
                z,
                normalize_intensity(raw, opts.rescale_intensity),
            ))
        })
        .collect()
}

pub fn encode_points(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * KITTI_RECORD_BYTES);
    for p in cloud.points() {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_points(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_points(cloud)).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>, map: &ClassMap) -> Result<LabelSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() || bytes.len() % LABEL_RECORD_BYTES != 0 {
        return Err(Error::malformed(
            path,
            format!(
                "size {} is not a positive multiple of {LABEL_RECORD_BYTES}",
                bytes.len()
            ),
        ));
    }
    let labels = bytes
        .chunks_exact(LABEL_RECORD_BYTES)
        .map(|rec| {
            let raw = u32::from_le_bytes(rec.try_into().unwrap());
            map.train_id((raw & 0xFFFF) as u16)
        })
        .collect();
    LabelSet::new(labels, map.class_count())
}

pub fn encode_labels(labels: &LabelSet) -> Vec<u8> {
    labels
        .labels()
        .iter()
        .flat_map(|&l| u32::from(l).to_le_bytes())
        .collect()
}

pub fn write_labels(labels: &LabelSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_labels(labels)).map_err(|e| Error::io(path, e))
}

/// A directory of scans, optionally paired with a label directory.
/// Scans are `*.bin` files; the matching label file shares the stem and
/// uses the `.label` extension. Scans are ordered by file name.
pub fn scan_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "bin"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no .bin scans in {}", dir.display())));
    }
    Ok(files)
}

pub fn label_path_for(scan: &Path, label_dir: &Path) -> PathBuf {
    let stem = scan.file_stem().unwrap_or_default();
    label_dir.join(stem).with_extension("label")
}
