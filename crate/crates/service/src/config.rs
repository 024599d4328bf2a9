use std::path::{Path, PathBuf};

use annotator_core::campaign::Budget;
use annotator_core::io::{PointLayout, ReadOptions};
use annotator_core::{
    resolve_class_map, CampaignConfig, ClassMap, Dataset, Error, FitConfig, MarginAggregate, Mode,
    Result, SelectionParams, Strategy,
};
use serde::Deserialize;

pub const DATA_ROOT_ENV: &str = "ANNOTATOR_DATA_ROOT";
pub const JOURNAL_FILE: &str = "journal.jsonl";

/// Where a run's scans and labels live and how to read them.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSources {
    pub scans: PathBuf,
    pub labels: Option<PathBuf>,
    pub source_scans: Option<PathBuf>,
    pub source_labels: Option<PathBuf>,
    /// Built-in map name or path to a map file.
    pub class_map: Option<String>,
    /// Identity map over `1..=num_classes` when no class map is given.
    pub num_classes: Option<u16>,
    #[serde(default)]
    pub layout: Option<String>,
    #[serde(default)]
    pub rescale_intensity: Option<bool>,
}

/// Datasets read from [`DataSources`].
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub map: ClassMap,
    pub target: Dataset,
    pub source: Option<Dataset>,
}

impl DataSources {
    pub fn class_map(&self) -> Result<ClassMap> {
        match (&self.class_map, self.num_classes) {
            (Some(spec), None) => resolve_class_map(spec),
            (Some(spec), Some(k)) => resolve_class_map(spec)?.with_class_count(k),
            (None, Some(k)) => ClassMap::identity(k),
            (None, None) => Err(Error::Config(
                "either class_map or num_classes is required".into(),
            )),
        }
    }

    pub fn read_options(&self) -> Result<ReadOptions> {
        let mut opts = ReadOptions::default();
        if let Some(layout) = &self.layout {
            opts.layout = layout.parse::<PointLayout>()?;
        }
        if let Some(r) = self.rescale_intensity {
            opts.rescale_intensity = r;
        }
        Ok(opts)
    }

    /// Resolves relative paths against `root`.
    pub fn rooted(&self, root: &Path) -> DataSources {
        let join = |p: &PathBuf| root.join(p);
        DataSources {
            scans: join(&self.scans),
            labels: self.labels.as_ref().map(join),
            source_scans: self.source_scans.as_ref().map(join),
            source_labels: self.source_labels.as_ref().map(join),
            class_map: self.class_map.as_ref().map(|spec| {
                if ClassMap::builtin_names().contains(&spec.as_str()) {
                    spec.clone()
                } else {
                    root.join(spec).to_string_lossy().into_owned()
                }
            }),
            ..self.clone()
        }
    }

    pub fn load(&self) -> Result<LoadedData> {
        let map = self.class_map()?;
        let opts = self.read_options()?;
        let target = Dataset::load(&self.scans, self.labels.as_deref(), &map, opts)?;
        let source = match (&self.source_scans, &self.source_labels) {
            (Some(scans), Some(labels)) => Some(Dataset::load(scans, Some(labels), &map, opts)?),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "source_scans and source_labels must be given together".into(),
                ))
            }
        };
        Ok(LoadedData {
            map,
            target,
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerKnobs {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
}

/// Service configuration file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_session")]
    pub session_id: String,
    /// Base for relative data paths. Overridden by `ANNOTATOR_DATA_ROOT`.
    pub data_root: Option<PathBuf>,
    #[serde(flatten)]
    pub data: DataSources,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_voxel_size")]
    pub voxel_size: f64,
    pub budget_voxels: Option<u32>,
    pub budget_points: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    /// Holds the journal. Relative to the working directory.
    pub run_dir: PathBuf,
    #[serde(default)]
    pub learner: LearnerKnobs,
    pub min_points_per_voxel: Option<usize>,
    pub margin_aggregate: Option<MarginAggregate>,
}

fn default_session() -> String {
    "default".into()
}

fn default_mode() -> Mode {
    Mode::Al
}

fn default_strategy() -> Strategy {
    Strategy::Vcd
}

fn default_voxel_size() -> f64 {
    0.25
}

/// Budget from the two optional budget fields; voxels default to 5.
pub fn budget_from(voxels: Option<u32>, points: Option<u64>) -> Result<Budget> {
    match (voxels, points) {
        (Some(_), Some(_)) => Err(Error::Config(
            "budget_voxels and budget_points are mutually exclusive".into(),
        )),
        (_, Some(p)) => Ok(Budget::PointsPerScan(p)),
        (Some(v), None) => Ok(Budget::VoxelsPerScan(v)),
        (None, None) => Ok(Budget::default()),
    }
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Data root after the environment override.
    pub fn effective_root(&self) -> Option<PathBuf> {
        std::env::var_os(DATA_ROOT_ENV)
            .map(PathBuf::from)
            .or_else(|| self.data_root.clone())
    }

    pub fn sources(&self) -> DataSources {
        match self.effective_root() {
            Some(root) => self.data.rooted(&root),
            None => self.data.clone(),
        }
    }

    pub fn journal_path(&self) -> PathBuf {
        self.run_dir.join(JOURNAL_FILE)
    }

    pub fn campaign_config(&self, classes: u16) -> Result<CampaignConfig> {
        let mut c = CampaignConfig::new(classes);
        c.mode = self.mode;
        c.strategy = self.strategy;
        c.voxel_size = self.voxel_size;
        c.budget = budget_from(self.budget_voxels, self.budget_points)?;
        c.seed = self.seed;
        let defaults = FitConfig::default();
        c.learner = FitConfig {
            learning_rate: self.learner.learning_rate.unwrap_or(defaults.learning_rate),
            epochs: self.learner.epochs.unwrap_or(defaults.epochs),
            seed: self.seed,
        };
        let mut selection = SelectionParams::default();
        if let Some(m) = self.min_points_per_voxel {
            selection.min_points_per_voxel = m;
        }
        if let Some(agg) = self.margin_aggregate {
            selection.margin_aggregate = agg;
        }
        c.selection = selection;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ServiceConfig::parse("scans = \"s\"\nnum_classes = 4\nrun_dir = \"r\"\n").unwrap();
        assert_eq!(c.session_id, "default");
        assert_eq!(c.mode, Mode::Al);
        assert_eq!(c.strategy, Strategy::Vcd);
        let cc = c.campaign_config(4).unwrap();
        assert_eq!(cc.budget, Budget::VoxelsPerScan(5));
        assert_eq!(cc.voxel_size, 0.25);
        assert_eq!(c.journal_path(), PathBuf::from("r/journal.jsonl"));
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
session_id = "s1"
data_root = "/data"
scans = "t/velodyne"
labels = "t/labels"
source_scans = "src/velodyne"
source_labels = "src/labels"
class_map = "synlidar-19"
layout = "nuscenes"
rescale_intensity = false
mode = "asfda"
strategy = "margin"
voxel_size = 0.5
budget_points = 200
seed = 7
run_dir = "run"
min_points_per_voxel = 3
margin_aggregate = "min"

[learner]
learning_rate = 0.05
epochs = 50
"#;
        let c = ServiceConfig::parse(text).unwrap();
        let src = c.data.rooted(Path::new("/data"));
        assert_eq!(src.scans, PathBuf::from("/data/t/velodyne"));
        assert_eq!(src.class_map.as_deref(), Some("synlidar-19"));
        assert_eq!(src.read_options().unwrap().layout, PointLayout::NuScenes);
        let cc = c.campaign_config(19).unwrap();
        assert_eq!(cc.mode, Mode::Asfda);
        assert_eq!(cc.budget, Budget::PointsPerScan(200));
        assert_eq!(cc.learner.epochs, 50);
        assert_eq!(cc.selection.min_points_per_voxel, 3);
        assert_eq!(cc.selection.margin_aggregate, MarginAggregate::Min);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(ServiceConfig::parse("scans = \"s\"\nrun_dir = \"r\"\nbogus = 1\n").is_err());
        let c = ServiceConfig::parse(
            "scans = \"s\"\nnum_classes = 3\nrun_dir = \"r\"\nbudget_voxels = 2\nbudget_points = 9\n",
        )
        .unwrap();
        assert!(c.campaign_config(3).is_err());
        let c = ServiceConfig::parse("scans = \"s\"\nrun_dir = \"r\"\n").unwrap();
        assert!(c.data.class_map().is_err());
    }
}
