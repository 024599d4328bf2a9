//! Voxel-centric active learning for LiDAR semantic segmentation.
//!
//! Scans are bucketed into voxels, voxels are scored by an acquisition
//! strategy, and a campaign queries one voxel per scan per round from an
//! [`Oracle`], retraining a small softmax classifier between rounds.

pub mod campaign;
pub mod classmap;
pub mod cloud;
pub mod dataset;
pub mod error;
pub mod io;
pub mod journal;
pub mod learner;
pub mod oracle;
pub mod prediction;
pub mod report;
pub mod strategy;
pub mod synth;
pub mod voxel;

pub use campaign::{
    cold_start_policy, run_campaign, Budget, Campaign, CampaignConfig, CampaignMetrics,
    CampaignOutcome, Mode, Progress, Query, RoundMetrics,
};
pub use classmap::{load_class_map, resolve_class_map, ClassMap, ClassMapEntry};
pub use cloud::{LabelSet, Point, PointCloud, IGNORE_ID};
pub use dataset::{Dataset, Scan};
pub use error::{Error, Result};
pub use io::{read_labels, read_points, write_labels, write_points, PointLayout, ReadOptions};
pub use journal::{AnnotationJournal, JournalEntry, JournalHeader, JournalWriter};
pub use learner::{featurize, fit, FitConfig, ModelState, Objective, ToyModel, TrainingSet};
pub use oracle::{simulated_oracle, Oracle, SimulatedOracle};
pub use prediction::{read_predictions, write_predictions, PredictionMatrix, PseudoLabels};
pub use report::{class_frequencies, compute_miou, emit_report, FrequencyReport, MetricCurve};
pub use strategy::{select_voxel, MarginAggregate, SelectionParams, Strategy, VoxelScore};
pub use voxel::{build_index, voxel_of, VoxelCoord, VoxelIndex};
