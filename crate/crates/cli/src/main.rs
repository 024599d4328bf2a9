use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use annotator_core::io::{read_points_with, ReadOptions};
use annotator_core::report::{summary_text, FREQUENCIES_FILE};
use annotator_core::synth::{oracle_for, write_dataset, LongTailScene, MixtureDomain};
use annotator_core::{
    build_index, class_frequencies, emit_report, read_predictions, select_voxel, AnnotationJournal,
    Campaign, CampaignConfig, FitConfig, JournalWriter, LabelSet, MarginAggregate, MetricCurve,
    Mode, SelectionParams, Strategy,
};
use annotator_service::config::budget_from;
use annotator_service::{DataSources, ServiceConfig, Session, JOURNAL_FILE};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

pub const MODEL_FILE: &str = "model.txt";

#[derive(Parser)]
#[command(
    name = "annotator",
    version,
    about = "Voxel-level active learning for LiDAR segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulated-oracle campaign and write its journal and reports.
    Loop(LoopArgs),
    /// Score one scan from a prediction file and print the chosen voxel.
    Select(SelectArgs),
    /// Serve a live labeling session over HTTP.
    Serve(ServeArgs),
    /// Write seeded synthetic target and source datasets.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Directory of target `.bin` scans.
    #[arg(long)]
    scans: PathBuf,
    /// Directory of target `.label` files.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, requires = "source_labels")]
    source_scans: Option<PathBuf>,
    #[arg(long, requires = "source_scans")]
    source_labels: Option<PathBuf>,
    /// Built-in class map name or map file.
    #[arg(long)]
    class_map: Option<String>,
    /// Identity class map with this many classes.
    #[arg(long)]
    num_classes: Option<u16>,
    /// Point record layout: kitti or nuscenes.
    #[arg(long)]
    layout: Option<String>,
    /// Keep intensities above 1 instead of rescaling by 1/255.
    #[arg(long)]
    no_rescale_intensity: bool,
}

impl DataArgs {
    fn sources(&self) -> DataSources {
        DataSources {
            scans: self.scans.clone(),
            labels: self.labels.clone(),
            source_scans: self.source_scans.clone(),
            source_labels: self.source_labels.clone(),
            class_map: self.class_map.clone(),
            num_classes: self.num_classes,
            layout: self.layout.clone(),
            rescale_intensity: self.no_rescale_intensity.then_some(false),
        }
    }
}

#[derive(Args)]
struct LoopArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "al")]
    mode: Mode,
    #[arg(long, default_value = "vcd")]
    strategy: Strategy,
    #[arg(long, default_value_t = 0.25)]
    voxel_size: f64,
    /// Voxels labeled per scan (default 5).
    #[arg(long, conflicts_with = "budget_points")]
    budget_voxels: Option<u32>,
    /// Points labeled per scan.
    #[arg(long)]
    budget_points: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Labeled held-out scans for per-round metrics.
    #[arg(long, requires = "eval_labels")]
    eval_scans: Option<PathBuf>,
    #[arg(long, requires = "eval_scans")]
    eval_labels: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Voxels with fewer points are never selected.
    #[arg(long)]
    min_points: Option<usize>,
    #[arg(long)]
    margin_aggregate: Option<MarginAggregate>,
    /// Run directory. An existing journal there is resumed.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    /// One `.bin` scan.
    #[arg(long)]
    scan: PathBuf,
    /// Prediction file for the scan.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, default_value = "vcd")]
    strategy: Strategy,
    #[arg(long, default_value_t = 0.25)]
    voxel_size: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    min_points: Option<usize>,
    #[arg(long)]
    margin_aggregate: Option<MarginAggregate>,
    /// Skip voxels this journal already holds for the scan.
    #[arg(long)]
    journal: Option<PathBuf>,
    #[arg(long)]
    layout: Option<String>,
    #[arg(long)]
    no_rescale_intensity: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Service configuration (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    LongTail,
    Mixture,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "long-tail")]
    kind: SynthKind,
    #[arg(long, default_value_t = 10)]
    scans: usize,
    /// Points per scan (mixture only).
    #[arg(long, default_value_t = 400)]
    points: usize,
    /// Class count (mixture only).
    #[arg(long, default_value_t = 4)]
    classes: u16,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives `target/` and `source/`, each with `scans/` and `labels/`.
    #[arg(long)]
    out: PathBuf,
}

fn selection_params(min_points: Option<usize>, agg: Option<MarginAggregate>) -> SelectionParams {
    let mut p = SelectionParams::default();
    if let Some(m) = min_points {
        p.min_points_per_voxel = m;
    }
    if let Some(a) = agg {
        p.margin_aggregate = a;
    }
    p
}

fn run_loop(args: LoopArgs) -> Result<()> {
    if args.data.labels.is_none() {
        bail!("--labels is required: the simulated oracle reveals ground truth");
    }
    let data = args.data.sources().load().context("loading datasets")?;
    let classes = data.map.class_count();
    let mut config = CampaignConfig::new(classes);
    config.mode = args.mode;
    config.strategy = args.strategy;
    config.voxel_size = args.voxel_size;
    config.budget = budget_from(args.budget_voxels, args.budget_points)?;
    config.seed = args.seed;
    let defaults = FitConfig::default();
    config.learner = FitConfig {
        learning_rate: args.learning_rate.unwrap_or(defaults.learning_rate),
        epochs: args.epochs.unwrap_or(defaults.epochs),
        seed: args.seed,
    };
    config.selection = selection_params(args.min_points, args.margin_aggregate);
    config.validate()?;

    let eval = match (&args.eval_scans, &args.eval_labels) {
        (Some(s), Some(l)) => {
            let opts = args.data.sources().read_options()?;
            Some(annotator_core::Dataset::load(
                s,
                Some(l.as_path()),
                &data.map,
                opts,
            )?)
        }
        _ => None,
    };
    let base: BTreeMap<String, LabelSet> = data
        .target
        .scans()
        .iter()
        .filter_map(|s| s.labels.clone().map(|l| (s.id().to_string(), l)))
        .collect();
    let mut oracle = oracle_for(&data.target);
    let mut campaign = Campaign::new(config.clone(), data.target, data.source)?;
    if let Some(e) = &eval {
        campaign = campaign.with_evaluation(e)?;
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let journal_path = args.out.join(JOURNAL_FILE);
    let mut writer = if journal_path.exists() {
        let journal = AnnotationJournal::load(&journal_path)?;
        campaign
            .resume(&journal)
            .with_context(|| format!("resuming {}", journal_path.display()))?;
        log::info!(
            "resumed {} entries over {} rounds",
            journal.len(),
            campaign.completed_rounds()
        );
        JournalWriter::open_append(&journal_path)?
    } else {
        JournalWriter::create(&journal_path, campaign.journal())?
    };
    campaign.run(&mut oracle, |entries| {
        log::info!("round committed: {} voxels", entries.len());
        writer.append(entries)
    })?;

    let model_path = args.out.join(MODEL_FILE);
    std::fs::write(&model_path, campaign.model().to_checkpoint())
        .with_context(|| format!("writing {}", model_path.display()))?;
    let freq = class_frequencies(campaign.journal(), &base, &data.map.class_names())?;
    let curve = MetricCurve::from_metrics(campaign.metrics());
    let summary = summary_text(&config, campaign.journal(), campaign.metrics(), &freq);
    emit_report(&args.out, &freq, &curve, &summary)?;
    print!("{summary}");
    log::info!(
        "wrote {} and {} under {}",
        JOURNAL_FILE,
        FREQUENCIES_FILE,
        args.out.display()
    );
    Ok(())
}

fn read_options(layout: &Option<String>, no_rescale: bool) -> Result<ReadOptions> {
    let src = DataSources {
        layout: layout.clone(),
        rescale_intensity: no_rescale.then_some(false),
        ..DataSources::default()
    };
    Ok(src.read_options()?)
}

fn run_select(args: SelectArgs) -> Result<()> {
    let cloud = read_points_with(
        &args.scan,
        read_options(&args.layout, args.no_rescale_intensity)?,
    )?;
    let predictions = read_predictions(&args.predictions)?;
    if predictions.rows() != cloud.len() {
        bail!(
            "{} has {} rows but the scan has {} points",
            args.predictions.display(),
            predictions.rows(),
            cloud.len()
        );
    }
    let index = build_index(&cloud, args.voxel_size)?;
    let excluded: BTreeSet<_> = match &args.journal {
        Some(path) => AnnotationJournal::load(path)?
            .entries()
            .iter()
            .filter(|e| e.scan_id == cloud.scan_id())
            .map(|e| e.coord)
            .collect(),
        None => BTreeSet::new(),
    };
    let params = selection_params(args.min_points, args.margin_aggregate);
    let chosen = select_voxel(
        &index,
        Some(&predictions),
        args.strategy,
        &excluded,
        &params,
        args.seed,
    )?;
    let out = match chosen {
        Some(v) => json!({
            "scan_id": cloud.scan_id(),
            "voxel_size": args.voxel_size,
            "strategy": v.strategy,
            "coord": v.coord,
            "score": v.value,
            "point_indices": index.get(&v.coord).unwrap_or(&[]),
        }),
        None => json!({
            "scan_id": cloud.scan_id(),
            "voxel_size": args.voxel_size,
            "strategy": args.strategy,
            "coord": null,
        }),
    };
    println!("{out}");
    Ok(())
}

fn run_serve(args: ServeArgs) -> Result<()> {
    let config = ServiceConfig::load(&args.config)?;
    let session = Session::from_config(&config)
        .with_context(|| format!("starting session from {}", args.config.display()))?;
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(annotator_service::serve(Arc::new(session), addr))?;
    Ok(())
}

fn write_pair(out: &Path, name: &str, data: &annotator_core::Dataset) -> Result<()> {
    let dir = out.join(name);
    write_dataset(data, &dir.join("scans"), Some(&dir.join("labels")))?;
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let (target, source) = match args.kind {
        SynthKind::LongTail => {
            let scene = LongTailScene::default();
            let shifted = LongTailScene {
                intensity_shift: 0.03,
                ..scene.clone()
            };
            (
                scene.dataset("t", args.scans, args.seed)?,
                shifted.dataset("s", args.scans, args.seed.wrapping_add(1))?,
            )
        }
        SynthKind::Mixture => {
            let domain = MixtureDomain::target(args.classes);
            let shifted = domain.shifted([0.6, -0.4, 0.1], 0.05);
            (
                domain.dataset("t", args.scans, args.points, args.seed)?,
                shifted.dataset("s", args.scans, args.points, args.seed.wrapping_add(1))?,
            )
        }
    };
    write_pair(&args.out, "target", &target)?;
    write_pair(&args.out, "source", &source)?;
    let classes = match args.kind {
        SynthKind::LongTail => LongTailScene::CLASSES,
        SynthKind::Mixture => args.classes,
    };
    println!(
        "wrote {} target and {} source scans with {classes} classes to {}",
        target.len(),
        source.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Loop(a) => run_loop(a),
        Command::Select(a) => run_select(a),
        Command::Serve(a) => run_serve(a),
        Command::Synth(a) => run_synth(a),
    }
}
