use std::collections::{BTreeMap, BTreeSet};

use annotator_core::report::{curve_csv, summary_text, CURVE_FILE, FREQUENCIES_FILE};
use annotator_core::synth::{lattice_plane, oracle_for, LongTailScene, MixtureDomain};
use annotator_core::*;

fn mixture(scans: usize, seed: u64) -> Dataset {
    MixtureDomain::target(4)
        .dataset("t", scans, 300, seed)
        .unwrap()
}

fn config(mode: Mode, strategy: Strategy, seed: u64) -> CampaignConfig {
    let mut c = CampaignConfig::new(4);
    c.mode = mode;
    c.strategy = strategy;
    c.seed = seed;
    c
}

#[test]
fn voxel_budget_gives_exact_rounds_and_entries() {
    let data = mixture(10, 1);
    let mut oracle = oracle_for(&data);
    let out = run_campaign(
        config(Mode::Al, Strategy::Vcd, 1),
        data,
        None,
        None,
        &mut oracle,
    )
    .unwrap();
    assert_eq!(out.metrics.rounds_executed(), 5);
    assert_eq!(out.journal.len(), 50);
    let keys: BTreeSet<_> = out
        .journal
        .entries()
        .iter()
        .map(|e| (&e.scan_id, e.coord))
        .collect();
    assert_eq!(keys.len(), 50);
    let mut per_scan: BTreeMap<&str, usize> = BTreeMap::new();
    for e in out.journal.entries() {
        *per_scan.entry(&e.scan_id).or_default() += 1;
    }
    assert!(per_scan.values().all(|&n| n == 5));
    assert!(out.journal.entries()[..10]
        .iter()
        .all(|e| e.strategy == Strategy::Random));
    assert!(out.journal.entries()[10..]
        .iter()
        .all(|e| e.strategy == Strategy::Vcd));
}

#[test]
fn small_scans_exhaust_without_blocking_others() {
    let mut scans = mixture(2, 3).into_scans();
    let tiny = PointCloud::new(
        "tiny",
        vec![
            Point::new(0.1, 0.1, 0.1, 0.2),
            Point::new(5.1, 0.1, 0.1, 0.8),
        ],
    )
    .unwrap();
    scans.push(Scan::new(tiny, Some(LabelSet::new(vec![1, 2], 4).unwrap())).unwrap());
    let data = Dataset::new(scans).unwrap();
    let mut oracle = oracle_for(&data);
    let out = run_campaign(
        config(Mode::Al, Strategy::Entropy, 3),
        data,
        None,
        None,
        &mut oracle,
    )
    .unwrap();
    let tiny_entries = out
        .journal
        .entries()
        .iter()
        .filter(|e| e.scan_id == "tiny")
        .count();
    assert_eq!(tiny_entries, 2);
    assert_eq!(out.journal.len(), 12);
    assert_eq!(out.metrics.rounds[2].exhausted_scans, 1);
}

#[test]
fn journal_labels_replay_against_oracle() {
    let data = mixture(4, 5);
    let mut oracle = oracle_for(&data);
    let out = run_campaign(
        config(Mode::Al, Strategy::Margin, 5),
        data,
        None,
        None,
        &mut oracle,
    )
    .unwrap();
    for e in out.journal.entries() {
        assert_eq!(
            oracle.lookup(&e.scan_id, &e.point_indices).unwrap(),
            e.revealed_labels
        );
    }
}

#[test]
fn warm_start_modes_run_and_use_strategy_from_round_one() {
    let target = mixture(4, 7);
    let source = MixtureDomain::target(4)
        .shifted([0.5, 0.0, 0.0], 0.05)
        .dataset("s", 4, 300, 8)
        .unwrap();
    for mode in [Mode::Asfda, Mode::Ada] {
        let mut oracle = oracle_for(&target);
        let out = run_campaign(
            config(mode, Strategy::Vcd, 7),
            target.clone(),
            Some(source.clone()),
            Some(&target),
            &mut oracle,
        )
        .unwrap();
        assert!(out
            .journal
            .entries()
            .iter()
            .all(|e| e.strategy == Strategy::Vcd));
        assert!(out.metrics.final_accuracy().unwrap() > 0.5);
    }
}

#[test]
fn point_budget_rounds_shrink_as_voxels_grow() {
    let scan = lattice_plane("p", 120, 0.05).unwrap();
    let data = Dataset::new(vec![scan]).unwrap();
    let mut last = u32::MAX;
    for size in [0.05, 0.1, 0.15, 0.2, 0.25, 0.3] {
        let mut c = CampaignConfig::new(2);
        c.voxel_size = size;
        c.budget = Budget::PointsPerScan(11);
        c.strategy = Strategy::Random;
        let mut oracle = oracle_for(&data);
        let out = run_campaign(c, data.clone(), None, None, &mut oracle).unwrap();
        let rounds = out.metrics.rounds_executed() as u32;
        assert!(rounds <= last, "{size}: {rounds} > {last}");
        assert!(out.journal.total_points() >= 11);
        last = rounds;
    }
    assert_eq!(last, 1);
}

fn run_rounds(campaign: &mut Campaign, oracle: &mut dyn Oracle, rounds: usize) {
    for _ in 0..rounds {
        campaign.run_round(oracle).unwrap();
    }
}

#[test]
fn resume_after_kill_reproduces_journal_bytes() {
    let data = mixture(6, 9);
    let cfg = config(Mode::Al, Strategy::Vcd, 9);
    let mut oracle = oracle_for(&data);
    let full = run_campaign(cfg.clone(), data.clone(), None, None, &mut oracle).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("journal.jsonl");
    let mut first = Campaign::new(cfg.clone(), data.clone(), None).unwrap();
    let mut writer = JournalWriter::create(&path, first.journal()).unwrap();
    for _ in 0..2 {
        let delta = first.run_round(&mut oracle).unwrap();
        writer.append(&delta).unwrap();
    }
    drop((first, writer));

    let journal = AnnotationJournal::load(&path).unwrap();
    let mut resumed = Campaign::new(cfg, data, None).unwrap();
    resumed.resume(&journal).unwrap();
    assert_eq!(resumed.completed_rounds(), 2);
    let mut writer = JournalWriter::open_append(&path).unwrap();
    resumed.run(&mut oracle, |d| writer.append(d)).unwrap();
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        full.journal.to_jsonl()
    );
    assert_eq!(resumed.model().to_checkpoint(), full.model.to_checkpoint());
}

#[test]
fn resume_mid_round_keeps_pending_query() {
    let data = mixture(3, 12);
    let cfg = config(Mode::Al, Strategy::Entropy, 12);
    let mut oracle = oracle_for(&data);
    let mut live = Campaign::new(cfg.clone(), data.clone(), None).unwrap();
    run_rounds(&mut live, &mut oracle, 1);
    let q = live.next_query().unwrap().unwrap().clone();
    let labels = oracle.lookup(&q.scan_id, &q.point_indices).unwrap();
    live.submit(&q.scan_id, q.coord, labels).unwrap();
    let pending = live.next_query().unwrap().unwrap().clone();

    let mut resumed = Campaign::new(cfg, data, None).unwrap();
    resumed.resume(live.journal()).unwrap();
    assert_eq!(resumed.pending_query(), Some(&pending));
    assert_eq!(resumed.journal(), live.journal());
}

#[test]
fn resume_rejects_foreign_or_tampered_journal() {
    let data = mixture(3, 13);
    let mut oracle = oracle_for(&data);
    let out = run_campaign(
        config(Mode::Al, Strategy::Vcd, 13),
        data.clone(),
        None,
        None,
        &mut oracle,
    )
    .unwrap();

    let mut other_seed =
        Campaign::new(config(Mode::Al, Strategy::Vcd, 14), data.clone(), None).unwrap();
    assert!(matches!(
        other_seed.resume(&out.journal),
        Err(Error::Config(_))
    ));

    let text = out.journal.to_jsonl();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(4, 5);
    let swapped = AnnotationJournal::parse(&lines.join("\n")).unwrap();
    let mut c = Campaign::new(config(Mode::Al, Strategy::Vcd, 13), data, None).unwrap();
    assert!(matches!(c.resume(&swapped), Err(Error::Integrity(_))));
}

#[test]
fn journal_file_rejects_duplicates_on_load() {
    let data = mixture(2, 15);
    let mut oracle = oracle_for(&data);
    let out = run_campaign(
        config(Mode::Al, Strategy::Random, 15),
        data,
        None,
        None,
        &mut oracle,
    )
    .unwrap();
    let text = out.journal.to_jsonl();
    let dup = format!("{text}{}\n", text.lines().nth(1).unwrap());
    assert!(matches!(
        AnnotationJournal::parse(&dup),
        Err(Error::Integrity(_))
    ));
}

#[test]
fn reports_are_deterministic_and_parse_back() {
    let scene = LongTailScene::default();
    let data = scene.dataset("lt", 4, 2).unwrap();
    let names: Vec<String> = LongTailScene::NAMES.iter().map(|s| s.to_string()).collect();
    let base: BTreeMap<String, LabelSet> = data
        .scans()
        .iter()
        .map(|s| (s.id().to_string(), s.labels.clone().unwrap()))
        .collect();
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let mut c = CampaignConfig::new(LongTailScene::CLASSES);
        c.seed = 2;
        let mut oracle = oracle_for(&data);
        let out = run_campaign(c.clone(), data.clone(), None, None, &mut oracle).unwrap();
        let freq = class_frequencies(&out.journal, &base, &names).unwrap();
        let curve = MetricCurve::from_metrics(&out.metrics);
        assert!(curve.budget_is_increasing());
        let dir = tempfile::tempdir().unwrap();
        emit_report(
            dir.path(),
            &freq,
            &curve,
            &summary_text(&c, &out.journal, &out.metrics, &freq),
        )
        .unwrap();
        let files: Vec<Vec<u8>> = ["frequencies.csv", "curve.csv", "summary.txt"]
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)).unwrap())
            .collect();

        let mut rdr = csv::Reader::from_path(dir.path().join(FREQUENCIES_FILE)).unwrap();
        let (mut sel, mut basesum, mut count) = (0.0, 0.0, 0u64);
        for r in rdr.records() {
            let r = r.unwrap();
            count += r[2].parse::<u64>().unwrap();
            sel += r[3].parse::<f64>().unwrap();
            basesum += r[4].parse::<f64>().unwrap();
        }
        assert!((sel - 1.0).abs() <= 1e-9 && (basesum - 1.0).abs() <= 1e-9);
        assert_eq!(
            count + freq.ignored_count,
            out.journal.total_points() as u64
        );
        let curve_text = std::fs::read_to_string(dir.path().join(CURVE_FILE)).unwrap();
        assert_eq!(
            curve_text.lines().count() - 1,
            out.metrics.rounds_executed()
        );
        assert_eq!(curve_csv(&curve), curve_text.as_bytes());
        bytes.push(files);
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn service_style_stepping_matches_round_runner() {
    let data = mixture(4, 16);
    let cfg = config(Mode::Al, Strategy::Vcd, 16);
    let mut oracle = oracle_for(&data);
    let batch = run_campaign(cfg.clone(), data.clone(), None, None, &mut oracle).unwrap();
    let mut stepped = Campaign::new(cfg, data, None).unwrap();
    while let Some(q) = stepped.next_query().unwrap().cloned() {
        let labels = oracle.lookup(&q.scan_id, &q.point_indices).unwrap();
        stepped.submit(&q.scan_id, q.coord, labels).unwrap();
    }
    assert!(stepped.is_done());
    assert_eq!(stepped.journal().to_jsonl(), batch.journal.to_jsonl());
    assert_eq!(stepped.metrics(), &batch.metrics);
}
