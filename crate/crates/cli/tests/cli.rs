use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use annotator_core::prediction::PredictionSource;
use annotator_core::synth::{uniform_scan, write_dataset};
use annotator_core::{
    build_index, read_points, read_predictions, select_voxel, write_predictions, AnnotationJournal,
    Dataset, PredictionMatrix, SelectionParams, Strategy,
};

fn annotator(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_annotator"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = annotator(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path) {
    ok(&[
        "synth",
        "--kind",
        "mixture",
        "--scans",
        "3",
        "--points",
        "200",
        "--classes",
        "4",
        "--seed",
        "5",
        "--out",
        dir.to_str().unwrap(),
    ]);
}

fn run_loop(data: &Path, out: &Path, extra: &[&str]) -> String {
    let scans = data.join("target/scans");
    let labels = data.join("target/labels");
    let mut args = vec![
        "loop",
        "--scans",
        scans.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--num-classes",
        "4",
        "--budget-voxels",
        "2",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn loop_writes_journal_model_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = dir.path().join("run");
    let summary = run_loop(dir.path(), &out, &[]);
    assert!(!summary.is_empty());
    let journal = AnnotationJournal::load(out.join("journal.jsonl")).unwrap();
    assert_eq!(journal.len(), 6);
    assert_eq!(journal.last_round(), 2);
    for f in ["model.txt", "frequencies.csv", "curve.csv", "summary.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let curve = String::from_utf8(read(&out.join("curve.csv"))).unwrap();
    assert_eq!(curve.lines().next().unwrap(), "round,budget,metric,value");
    assert_eq!(curve.lines().count(), 3);
    let freq = String::from_utf8(read(&out.join("frequencies.csv"))).unwrap();
    assert_eq!(
        freq.lines().next().unwrap(),
        "class_id,name,selected_count,selected_share,base_share,lift"
    );
    assert_eq!(freq.lines().count(), 5);
}

#[test]
fn loop_resumes_a_truncated_journal() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let full = dir.path().join("full");
    run_loop(dir.path(), &full, &[]);

    let cut = dir.path().join("cut");
    std::fs::create_dir_all(&cut).unwrap();
    let text = String::from_utf8(read(&full.join("journal.jsonl"))).unwrap();
    let head: String = text
        .lines()
        .take(1 + 3 + 1)
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(cut.join("journal.jsonl"), head).unwrap();
    run_loop(dir.path(), &cut, &[]);
    for f in [
        "journal.jsonl",
        "model.txt",
        "frequencies.csv",
        "curve.csv",
        "summary.txt",
    ] {
        assert_eq!(read(&full.join(f)), read(&cut.join(f)), "{f}");
    }
    run_loop(dir.path(), &cut, &[]);
    assert_eq!(
        read(&full.join("journal.jsonl")),
        read(&cut.join("journal.jsonl"))
    );
}

#[test]
fn loop_rejects_a_foreign_journal() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = dir.path().join("run");
    run_loop(dir.path(), &out, &[]);
    let scans = dir.path().join("target/scans");
    let labels = dir.path().join("target/labels");
    let o = annotator(&[
        "loop",
        "--scans",
        scans.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--num-classes",
        "4",
        "--budget-voxels",
        "2",
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("different campaign configuration"));
}

#[test]
fn loop_runs_warm_start_modes_with_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let src_scans = dir.path().join("source/scans");
    let src_labels = dir.path().join("source/labels");
    let eval_scans = dir.path().join("target/scans");
    let eval_labels = dir.path().join("target/labels");
    for mode in ["asfda", "ada"] {
        let out = dir.path().join(mode);
        run_loop(
            dir.path(),
            &out,
            &[
                "--mode",
                mode,
                "--source-scans",
                src_scans.to_str().unwrap(),
                "--source-labels",
                src_labels.to_str().unwrap(),
                "--eval-scans",
                eval_scans.to_str().unwrap(),
                "--eval-labels",
                eval_labels.to_str().unwrap(),
                "--epochs",
                "50",
            ],
        );
        let journal = AnnotationJournal::load(out.join("journal.jsonl")).unwrap();
        assert!(journal
            .entries()
            .iter()
            .all(|e| e.strategy == Strategy::Vcd));
        let curve = String::from_utf8(read(&out.join("curve.csv"))).unwrap();
        let last = curve.lines().last().unwrap();
        let value: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&value));
    }
}

#[test]
fn point_budget_and_conflicting_budgets() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = dir.path().join("pts");
    let scans = dir.path().join("target/scans");
    let labels = dir.path().join("target/labels");
    ok(&[
        "loop",
        "--scans",
        scans.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--num-classes",
        "4",
        "--budget-points",
        "30",
        "--out",
        out.to_str().unwrap(),
    ]);
    let journal = AnnotationJournal::load(out.join("journal.jsonl")).unwrap();
    let mut per_scan = std::collections::BTreeMap::<&str, usize>::new();
    for e in journal.entries() {
        *per_scan.entry(&e.scan_id).or_default() += e.point_indices.len();
    }
    assert!(per_scan.values().all(|&n| n >= 30));

    let o = annotator(&[
        "loop",
        "--scans",
        scans.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--num-classes",
        "4",
        "--budget-points",
        "30",
        "--budget-voxels",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
}

#[test]
fn select_matches_library_and_honors_journal() {
    let dir = tempfile::tempdir().unwrap();
    let data = Dataset::new(vec![uniform_scan("scan7", 300, 3.0, 3, 9).unwrap()]).unwrap();
    write_dataset(&data, &dir.path().join("scans"), None).unwrap();
    let scan_path = dir.path().join("scans/scan7.bin");
    let cloud = read_points(&scan_path).unwrap();
    let values: Vec<f64> = (0..cloud.len())
        .flat_map(|i| {
            let a = ((i * 37) % 11) as f64 + 1.0;
            let b = ((i * 13) % 7) as f64 + 1.0;
            let c = ((i * 5) % 3) as f64 + 1.0;
            let s = a + b + c;
            [a / s, b / s, c / s]
        })
        .collect();
    let preds = PredictionMatrix::new(values, 3, PredictionSource::File).unwrap();
    let pred_path = dir.path().join("scan7.aprd");
    write_predictions(&preds, &pred_path).unwrap();
    let preds = read_predictions(&pred_path).unwrap();

    let index = build_index(&cloud, 0.5).unwrap();
    for strategy in Strategy::ALL {
        let name = strategy.as_str();
        let stdout = ok(&[
            "select",
            "--scan",
            scan_path.to_str().unwrap(),
            "--predictions",
            pred_path.to_str().unwrap(),
            "--strategy",
            name,
            "--voxel-size",
            "0.5",
            "--seed",
            "2",
        ]);
        let got: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
        let want = select_voxel(
            &index,
            Some(&preds),
            strategy,
            &Default::default(),
            &SelectionParams::default(),
            2,
        )
        .unwrap()
        .unwrap();
        assert_eq!(got["scan_id"], "scan7");
        assert_eq!(got["strategy"], name);
        assert_eq!(
            got["coord"],
            serde_json::json!([want.coord.a, want.coord.b, want.coord.c])
        );
        assert!((got["score"].as_f64().unwrap() - want.value).abs() <= 1e-12);
        assert_eq!(
            got["point_indices"].as_array().unwrap().len(),
            index.get(&want.coord).unwrap().len()
        );
    }

    let first = ok(&[
        "select",
        "--scan",
        scan_path.to_str().unwrap(),
        "--predictions",
        pred_path.to_str().unwrap(),
        "--voxel-size",
        "0.5",
    ]);
    let first: serde_json::Value = serde_json::from_str(first.trim()).unwrap();
    let journal_text = format!(
        "{{\"record\":\"campaign\",\"mode\":\"al\",\"strategy\":\"vcd\",\"voxel_size\":0.5,\"budget\":{{\"voxels_per_scan\":5}},\"seed\":0,\"classes\":3}}\n\
         {{\"record\":\"entry\",\"scan_id\":\"scan7\",\"round\":1,\"coord\":{},\"strategy\":\"vcd\",\"score\":0.0,\"point_indices\":[0],\"revealed_labels\":[1]}}\n",
        first["coord"]
    );
    let journal_path = dir.path().join("j.jsonl");
    std::fs::write(&journal_path, journal_text).unwrap();
    AnnotationJournal::load(&journal_path).unwrap();
    let second = ok(&[
        "select",
        "--scan",
        scan_path.to_str().unwrap(),
        "--predictions",
        pred_path.to_str().unwrap(),
        "--voxel-size",
        "0.5",
        "--journal",
        journal_path.to_str().unwrap(),
    ]);
    let second: serde_json::Value = serde_json::from_str(second.trim()).unwrap();
    assert_ne!(first["coord"], second["coord"]);
}

#[test]
fn select_rejects_mismatched_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = Dataset::new(vec![uniform_scan("a", 50, 3.0, 2, 1).unwrap()]).unwrap();
    write_dataset(&data, dir.path(), None).unwrap();
    let preds = PredictionMatrix::new(vec![0.5; 2 * 49], 2, PredictionSource::File).unwrap();
    write_predictions(&preds, dir.path().join("p.aprd")).unwrap();
    let o = annotator(&[
        "select",
        "--scan",
        dir.path().join("a.bin").to_str().unwrap(),
        "--predictions",
        dir.path().join("p.aprd").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(30))).ok()?;
    write!(
        s,
        "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n"
    )
    .ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[test]
fn serve_answers_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let config = dir.path().join("service.toml");
    std::fs::write(
        &config,
        format!(
            "session_id = \"demo\"\ndata_root = \"{}\"\nscans = \"target/scans\"\nlabels = \"target/labels\"\nnum_classes = 4\nbudget_voxels = 2\nrun_dir = \"{}\"\n",
            dir.path().display(),
            dir.path().join("run").display()
        ),
    )
    .unwrap();
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_annotator"))
        .args([
            "serve",
            "--port",
            &port.to_string(),
            "--config",
            config.to_str().unwrap(),
        ])
        .env("RUST_LOG", "warn")
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    let response = loop {
        if let Some(r) = http_get(port, "/api/v1/session/demo") {
            break r;
        }
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(100));
    };
    let next = http_get(port, "/api/v1/session/demo/next").unwrap();
    let missing = http_get(port, "/api/v1/session/other/next").unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"status\":\"awaiting_label\""));
    assert!(next.starts_with("HTTP/1.1 200"));
    assert!(next.contains("\"round\":1"));
    assert!(missing.starts_with("HTTP/1.1 404"));
    assert!(dir.path().join("run/journal.jsonl").exists());
}
