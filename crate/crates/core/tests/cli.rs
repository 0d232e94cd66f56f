use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lidar_meta::audit::read_proposals;
use lidar_meta::cli::evaluate;
use lidar_meta::metrics::parse_report;
use lidar_meta::models::load_model;
use lidar_meta::table::read_feature_table;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lidar-meta"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn ok_in(dir: &Path, args: &[&str]) -> String {
    let out = bin().current_dir(dir).args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// synth → features → fit → eval → correlate → audit inside `root`, with
/// relative paths so two roots see identical inputs.
fn chain(root: &Path) {
    let run = |args: &[&str]| ok_in(root, args);
    run(&["synth", "--out", "data", "--profile", "medium", "--frames", "40", "--seed", "3"]);
    run(&["validate", "--manifest", "data/manifest.json"]);
    run(&["features", "--manifest", "data/manifest.json", "--out", "features"]);
    run(&[
        "fit", "--table", "features/train.tsv", "--out", "model", "--hyper", "n_trees=40", "--seed", "5",
    ]);
    run(&["eval", "--model", "model/model.lmm", "--table", "features/test.tsv", "--out", "eval"]);
    run(&["correlate", "--table", "features/train.tsv", "--out", "corr"]);
    run(&[
        "audit", "--table", "features/test.tsv", "--manifest", "data/manifest.json",
        "--model", "model/model.lmm", "--k", "20", "--seed", "1",
        "--planted", "data/deletions.jsonl", "--out", "audit",
    ]);
}

#[test]
fn full_chain_runs_and_is_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    chain(a.path());
    chain(b.path());
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.len() > 10);
    assert_eq!(fa.len(), fb.len());
    for ((pa, ba), (pb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(pa, pb);
        assert!(ba == bb, "{} differs between runs", pa.display());
    }

    let root = a.path();
    for p in [
        "features/train.tsv", "features/test.tsv", "features/pipeline.conf",
        "model/model.lmm", "model/pipeline.conf",
        "eval/report.txt", "eval/predictions.tsv", "eval/reliability.tsv",
        "corr/correlations.tsv",
        "audit/proposals_lmd.jsonl", "audit/proposals_score.jsonl", "audit/proposals_random.jsonl",
        "audit/recall.tsv",
    ] {
        assert!(root.join(p).is_file(), "{p} missing");
    }
    let conf = fs::read_to_string(root.join("model/pipeline.conf")).unwrap();
    assert!(conf.contains("hyper.n_trees = 40"));
    assert!(!conf.contains("output"));

    for m in ["lmd", "score", "random"] {
        let props = read_proposals(&root.join(format!("audit/proposals_{m}.jsonl"))).unwrap();
        assert!(!props.is_empty() && props.len() <= 20);
        assert!(props.iter().all(|p| p.iou < 0.5));
    }
    let recall = fs::read_to_string(root.join("audit/recall.tsv")).unwrap();
    assert_eq!(recall.lines().count(), 4);
}

#[test]
fn eval_report_matches_the_library() {
    let dir = TempDir::new().unwrap();
    chain(dir.path());
    let model = load_model(&dir.path().join("model/model.lmm")).unwrap();
    let table = read_feature_table(&dir.path().join("features/test.tsv"), None).unwrap();
    let (report, _) = evaluate(&model, &table).unwrap();
    let written = parse_report(&fs::read_to_string(dir.path().join("eval/report.txt")).unwrap());
    let get = |k: &str| -> f64 { written.iter().find(|(n, _)| n == k).unwrap().1.parse().unwrap() };
    assert_eq!(get("accuracy").to_bits(), report.accuracy.unwrap().to_bits());
    assert_eq!(get("auroc").to_bits(), report.auroc.unwrap().to_bits());
    assert_eq!(get("ece").to_bits(), report.ece.unwrap().to_bits());
    assert_eq!(get("samples") as usize, table.len());
}

#[test]
fn regression_eval_writes_a_scatter() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", s(&data), "--frames", "30", "--seed", "8"]);
    let feats = dir.path().join("f");
    ok(&["features", "--manifest", s(&data.join("manifest.json")), "--out", s(&feats), "--split", "all"]);
    let table = feats.join("all.tsv");
    ok(&[
        "fit", "--table", s(&table), "--out", s(&dir.path().join("m")),
        "--task", "regression", "--family", "ridge", "--feature-set", "box",
    ]);
    let stdout = ok(&[
        "eval", "--model", s(&dir.path().join("m/model.lmm")), "--table", s(&table),
        "--out", s(&dir.path().join("e")),
    ]);
    assert!(stdout.contains("r_squared\t"));
    assert!(stdout.contains("feature_set\tbox"));
    let scatter = fs::read_to_string(dir.path().join("e/scatter.tsv")).unwrap();
    let rows = read_feature_table(&table, None).unwrap().len();
    assert_eq!(scatter.lines().count(), rows + 1);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["synth", "--out", s(dir.path()), "--bogus-flag"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["synth", "--help"]).status.code(), Some(0));
    assert_eq!(
        run(&["validate", "--manifest", s(&dir.path().join("missing.json"))]).status.code(),
        Some(3)
    );
    let out = dir.path().join("d");
    assert_eq!(
        run(&["synth", "--out", s(&out), "--frames", "2", "--set", "miss_rate=-1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["synth", "--out", s(&out), "--frames", "2", "--profile", "extreme"]).status.code(),
        Some(1)
    );
    // ridge cannot classify
    ok(&["synth", "--out", s(&out), "--frames", "4"]);
    ok(&["features", "--manifest", s(&out.join("manifest.json")), "--out", s(&dir.path().join("f"))]);
    let code = run(&[
        "fit", "--table", s(&dir.path().join("f/train.tsv")), "--out", s(&dir.path().join("m")),
        "--family", "ridge",
    ])
    .status
    .code();
    assert_eq!(code, Some(1));
}

#[test]
fn registry_lists_every_feature() {
    let out = ok(&["features", "--registry"]);
    let names: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(names.len(), 90);
    assert!(names.iter().any(|l| l.starts_with("score")));
}

#[test]
fn noise_free_data_is_all_true_positives() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", s(&data), "--profile", "none", "--frames", "12", "--seed", "2"]);
    let manifest = data.join("manifest.json");
    let feats = dir.path().join("f");
    ok(&["features", "--manifest", s(&manifest), "--out", s(&feats), "--split", "all"]);
    let table = read_feature_table(&feats.join("all.tsv"), None).unwrap();
    assert!(!table.is_empty());
    assert!(table.rows.iter().all(|r| r.tp && r.iou > 0.999));

    // a single-class table has no AUROC
    ok(&[
        "fit", "--table", s(&feats.join("all.tsv")), "--out", s(&dir.path().join("m")),
        "--family", "logreg", "--feature-set", "score",
    ]);
    let code = run(&[
        "eval", "--model", s(&dir.path().join("m/model.lmm")), "--table", s(&feats.join("all.tsv")),
        "--out", s(&dir.path().join("e")),
    ])
    .status
    .code();
    assert_eq!(code, Some(4));

    let audit = dir.path().join("a");
    ok(&[
        "audit", "--table", s(&feats.join("all.tsv")), "--manifest", s(&manifest),
        "--method", "score", "--out", s(&audit),
    ]);
    assert!(read_proposals(&audit.join("proposals_score.jsonl")).unwrap().is_empty());
}

#[test]
fn select_writes_a_trace_with_the_requested_budget() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", s(&data), "--frames", "30", "--seed", "4"]);
    let feats = dir.path().join("f");
    ok(&["features", "--manifest", s(&data.join("manifest.json")), "--out", s(&feats)]);
    let out = dir.path().join("sel");
    let train = feats.join("train.tsv");
    let args = [
        "select", "--train", s(&train), "--out", s(&out), "--budget", "3",
        "--family", "logreg", "--candidates", "box",
    ];
    ok(&args);
    let first = files(&out);
    ok(&args);
    assert_eq!(files(&out), first);
    let trace = fs::read_to_string(out.join("selection.tsv")).unwrap();
    assert_eq!(trace.lines().next(), Some("step\tfeature\tmetric"));
    assert_eq!(trace.lines().count(), 4);
    assert!(out.join("selection_reference.txt").is_file());
    assert!(out.join("selection_scores.tsv").is_file());
    assert_eq!(
        run(&["select", "--train", s(&feats.join("train.tsv")), "--out", s(&out), "--budget", "0"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", s(&data), "--frames", "6", "--seed", "1"]);
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "score_floor = 0.3\nfamily = forest\nnms_metric = 3d\n").unwrap();
    let out = dir.path().join("f");
    ok(&[
        "features", "--manifest", s(&data.join("manifest.json")), "--out", s(&out),
        "--config", s(&conf), "--score-floor", "0.2",
    ]);
    let written = fs::read_to_string(out.join("pipeline.conf")).unwrap();
    assert!(written.contains("score_floor = 0.2"));
    assert!(written.contains("family = forest"));
    assert!(written.contains("nms_metric = 3d"));
}
