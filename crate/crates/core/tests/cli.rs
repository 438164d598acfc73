use std::fs;
use std::path::{Path, PathBuf};

use triplesurv::cli::main_with_args;
use triplesurv::data::load_csv_raw;
use triplesurv::metrics::REPORT_HEADER;

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("triplesurv").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic CSV in `dir/synth/synth.csv`.
fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("synth");
    let mut args = vec!["synth", "--out", s(&out), "--seed", "3"];
    args.extend_from_slice(extra);
    assert_eq!(run(&args), 0);
    out.join("synth.csv")
}

fn train(data: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["train", "--data", s(data), "--out", s(out), "--seed", "1", "--set", "epochs=3"];
    args.extend_from_slice(extra);
    assert_eq!(run(&args), 0);
}

#[test]
fn synth_writes_data_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), &["--set", "n_samples=250", "--set", "n_features=4"]);
    let ds = load_csv_raw(&csv, "time", "event").unwrap();
    assert_eq!((ds.len(), ds.n_features()), (250, 4));
    let oracle = fs::read_to_string(csv.with_file_name("oracle.txt")).unwrap();
    let values: Vec<&str> = oracle.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(values[0], "oracle_risk");
    assert_eq!(values.len(), 251);
}

#[test]
fn train_writes_the_four_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), &["--set", "n_samples=300"]);
    let out = dir.path().join("run");
    train(&csv, &out, &[]);
    for f in ["checkpoint.txt", "history.csv", "config.resolved.txt", "grid.txt", "test.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);
    let resolved = fs::read_to_string(out.join("config.resolved.txt")).unwrap();
    assert!(resolved.lines().any(|l| l == "epochs=3"));
    assert!(resolved.lines().any(|l| l == "seed=1"));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), &["--set", "n_samples=200"]);
    let a = dir.path().join("a");
    train(&csv, &a, &["--set", "beta=0.5"]);
    let b = dir.path().join("b");
    let cfg = a.join("config.resolved.txt");
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&b)]), 0);
    assert_eq!(
        fs::read(a.join("checkpoint.txt")).unwrap(),
        fs::read(b.join("checkpoint.txt")).unwrap()
    );
}

#[test]
fn evaluate_writes_report_curves_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), &["--set", "n_samples=400"]);
    let run_dir = dir.path().join("run");
    train(&csv, &run_dir, &[]);
    let eval_dir = dir.path().join("eval");
    let code = run(&[
        "evaluate",
        "--checkpoint",
        s(&run_dir.join("checkpoint.txt")),
        "--data",
        s(&run_dir.join("test.csv")),
        "--out",
        s(&eval_dir),
    ]);
    assert_eq!(code, 0);
    let report = fs::read_to_string(eval_dir.join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some(REPORT_HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "triplesurv-cat");
    let c: f64 = row[1].parse().unwrap();
    assert!((0.0..=1.0).contains(&c));

    let tdauc = fs::read_to_string(eval_dir.join("tdauc.csv")).unwrap();
    let points = tdauc.lines().count() - 1;
    assert!(points > 0);
    assert!(eval_dir.join("brier.csv").is_file());

    let svg = fs::read_to_string(eval_dir.join("tdauc.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let circles = doc.descendants().filter(|n| n.has_tag_name("circle")).count();
    assert_eq!(circles, points);
}

#[test]
fn untrained_model_scores_noise_near_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), &["--set", "n_samples=6000", "--set", "risk_scale=0"]);
    let run_dir = dir.path().join("run");
    train(&csv, &run_dir, &["--set", "epochs=0"]);
    let eval_dir = dir.path().join("eval");
    let code = run(&[
        "evaluate",
        "--checkpoint",
        s(&run_dir.join("checkpoint.txt")),
        "--data",
        s(&run_dir.join("test.csv")),
        "--out",
        s(&eval_dir),
    ]);
    assert_eq!(code, 0);
    let report = fs::read_to_string(eval_dir.join("report.csv")).unwrap();
    let c: f64 = report.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((c - 0.5).abs() < 0.04, "C-index {c}");
}

#[test]
fn evaluate_rejects_a_grid_with_other_bins() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), &["--set", "n_samples=200"]);
    let a = dir.path().join("a");
    train(&csv, &a, &[]);
    let b = dir.path().join("b");
    train(&csv, &b, &["--set", "k_bins=8"]);
    let code = run(&[
        "evaluate",
        "--checkpoint",
        s(&a.join("checkpoint.txt")),
        "--grid",
        s(&b.join("grid.txt")),
        "--data",
        s(&a.join("test.csv")),
        "--out",
        s(&dir.path().join("eval")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn prepare_partitions_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), &["--set", "n_samples=500"]);
    let out = dir.path().join("prep");
    assert_eq!(run(&["prepare", "--data", s(&csv), "--out", s(&out)]), 0);
    let n: Vec<usize> = ["train.csv", "val.csv", "test.csv"]
        .iter()
        .map(|f| load_csv_raw(out.join(f), "time", "event").unwrap().len())
        .collect();
    assert_eq!(n.iter().sum::<usize>(), 500);
    assert_eq!(n, [300, 100, 100]);
    assert!(out.join("grid.txt").is_file());
}

#[test]
fn input_problems_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), &["--set", "n_samples=100"]);
    let out = dir.path().join("x");
    assert_eq!(run(&["train", "--data", s(&csv), "--out", s(&out), "--time-col", "nope"]), 2);
    assert_eq!(run(&["train", "--data", s(&csv), "--out", s(&out), "--set", "bogus=1"]), 2);
    assert_eq!(run(&["train", "--data", s(&csv), "--out", s(&out), "--set", "k_bins=2"]), 2);
    assert_eq!(run(&["train", "--out", s(&out)]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["--help"]), 0);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x,time,event\n1,2,1\n1,oops,0\n").unwrap();
    assert_eq!(run(&["train", "--data", s(&bad), "--out", s(&out)]), 2);
}

#[test]
fn missing_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), &["--set", "n_samples=100"]);
    let err = load_csv_raw(&csv, "time", "status").unwrap_err();
    assert!(err.to_string().contains("status"), "{err}");
}

#[test]
fn ablate_mle_row_matches_plain_training() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), &["--set", "n_samples=300"]);
    let abl = dir.path().join("abl");
    let args = ["--data", s(&csv), "--seed", "1", "--set", "epochs=3"];
    let mut a = vec!["ablate", "--out", s(&abl)];
    a.extend_from_slice(&args);
    assert_eq!(run(&a), 0);

    let table = fs::read_to_string(abl.join("ablation.csv")).unwrap();
    let names: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["mle", "rank", "tapr", "mle_rank", "mle_tapr", "mle_tapr_cal"]);

    let plain = dir.path().join("plain");
    let mut t = vec!["train", "--out", s(&plain), "--set", "beta=0", "--set", "gamma=0"];
    t.extend_from_slice(&args);
    assert_eq!(run(&t), 0);
    assert_eq!(
        fs::read(abl.join("mle/checkpoint.txt")).unwrap(),
        fs::read(plain.join("checkpoint.txt")).unwrap()
    );

    let again = dir.path().join("abl2");
    let mut a2 = vec!["ablate", "--out", s(&again)];
    a2.extend_from_slice(&args);
    assert_eq!(run(&a2), 0);
    assert_eq!(table, fs::read_to_string(again.join("ablation.csv")).unwrap());
}
