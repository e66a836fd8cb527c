use std::path::Path;
use std::process::{Command, Output};

use swishnet::report::{parse_bench_csv, parse_metrics_csv, without_timing};

fn swishnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swishnet"))
        .args(args)
        .env_remove("SWISHNET_MNIST_DIR")
        .env_remove("SWISHNET_CIFAR10_DIR")
        .env_remove("SWISHNET_CIFAR100_DIR")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn train_writes_artifacts_and_config_rerun_matches() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = swishnet(&[
        "train",
        "--synthetic",
        "--epochs",
        "2",
        "--seed",
        "3",
        "--out-dir",
        p(&first),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "model.swnn", "config.json"] {
        assert!(first.join(f).is_file(), "missing {f}");
    }
    let table = parse_metrics_csv(&read(&first.join("metrics.csv"))).unwrap();
    assert_eq!(table.epochs.len(), 2);

    let second = dir.path().join("second");
    let o = swishnet(&[
        "train",
        "--config",
        p(&first.join("config.json")),
        "--out-dir",
        p(&second),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        without_timing(&read(&first.join("metrics.csv"))),
        without_timing(&read(&second.join("metrics.csv")))
    );
    assert_eq!(
        std::fs::read(first.join("model.swnn")).unwrap(),
        std::fs::read(second.join("model.swnn")).unwrap()
    );
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = swishnet(&["train", "--dataset", "mnist", "--out-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(swishnet(&["train", "--act", "gelu"]).status.code(), Some(2));
    assert_eq!(swishnet(&["bench", "--elements", "10"]).status.code(), Some(2));
    assert_eq!(swishnet(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_fails_on_impossible_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("ok");
    let o = swishnet(&["gradcheck", "--arch", "fcnn", "--act", "swishrelu", "--out-dir", p(&ok)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ok.join("gradcheck.txt").is_file());

    let bad = dir.path().join("bad");
    let o = swishnet(&["gradcheck", "--arch", "fcnn", "--tol", "1e-30", "--out-dir", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("worst offender"));
}

#[test]
fn bench_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = swishnet(&[
        "bench",
        "--kinds",
        "swishrelu,tanh",
        "--elements",
        "1000000",
        "--reps",
        "5",
        "--out-dir",
        p(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = parse_bench_csv(&read(&dir.path().join("bench.csv"))).unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.result.kind.name()).collect();
    assert_eq!(names.len(), 2, "{names:?}");
    assert!(names.contains(&"swishrelu") && names.contains(&"tanh"));
    assert!(report
        .rows
        .iter()
        .all(|r| r.result.ns_per_element > 0.0 && r.ratio_vs_relu > 0.0));
}

#[test]
fn matrix_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("matrix");
    let o = swishnet(&[
        "matrix",
        "--rows",
        "relu:relu,swishrelu",
        "--synthetic",
        "--synthetic-train",
        "128",
        "--synthetic-test",
        "32",
        "--epochs",
        "2",
        "--out-dir",
        p(&run),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read(&run.join("matrix.csv"));
    assert_eq!(summary.lines().count(), 3, "{summary}");
    let a = run.join("row0_relu_relu").join("metrics.csv");
    let b = run.join("row1_swishrelu_swishrelu").join("metrics.csv");

    let plot = dir.path().join("plot");
    let o = swishnet(&[
        "plot",
        p(&a),
        p(&b),
        "--metrics",
        "train_loss,test_loss",
        "--out-dir",
        p(&plot),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = read(&plot.join("plot.svg"));
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    roxmltree::Document::parse(&svg).unwrap();

    assert_eq!(
        swishnet(&["plot", p(&a), "--metrics", "accuracy"]).status.code(),
        Some(2)
    );
}
