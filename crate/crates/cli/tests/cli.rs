//! End-to-end tests driving the binary the way a user would.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tweedie-conformal")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary should launch")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "command {args:?} failed with {:?}:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn synth(dir: &Path, name: &str, n: usize, seed: u64) -> (PathBuf, PathBuf) {
    run_ok(
        dir,
        &[
            "synth",
            "--n",
            &n.to_string(),
            "--seed",
            &seed.to_string(),
            "--out",
            name,
        ],
    );
    (dir.join(name), dir.join(format!("{}.schema.json", name.trim_end_matches(".csv"))))
}

const FAST_GBM: &[&str] = &[
    "--rounds",
    "80",
    "--learning-rate",
    "0.1",
    "--leaves",
    "6",
    "--bins",
    "32",
    "--min-leaf",
    "10",
];

#[test]
fn fit_reports_single_cell_power_grid() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "train.csv", 600, 1);
    let mut args = vec![
        "fit",
        "--data",
        "train.csv",
        "--schema",
        "train.schema.json",
        "--power-grid",
        "1.5",
        "--out",
        "model.json",
    ];
    args.extend_from_slice(FAST_GBM);
    let stdout = run_ok(dir.path(), &args);
    assert!(stdout.contains("p = 1.5"), "stdout: {stdout}");
    assert!(dir.path().join("model.json").exists());
}

#[test]
fn fit_model_reloads_to_identical_predictions() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "train.csv", 600, 2);
    synth(dir.path(), "calib.csv", 300, 3);
    synth(dir.path(), "query.csv", 80, 4);
    let mut args = vec![
        "fit",
        "--data",
        "train.csv",
        "--schema",
        "train.schema.json",
        "--power-grid",
        "1.5",
        "--out",
        "model.json",
    ];
    args.extend_from_slice(FAST_GBM);
    run_ok(dir.path(), &args);

    // Producing intervals twice from the saved model must give identical
    // bytes: the model file fully determines the predictions.
    let interval_args = [
        "interval",
        "--model",
        "model.json",
        "--calib",
        "calib.csv",
        "--query",
        "query.csv",
        "--schema",
        "train.schema.json",
        "--kinds",
        "pearson,deviance",
        "--out",
    ];
    let mut a = interval_args.to_vec();
    a.push("iv_a.csv");
    run_ok(dir.path(), &a);
    let mut b = interval_args.to_vec();
    b.push("iv_b.csv");
    run_ok(dir.path(), &b);
    let bytes_a = std::fs::read(dir.path().join("iv_a.csv")).unwrap();
    let bytes_b = std::fs::read(dir.path().join("iv_b.csv")).unwrap();
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn fit_glm_with_huge_lasso_penalty_zeroes_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "train.csv", 500, 5);
    run_ok(
        dir.path(),
        &[
            "fit",
            "--data",
            "train.csv",
            "--schema",
            "train.schema.json",
            "--model",
            "glm",
            "--power-grid",
            "1.5",
            "--lambda",
            "1e9",
            "--gamma",
            "1",
            "--out",
            "glm.json",
        ],
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("glm.json")).unwrap()).unwrap();
    let beta = json["beta"].as_array().unwrap();
    assert!(!beta.is_empty());
    assert!(
        beta.iter().all(|b| b.as_f64().unwrap() == 0.0),
        "expected all-zero coefficients, got {beta:?}"
    );
}

#[test]
fn interval_rows_are_nonnegative_and_contain_the_mean() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "train.csv", 600, 6);
    synth(dir.path(), "calib.csv", 300, 7);
    synth(dir.path(), "query.csv", 60, 8);
    let mut args = vec![
        "fit",
        "--data",
        "train.csv",
        "--schema",
        "train.schema.json",
        "--power-grid",
        "1.5",
        "--out",
        "model.json",
    ];
    args.extend_from_slice(FAST_GBM);
    run_ok(dir.path(), &args);
    run_ok(
        dir.path(),
        &[
            "interval",
            "--model",
            "model.json",
            "--calib",
            "calib.csv",
            "--query",
            "query.csv",
            "--schema",
            "train.schema.json",
            "--kinds",
            "pearson,anscombe,unstandardized",
            "--out",
            "iv.csv",
        ],
    );
    let mut rdr = csv::Reader::from_path(dir.path().join("iv.csv")).unwrap();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.unwrap();
        let mu: f64 = record[1].parse().unwrap();
        let lo: f64 = record[2].parse().unwrap();
        let hi: f64 = record[3].parse().unwrap();
        assert!(lo >= 0.0, "lo {lo} negative");
        assert!(lo <= mu && mu <= hi, "mean {mu} outside [{lo}, {hi}]");
        rows += 1;
    }
    assert_eq!(rows, 180, "3 kinds x 60 query rows");
}

#[test]
fn interval_weighted_kind_without_spread_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "train.csv", 500, 9);
    synth(dir.path(), "calib.csv", 200, 10);
    let mut args = vec![
        "fit",
        "--data",
        "train.csv",
        "--schema",
        "train.schema.json",
        "--power-grid",
        "1.5",
        "--out",
        "model.json",
    ];
    args.extend_from_slice(FAST_GBM);
    run_ok(dir.path(), &args);
    let out = run(
        dir.path(),
        &[
            "interval",
            "--model",
            "model.json",
            "--calib",
            "calib.csv",
            "--query",
            "calib.csv",
            "--schema",
            "train.schema.json",
            "--kinds",
            "locally_weighted_pearson",
            "--out",
            "iv.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn importance_rejects_glm_models() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "train.csv", 400, 11);
    run_ok(
        dir.path(),
        &[
            "fit",
            "--data",
            "train.csv",
            "--schema",
            "train.schema.json",
            "--model",
            "glm",
            "--power-grid",
            "1.5",
            "--lambda",
            "0.1",
            "--gamma",
            "1",
            "--out",
            "glm.json",
        ],
    );
    let out = run(dir.path(), &["importance", "--model", "glm.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn importance_table_is_sorted_by_gain() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "train.csv", 600, 12);
    let mut args = vec![
        "fit",
        "--data",
        "train.csv",
        "--schema",
        "train.schema.json",
        "--power-grid",
        "1.5",
        "--out",
        "model.json",
    ];
    args.extend_from_slice(FAST_GBM);
    run_ok(dir.path(), &args);
    run_ok(
        dir.path(),
        &["importance", "--model", "model.json", "--out", "imp.csv"],
    );
    let mut rdr = csv::Reader::from_path(dir.path().join("imp.csv")).unwrap();
    let gains: Vec<f64> = rdr
        .records()
        .map(|r| r.unwrap()[1].parse::<f64>().unwrap())
        .collect();
    assert!(!gains.is_empty());
    assert!(gains.windows(2).all(|w| w[0] >= w[1]), "gains not sorted: {gains:?}");
    let total: f64 = gains.iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn simulate_same_seed_writes_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let base_args = [
        "simulate",
        "--synthetic",
        "--synth-n",
        "900",
        "--n1",
        "300",
        "--n2",
        "300",
        "--n3",
        "300",
        "--reps",
        "3",
        "--kinds",
        "pearson,anscombe",
        "--models",
        "gbm",
        "--power-grid",
        "1.5",
        "--rounds",
        "40",
        "--learning-rate",
        "0.1",
        "--leaves",
        "6",
        "--bins",
        "32",
        "--min-leaf",
        "10",
        "--seed",
        "13",
        "--out-prefix",
    ];
    let mut a = base_args.to_vec();
    a.push("runa");
    run_ok(dir.path(), &a);
    let mut b = base_args.to_vec();
    b.push("runb");
    run_ok(dir.path(), &b);
    for suffix in ["_aggregate.csv", "_repetitions.csv"] {
        let bytes_a = std::fs::read(dir.path().join(format!("runa{suffix}"))).unwrap();
        let bytes_b = std::fs::read(dir.path().join(format!("runb{suffix}"))).unwrap();
        assert_eq!(bytes_a, bytes_b, "{suffix} differs between identical runs");
    }

    // The aggregate table carries exactly the requested kinds.
    let content = std::fs::read_to_string(dir.path().join("runa_aggregate.csv")).unwrap();
    assert!(content.contains("pearson"));
    assert!(content.contains("anscombe"));
    assert!(!content.contains("deviance"));
    assert!(!content.contains("unstandardized"));
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "a.csv", 200, 21);
    synth(dir.path(), "b.csv", 200, 21);
    synth(dir.path(), "c.csv", 200, 22);
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    let c = std::fs::read(dir.path().join("c.csv")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
