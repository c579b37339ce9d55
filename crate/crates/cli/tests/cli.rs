use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn batlife(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_batlife"))
        .current_dir(dir)
        .env_remove("BATLIFE_OUT")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = batlife(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn simulated() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--cells",
            "2",
            "--conditions",
            "2",
            "--out",
            "o",
        ],
    );
    dir
}

fn csv_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_then_evaluate_writes_the_feature_set_table() {
    let dir = simulated();
    let stdout = ok(
        dir.path(),
        &[
            "evaluate",
            "--experiment",
            "rul-table",
            "--stride",
            "25",
            "--out",
            "o",
        ],
    );
    assert!(stdout.contains("novel-pred"));
    let table = fs::read_to_string(dir.path().join("o/evaluate/table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "chemistry,condition,feature_set,samples,rmse,mape");
    // two conditions plus the pooled row, for each of four feature sets
    assert_eq!(rows.len(), 1 + 4 * 3);
    for set in ["ecm", "stats", "benchmark", "novel-pred"] {
        assert_eq!(
            rows.iter()
                .filter(|r| r.split(',').nth(2) == Some(set))
                .count(),
            3
        );
    }
}

#[test]
fn outputs_carry_the_version_header_and_are_deterministic() {
    let dir = simulated();
    let args = [
        "evaluate",
        "--experiment",
        "rul",
        "--stride",
        "25",
        "--out",
        "o",
    ];
    ok(dir.path(), &args);
    let eval = dir.path().join("o/evaluate");
    let first: Vec<String> = csv_files(&eval)
        .iter()
        .map(|p| fs::read_to_string(p).unwrap())
        .collect();
    assert!(!first.is_empty());
    for text in &first {
        assert!(text.starts_with("# batlife "), "{text}");
        assert!(text.lines().next().unwrap().contains("fingerprint="));
    }
    ok(dir.path(), &args);
    let second: Vec<String> = csv_files(&eval)
        .iter()
        .map(|p| fs::read_to_string(p).unwrap())
        .collect();
    assert_eq!(first, second);
}

#[test]
fn train_then_predict_matches_evaluate() {
    let dir = simulated();
    let common = [
        "--stride",
        "25",
        "--out",
        "o",
        "--feature-set",
        "novel-pred",
    ];
    ok(dir.path(), &[&["train-rul"][..], &common].concat());
    ok(
        dir.path(),
        &[&["predict-rul", "--cells", "test"][..], &common].concat(),
    );
    ok(
        dir.path(),
        &[&["evaluate", "--experiment", "rul"][..], &common].concat(),
    );
    let body = |p: &str| {
        fs::read_to_string(dir.path().join(p))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(String::from)
            .collect::<Vec<_>>()
    };
    assert_eq!(
        body("o/rul_predictions.csv"),
        body("o/evaluate/predictions.csv")
    );
}

#[test]
fn short_truncation_is_a_data_error() {
    let dir = simulated();
    let out = batlife(dir.path(), &["fit-ecm", "--truncate", "5", "--out", "o"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("InsufficientData"), "{err}");
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        batlife(dir.path(), &["evaluate", "--bogus"]).status.code(),
        Some(2)
    );
    assert_eq!(
        batlife(dir.path(), &["evaluate", "--stride", "x"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        batlife(dir.path(), &["classify", "--upper-threshold", "400"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = batlife(dir.path(), &["features", "--data", "nowhere"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = simulated();
    fs::write(
        dir.path().join("run.toml"),
        "out = \"o\"\nstride = 25\nfeature_set = \"stats\"\n",
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "evaluate",
            "--experiment",
            "rul",
            "--config",
            "run.toml",
            "--feature-set",
            "ecm",
        ],
    );
    let metrics = fs::read_to_string(dir.path().join("o/evaluate/metrics.csv")).unwrap();
    assert!(metrics.contains("\"stride\":25"));
    assert!(metrics.contains("\"feature_set\":\"ecm\""));
    assert!(metrics.lines().any(|l| l.starts_with("NCA,ALL,ecm,")));

    fs::write(dir.path().join("bad.toml"), "strid = 3\n").unwrap();
    let out = batlife(dir.path(), &["evaluate", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_states_units() {
    let dir = tempfile::tempdir().unwrap();
    let help = ok(dir.path(), &["evaluate", "--help"]);
    for unit in ["(cycles)", "(samples", "(cells)"] {
        assert!(help.contains(unit), "missing {unit}");
    }
    let sim = ok(dir.path(), &["simulate", "--help"]);
    assert!(sim.contains("(V)"));
}
