use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[z_grid]
start = 0.01
stop = 20.0
points = 8
spacing = "geometric"

[f_grid]
start = 1e9
stop = 4e9
points = 31
spacing = "linear"

[models.forest]
n_trees = 5
"#;

fn oilsense(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("tiny.toml");
    if !config.exists() {
        std::fs::write(&config, TINY).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_oilsense"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn oil_subset_gives_two_classes() {
    let dir = tempfile::tempdir().unwrap();
    let o = oilsense(dir.path(), &["--oils", "olive,coconut", "reproduce"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("out/reports/forest.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["labels"], serde_json::json!(["coconut", "olive"]));
    assert_eq!(report["confusion"]["counts"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("out/summary.md").exists());
    assert!(dir.path().join("out/roc.svg").exists());
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), "seeed = 3\n").unwrap();
    let o = oilsense(dir.path(), &["generate"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("seeed"));
}

#[test]
fn model_filter_trains_one_model() {
    let dir = tempfile::tempdir().unwrap();
    assert!(oilsense(dir.path(), &["generate"]).status.success());
    let o = oilsense(dir.path(), &["--models", "forest", "train"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let models: Vec<_> = std::fs::read_dir(dir.path().join("out/models")).unwrap().collect();
    assert_eq!(models.len(), 1);
    assert!(dir.path().join("out/models/forest.model").exists());
}

#[test]
fn evaluate_without_split_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = oilsense(dir.path(), &["evaluate"]);
    assert_eq!(o.status.code(), Some(6));
    assert!(stderr(&o).contains("no test split found"));
}

#[test]
fn regenerating_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    assert!(oilsense(dir.path(), &["generate"]).status.success());
    let first = std::fs::read(dir.path().join("out/dataset.csv")).unwrap();
    assert!(oilsense(dir.path(), &["generate"]).status.success());
    assert_eq!(std::fs::read(dir.path().join("out/dataset.csv")).unwrap(), first);
    // a different seed changes the noise
    assert!(oilsense(dir.path(), &["--seed", "43", "generate"]).status.success());
    assert_ne!(std::fs::read(dir.path().join("out/dataset.csv")).unwrap(), first);
}

#[test]
fn stale_artifacts_need_force() {
    let dir = tempfile::tempdir().unwrap();
    assert!(oilsense(dir.path(), &["--models", "knn", "reproduce"]).status.success());
    let o = oilsense(dir.path(), &["--models", "knn", "--seed", "7", "evaluate"]);
    assert_eq!(o.status.code(), Some(7), "{}", stderr(&o));
    let o = oilsense(dir.path(), &["--models", "knn", "--seed", "7", "--force", "evaluate"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn bad_usage_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(oilsense(dir.path(), &["--models", "perceptron", "train"]).status.code(), Some(2));
    assert_eq!(oilsense(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn config_prints_toml_that_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let o = oilsense(dir.path(), &["--seed", "11", "config"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = oilsense_cli::RunConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.seed, 11);
    assert_eq!(cfg.z_grid.points, 8);
}
