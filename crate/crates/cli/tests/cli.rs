use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
name = "tiny"
seed = 5
output_dir = "out"

[input]
kind = "synthetic"
profile = "tropical"
start = 2024-01-01
end = 2024-02-20

[[preprocess.seasons]]
name = "feb"
start_date = 2024-02-01
end_date = 2024-02-20

[models.gbt.params]
n_estimators = 30
max_depth = 3

[[models.gbt.grid]]
name = "max_depth"
values = [2, 3]

[models.arima]
[models.svr]

[plots]
enabled = true
"#;

fn loadcast(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_loadcast"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn generate_writes_data_and_log() {
    let dir = setup();
    let out = loadcast(&["generate", "--config", "tiny.toml", "--out", "gen"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = dir.path().join("gen/data");
    let csv = std::fs::read_to_string(data.join("tiny.csv")).unwrap();
    assert!(csv.lines().count() > 1000);
    assert!(data.join("tiny.meta.toml").exists());
    let log: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("tiny.injections.json")).unwrap()).unwrap();
    assert!(log.get("outliers").is_some());
}

#[test]
fn run_writes_report_models_and_plots() {
    let dir = setup();
    let out = loadcast(&["run", "--config", "tiny.toml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("gbt"), "{stdout}");

    let root = dir.path().join("out");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("report.json")).unwrap()).unwrap();
    let names: Vec<&str> = report["scenarios"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["full", "feb"]);
    assert!(root.join("report.txt").exists());
    assert!(root.join("tuning/full/gbt.json").exists());
    assert!(std::fs::read_dir(root.join("models/full")).unwrap().count() >= 3);
    assert!(std::fs::read_dir(root.join("plots/full")).unwrap().count() > 0);
}

#[test]
fn staged_commands_match_run() {
    let dir = setup();
    for step in ["tune", "train", "evaluate"] {
        let out = loadcast(&[step, "--config", "tiny.toml", "--scenario", "full", "--out", "staged"], dir.path());
        assert!(out.status.success(), "{step}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = loadcast(&["run", "--config", "tiny.toml", "--scenario", "full", "--out", "once"], dir.path());
    assert!(out.status.success());

    let metrics = |sub: &str| {
        let text = std::fs::read_to_string(dir.path().join(sub).join("report.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["scenarios"][0]["models"].clone()
    };
    let (a, b) = (metrics("staged"), metrics("once"));
    for model in ["gbt", "arima", "svr"] {
        assert_eq!(a[model]["metrics"], b[model]["metrics"], "{model}");
    }
}

#[test]
fn evaluate_without_models_fails() {
    let dir = setup();
    let out = loadcast(&["evaluate", "--config", "tiny.toml", "--out", "empty"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("train"));
}

#[test]
fn bad_config_is_an_error() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.toml"), "name = 3\n").unwrap();
    let out = loadcast(&["run", "--config", "bad.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
