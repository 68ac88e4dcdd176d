use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn betaforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_betaforge"))
        .args(args)
        .env_remove("BETAFORGE_THREADS")
        .output()
        .unwrap()
}

fn json(args: &[&str]) -> Value {
    let out = betaforge(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    betaforge(args).status.code().unwrap()
}

#[test]
fn estimate_recovers_two_four() {
    let doc = json(&[
        "estimate",
        "--min",
        "0",
        "--max",
        "1",
        "--mean",
        "0.3333333",
        "--median",
        "0.3125",
    ]);
    assert_eq!(doc["command"], "estimate");
    assert_eq!(doc["config"]["median"], 0.3125);
    assert!((doc["result"]["alpha"].as_f64().unwrap() - 2.0).abs() < 1e-4);
    assert!((doc["result"]["beta"].as_f64().unwrap() - 4.0).abs() < 1e-4);
}

#[test]
fn signtest_and_planner() {
    let z = json(&["signtest", "--better", "4488", "--worse", "2773"])["result"]["z"]
        .as_f64()
        .unwrap();
    assert!((z - 20.1147).abs() < 1e-4);
    let plan = json(&["plan-zv", "--target", "0.25", "--m", "6", "--n", "6"]);
    assert_eq!(plan["result"]["plan"]["n_zv"], 18);
    let plan = json(&["plan-zv", "--target", "0.29", "--m", "6", "--n", "6"]);
    assert_eq!(plan["result"]["plan"]["n_zv"], 15);
}

#[test]
fn selection_worked_case() {
    let doc = json(&[
        "selection",
        "--scores",
        "3,2,1",
        "--m",
        "2",
        "--trials",
        "1000",
    ]);
    let exact: Vec<f64> =
        serde_json::from_value(doc["result"]["selection"]["exact"].clone()).unwrap();
    for (p, want) in exact.iter().zip([0.45, 0.355_555_555_6, 0.194_444_444_4]) {
        assert!((p - want).abs() < 1e-9);
    }
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["train-pair", "--help"]), 0);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(
        code(&["estimate", "--min", "1", "--max", "1", "--mean", "1", "--median", "1"]),
        1
    );
    assert_eq!(
        code(&["signtest", "--better", "1", "--worse", "1", "--bogus"]),
        1
    );
    assert_eq!(
        code(&["plan-zv", "--target", "2", "--m", "6", "--n", "6"]),
        1
    );
    assert_eq!(code(&["ingest", "--input", "/nonexistent/events.csv"]), 2);
    let err = betaforge(&["ingest", "--input", "/nonexistent/events.csv"]);
    assert!(String::from_utf8_lossy(&err.stderr).contains("/nonexistent/events.csv"));
}

#[test]
fn help_documents_flags() {
    let out = betaforge(&["train-pair", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--source",
        "--n-zv",
        "--trees",
        "--max-features",
        "--seed",
        "--threads",
        "--output",
    ] {
        assert!(text.contains(flag), "{flag}");
    }
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn reports_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let path = dir.path().join(name);
        let p = path.to_str().unwrap();
        let args = [
            "train-pair",
            "--n-features",
            "4",
            "--trees",
            "10",
            "--max-features",
            "3",
            "--n-zv",
            "6",
            "--threads",
            threads,
            "--output",
            p,
        ];
        assert_eq!(code(&args), 0);
        read(&path)
    };
    let one = run("one.json", "1");
    assert_eq!(one, run("four.json", "4"));
    assert_eq!(one, run("again.json", "1"));
}

#[test]
fn synthetic_events_flow() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("synth.toml");
    std::fs::write(
        &config,
        r#"
seed = 3
noise = 0.01

[[artist]]
label = "north"
events = 25
support_min = [30.0, 60.0]
support_span = [80.0, 160.0]
shape = { kind = "mean_concentration", mean_ratio = [0.25, 0.35], concentration = [2.0, 3.0] }

[[artist]]
label = "south"
events = 25
support_min = [30.0, 60.0]
support_span = [80.0, 160.0]
shape = { kind = "mean_concentration", mean_ratio = [0.25, 0.35], concentration = [8.0, 12.0] }
"#,
    )
    .unwrap();
    let events = dir.path().join("events.csv");
    let ev = events.to_str().unwrap();
    json(&[
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--events",
        ev,
    ]);
    assert!(events.exists());
    json(&["ingest", "--input", ev]);

    let features = dir.path().join("features.csv");
    json(&[
        "features",
        "--input",
        ev,
        "--artists",
        "north,south",
        "--csv",
        features.to_str().unwrap(),
    ]);
    let mut reader = csv::Reader::from_path(&features).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert!(header.iter().any(|h| h == "alpha") && header.iter().any(|h| h == "beta"));
    assert_eq!(reader.records().count(), 50);

    let kde = dir.path().join("kde.csv");
    json(&[
        "kde",
        "--input",
        ev,
        "--artists",
        "north,south",
        "--grid-size",
        "128",
        "--csv",
        kde.to_str().unwrap(),
    ]);
    let mut reader = csv::Reader::from_path(&kde).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["feature", "hellinger", "js", "kl_fwd", "kl_rev", "tv"]
    );
    assert_eq!(reader.records().count(), 6);

    let report = json(&[
        "train-pair",
        "--source",
        "events",
        "--input",
        ev,
        "--pair",
        "north,south",
        "--trees",
        "20",
        "--max-features",
        "2",
    ]);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["outcomes"].as_array().unwrap().len(), 1);
    assert_eq!(
        report["diagnostics"][1]["feature_names"]
            .as_array()
            .unwrap()
            .len(),
        6
    );
}
