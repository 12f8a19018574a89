use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &[&str] =
    &["--epochs", "2", "--conv-filters", "2", "--conv-windows", "2", "--lstm-hidden", "2", "--n-passes", "5"];

fn run(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pulse-affect"));
    cmd.args(args).env_remove("PULSE_AFFECT_SEED");
    if let Some(s) = env_seed {
        cmd.env("PULSE_AFFECT_SEED", s);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small_dataset(dir: &Path, preset: &str) -> std::path::PathBuf {
    let data = dir.join(format!("{preset}.jsonl"));
    let out = run(
        &[
            "synth",
            "--out",
            p(&data),
            "--preset",
            preset,
            "--subjects",
            "3",
            "--samples-per-subject",
            "6",
            "--seed",
            "2",
        ],
        None,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    data
}

#[test]
fn evaluate_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), "default");
    let out_dir = dir.path().join("eval");
    let mut args = vec!["evaluate", "--dataset", p(&data), "--regime", "ppg_only", "--seed", "7", "--out", p(&out_dir)];
    args.extend_from_slice(TINY);
    let out = run(&args, None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let report = json(&out_dir.join("report_ppg_only_seed7.json"));
    assert_eq!(report["seed"], 7);
    assert_eq!(report["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(report["config"]["model"]["epochs"], 2);
    for name in ["f1_ppg_only_seed7.tsv", "coverage_ppg_only_seed7.tsv", "decisions_ppg_only_seed7.tsv"] {
        assert!(out_dir.join(name).is_file(), "{name}");
        assert_eq!(json(&out_dir.join(format!("{name}.run.json")))["config"]["seed"], 7);
    }
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("seed 7") && stderr.contains("resolved config"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = run(&["frobnicate"], None);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&run(&["evaluate", "--bogus"], None)), 1);
    assert_eq!(code(&run(&["--help"], None)), 0);
}

#[test]
fn train_on_empty_dataset_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out = run(&["train", "--dataset", p(&empty), "--out", p(&dir.path().join("m.bin"))], None);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn missing_input_and_bad_values() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    assert_eq!(code(&run(&["features", "--dataset", p(&missing), "--out", p(&dir.path().join("f.tsv"))], None)), 2);
    let data = small_dataset(dir.path(), "default");
    let bad_alpha = run(&["predict", "--model", "m", "--dataset", p(&data), "--out", "x", "--alpha-grid", "0.2"], None);
    assert_eq!(code(&bad_alpha), 1);
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 3\n").unwrap();
    let data = dir.path().join("d.jsonl");
    let sidecar = dir.path().join("d.jsonl.run.json");
    let seed_of = |args: &[&str], env: Option<&str>| {
        let mut all = vec!["synth", "--out", p(&data), "--subjects", "1", "--samples-per-subject", "3"];
        all.extend_from_slice(args);
        assert_eq!(code(&run(&all, env)), 0);
        json(&sidecar)["config"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&[], None), 0);
    assert_eq!(seed_of(&[], Some("5")), 5);
    assert_eq!(seed_of(&["--config", p(&cfg)], Some("5")), 3);
    assert_eq!(seed_of(&["--config", p(&cfg), "--seed", "9"], Some("5")), 9);

    fs::write(&cfg, "seed = \"three\"\n").unwrap();
    assert_eq!(code(&run(&["synth", "--out", p(&data), "--config", p(&cfg)], None)), 1);
    assert_eq!(code(&run(&["synth", "--out", p(&data)], Some("x"))), 1);
}

#[test]
fn verbose_prints_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let out = run(&["synth", "--out", p(&data), "--subjects", "1", "--samples-per-subject", "3", "--verbose"], None);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("\"alpha_grid\"") && stderr.contains("\"n_passes\": 1000"), "{stderr}");
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = small_dataset(d, "domain-shift");

    let traces = d.join("ecg.jsonl");
    let out = run(
        &[
            "synth",
            "--out",
            p(&d.join("x.jsonl")),
            "--preset",
            "domain-shift",
            "--subjects",
            "2",
            "--samples-per-subject",
            "2",
            "--ecg-traces",
            p(&traces),
        ],
        None,
    );
    assert_eq!(code(&out), 0);
    let ibi = d.join("ibi.jsonl");
    assert_eq!(code(&run(&["extract-ibi", "--ecg", p(&traces), "--out", p(&ibi)], None)), 0);
    assert_eq!(fs::read_to_string(&ibi).unwrap().lines().count(), 4);

    let features = d.join("features.tsv");
    assert_eq!(code(&run(&["features", "--dataset", p(&data), "--out", p(&features)], None)), 0);
    assert!(fs::read_to_string(&features).unwrap().starts_with("subject_id\tsource\thf_power"));
    assert!(d.join("features.tsv.run.json").is_file());

    let stats = d.join("stats");
    assert_eq!(code(&run(&["stats", "--dataset", p(&data), "--out", p(&stats), "--folds", "3"], None)), 0);
    assert_eq!(json(&stats.join("stats.json"))["report"]["features"].as_array().unwrap().len(), 11);

    let model = d.join("model.paff");
    let mut args = vec!["train", "--dataset", p(&data), "--out", p(&model), "--regime", "ppg_plus_ecg"];
    args.extend_from_slice(&TINY[..8]);
    let out = run(&args, None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&d.join("model.paff.train.json"))["epochs_completed"], 2);
    assert_eq!(json(&d.join("model.paff.run.json"))["config"]["regime"], "ppg_plus_ecg");

    let decisions = d.join("decisions.tsv");
    let out = run(
        &[
            "predict",
            "--model",
            p(&model),
            "--dataset",
            p(&data),
            "--out",
            p(&decisions),
            "--n-passes",
            "5",
            "--alpha-grid",
            "0.5,0.9",
        ],
        None,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&decisions).unwrap().lines().count(), 1 + 2 * 36);

    let eval_dir = d.join("eval");
    for regime in ["ppg_only", "ppg_plus_ecg"] {
        let mut args =
            vec!["evaluate", "--dataset", p(&data), "--out", p(&eval_dir), "--regime", regime, "--iterations", "2"];
        args.extend_from_slice(TINY);
        assert_eq!(code(&run(&args, None)), 0);
    }
    let curves = d.join("curves");
    let out = run(
        &[
            "curves",
            "--report",
            p(&eval_dir.join("report_ppg_plus_ecg_seed0.json")),
            "--report",
            p(&eval_dir.join("report_ppg_only_seed0.json")),
            "--out",
            p(&curves),
        ],
        None,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cmp = json(&curves.join("compare_ppg_plus_ecg_seed0_vs_ppg_only_seed0.json"));
    assert!((0.0..=1.0).contains(&cmp["mann_whitney_p"].as_f64().unwrap()));
    assert_eq!(cmp["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(json(&curves.join("f1_ppg_only_seed0.tsv.run.json"))["config"]["regime"], "ppg_only");
}
