use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mcbrl(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcbrl"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, json: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

const SMALL: &str = r#"{
  "domains": ["chain"],
  "agents": ["umcbrl", "ucrl"],
  "grid": {"samples": [2], "delta": [0.05]},
  "runs_tuning": 2,
  "runs_eval": 8,
  "horizon": 400,
  "bootstrap_resamples": 500
}"#;

#[test]
fn missing_config_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mcbrl(&["eval"], &tmp.path().join("absent.json"), tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn invalid_config_and_unknown_names_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), r#"{"horizon": 0}"#);
    assert_eq!(mcbrl(&["tune"], &bad, tmp.path()).status.code(), Some(1));
    let good = write_config(tmp.path(), SMALL);
    let out = mcbrl(&["tune", "--agents", "umcbrl,nonesuch"], &good, tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let no_subcommand = Command::new(env!("CARGO_BIN_EXE_mcbrl")).output().unwrap();
    assert_eq!(no_subcommand.status.code(), Some(1));
}

#[test]
fn single_point_tune_reports_the_point() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = mcbrl(
        &["tune", "--agents", "umcbrl"],
        &cfg,
        &tmp.path().join("res"),
    );
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        "chain umcbrl: samples=2"
    );
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("res/chain/umcbrl/tuning.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["chosen"]["samples"], 2);
}

#[test]
fn eval_is_deterministic_in_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let summary = |name: &str, seed: &str| {
        let out = mcbrl(&["eval", "--seed", seed], &cfg, &tmp.path().join(name));
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        fs::read_to_string(tmp.path().join(name).join("chain/umcbrl/runs.csv")).unwrap()
    };
    let a = summary("a", "3");
    assert_eq!(a, summary("b", "3"));
    assert_ne!(a, summary("c", "4"));
}

#[test]
fn table_lists_every_pair_with_bolding() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let res = tmp.path().join("res");
    let out = mcbrl(&["table", "--domains", "chain,riverswim"], &cfg, &res);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut rdr = csv::Reader::from_path(res.join("table.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    let md = fs::read_to_string(res.join("table.md")).unwrap();
    assert!(md.contains("**"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("riverswim") && stdout.contains("umcbrl"));
}
