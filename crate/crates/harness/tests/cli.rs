use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const REFERENCE: &str = include_str!("../../../scenarios/reference.toml");

fn ssbcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssbcs"))
        .args(args)
        .env_remove("SSBCS_CONFIG")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn validate_reports_violated_invariant() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.toml", &REFERENCE.replace("n0 = 4", "n0 = 3"));
    let o = ssbcs(&["validate", "--config", &bad]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("n0 > 3*f0"));

    let good = write(tmp.path(), "good.toml", REFERENCE);
    let o = ssbcs(&["validate", "--config", &good]);
    assert!(o.status.success());
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("c0 k0 g0         2 4 7"), "{out}");
}

#[test]
fn strict_mode_and_env_override() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = write(tmp.path(), "extra.toml", &REFERENCE.replace("[run]", "[run]\ncolour = \"red\""));
    assert!(ssbcs(&["validate", "--config", &extra]).status.success());
    let o = ssbcs(&["validate", "--strict", "--config", &extra]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.colour"));

    let bad = write(tmp.path(), "bad.toml", &REFERENCE.replace("n1 = 3", "n1 = 2"));
    let o = Command::new(env!("CARGO_BIN_EXE_ssbcs"))
        .arg("validate")
        .env("SSBCS_CONFIG", &bad)
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("n1 > 2*f1"));
}

#[test]
fn run_then_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out_s = out.to_str().unwrap();
    let o = ssbcs(&["run", "--seed", "7", "--strategy", "random_noise", "--out", out_s]);
    assert!(o.status.success());
    let rec: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rec["seed"], 7);
    assert!(rec["stabilization_window"].is_u64());

    let trace = out.join("trace-7.jsonl");
    let t = trace.to_str().unwrap();
    let o = ssbcs(&["replay", "--strategy", "random_noise", t]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));

    let mut text = fs::read_to_string(&trace).unwrap();
    text = text.replacen("\"t\":", "\"t\":1", 3);
    fs::write(&trace, text).unwrap();
    let o = ssbcs(&["replay", "--strategy", "random_noise", t]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("differ"));
}

#[test]
fn campaign_summary_and_records() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let o = ssbcs(&["campaign", "--seeds", "30", "--strategy", "max_skew", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("q1 bound"), "{text}");
    assert!(text.contains("stabilized              30/30"), "{text}");
    let runs = fs::read_to_string(out.join("runs.jsonl")).unwrap();
    assert_eq!(runs.lines().count(), 30);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["all_stabilized"], true);
}

#[test]
fn lemma1_subcommand_passes_on_defaults() {
    let o = ssbcs(&["lemma1", "--windows", "20000", "--format", "jsonl"]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["pass"], true);
}
