//! The binary end to end: subcommands, artifacts and exit codes.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{
    "name": "small",
    "seed": 5,
    "lattice": { "source": { "generator": "periodic", "dimension": 2 }, "window": [[0, 11], [0, 11]] },
    "model": { "kind": "nn_hofstadter", "flux": 0.25 },
    "knobs": { "bulk_margin": 3 },
    "tasks": [ { "task": "verify" }, { "task": "spectrum" } ]
}"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delone-index")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap_or("")).unwrap_or_else(|_| panic!("no JSON record in {text}"))
}

#[test]
fn run_writes_manifest_and_export_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.json", SMALL);
    let out = dir.path().join("run");
    let o = cli(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 5);

    let o = cli(&["export", "--reports", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let table = std::fs::read_to_string(out.join("plots").join("01-spectrum-spectrum.csv")).unwrap();
    assert_eq!(table.lines().count(), 145);
}

#[test]
fn seed_override_and_task_filter() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.json", SMALL);
    let out = dir.path().join("run");
    let o = cli(&["run", "--config", &config, "--out", out.to_str().unwrap(), "--seed", "9", "--task", "verify"]);
    assert_eq!(o.status.code(), Some(0));
    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["runtimes"].as_array().unwrap().len(), 1);
}

#[test]
fn gen_verify_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.json", SMALL);
    let out = dir.path().join("gen");
    assert_eq!(cli(&["gen", "--config", &config, "--out", out.to_str().unwrap()]).status.code(), Some(0));
    assert!(out.join("lattice.json").exists() && out.join("lattice.csv").exists());

    let o = cli(&["verify", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let verify: Value = serde_json::from_slice(&std::fs::read(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(verify["points"], 144);

    let sweep = dir.path().join("sweep");
    let o = cli(&["sweep", "--config", &config, "--out", sweep.to_str().unwrap(), "--axis", "model.flux", "--values", "0,0.25", "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(sweep.join("point-001").join("manifest.json").exists());
    assert!(std::fs::read_to_string(sweep.join("sweep.csv")).unwrap().starts_with("value,task,quantity"));
}

#[test]
fn malformed_configs_exit_2_with_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL.replace("\"bulk_margin\"", "\"bulk_margni\"");
    let config = write(dir.path(), "bad.json", &bad);
    let out = dir.path().join("bad");
    let o = cli(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let record = stderr_record(&o);
    assert_eq!(record["kind"], "config");
    assert_eq!(record["key"], "knobs.bulk_margni");
    let saved: Value = serde_json::from_slice(&std::fs::read(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(saved, record);

    assert_eq!(stderr_record(&cli(&["run"]))["key"], "--config");
    assert_eq!(cli(&["run", "--config", &config, "--task", "astrology"]).status.code(), Some(2));
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cli(&["sweep", "--config", &config, "--axis", "model.kind", "--values", "1"]).status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_1_with_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace(
        r#"{ "task": "spectrum" }"#,
        r#"{ "task": "product-check", "depth": 1, "half_width": 50, "eps": [0.1], "trials": 1, "seeds": 1 }"#,
    );
    let config = write(dir.path(), "fail.json", &text);
    let out = dir.path().join("fail");
    let o = cli(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["errors"][0]["error"]["kind"], "window_too_small");
}
