use super::*;

fn small_hofstadter() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{
            "name": "small",
            "seed": 3,
            "lattice": { "source": { "generator": "periodic", "dimension": 2 }, "window": [[0, 11], [0, 11]] },
            "model": { "kind": "nn_hofstadter", "flux": 0.25 },
            "knobs": { "bulk_margin": 3 },
            "tasks": [ { "task": "verify" }, { "task": "spectrum" }, { "task": "identities" } ]
        }"#,
    )
    .unwrap()
}

fn config_key(text: &str) -> String {
    match ExperimentConfig::from_json(text) {
        Err(Error::Config { key, .. }) => key,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn config_round_trips() {
    let cfg = small_hofstadter();
    let again = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.knobs.tolerances, Tolerances::default());
}

#[test]
fn malformed_configs_name_the_key() {
    let base = small_hofstadter().to_json().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&base).unwrap();
    v["seed"] = json!("three");
    assert_eq!(config_key(&v.to_string()), "seed");

    let mut v: serde_json::Value = serde_json::from_str(&base).unwrap();
    v["knobs"]["tolerances"] = json!({ "rounding": -1.0 });
    assert_eq!(config_key(&v.to_string()), "knobs.tolerances.rounding");

    let mut v: serde_json::Value = serde_json::from_str(&base).unwrap();
    v["tasks"][1] = json!({ "task": "astrology" });
    assert!(config_key(&v.to_string()).starts_with("tasks[1]"));

    let mut v: serde_json::Value = serde_json::from_str(&base).unwrap();
    v["knobs"]["bulk_margni"] = json!(2);
    assert_eq!(config_key(&v.to_string()), "knobs.bulk_margni");

    let mut v: serde_json::Value = serde_json::from_str(&base).unwrap();
    v["lattice"]["window"] = json!([[0, 11]]);
    assert_eq!(config_key(&v.to_string()), "lattice.window");

    let mut v: serde_json::Value = serde_json::from_str(&base).unwrap();
    v.as_object_mut().unwrap().remove("model");
    assert_eq!(config_key(&v.to_string()), "tasks[1]");

    let mut v: serde_json::Value = serde_json::from_str(&base).unwrap();
    v["tasks"] = json!([{ "task": "chern" }]);
    v["lattice"] = json!({ "source": { "generator": "cut_and_project", "scheme": "fibonacci" }, "window": [[-10, 10]] });
    v["model"] = json!({ "kind": "ssh", "v": 1, "w": 0.5 });
    assert_eq!(config_key(&v.to_string()), "tasks[0]");
    assert_eq!(config_key("{"), "<root>");
}

#[test]
fn sweep_axis_replaces_numbers_only() {
    let cfg = small_hofstadter();
    let moved = cfg.with_value("model.flux", 1.0 / 6.0).unwrap();
    assert_eq!(moved.model.as_ref().unwrap().flux(), 1.0 / 6.0);
    assert_eq!(moved.lattice, cfg.lattice);
    let wider = cfg.with_value("lattice.window.0.1", 15.0).unwrap();
    assert_eq!(wider.lattice.window.unwrap().bounds[0], [0.0, 15.0]);
    assert!(matches!(cfg.with_value("model.kind", 1.0), Err(Error::Config { .. })));
    assert!(matches!(cfg.with_value("model.nope", 1.0), Err(Error::Config { .. })));
    assert!(matches!(sweep(&cfg, "model.flux", &[], &[]), Err(Error::Config { .. })));
}

#[test]
fn stream_seeds_are_deterministic_and_distinct() {
    let a: Vec<u64> = (0..32).map(|k| stream_seed(7, k)).collect();
    let b: Vec<u64> = (0..32).map(|k| stream_seed(7, k)).collect();
    assert_eq!(a, b);
    let mut sorted = a.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), a.len());
    assert_ne!(stream_seed(7, 0), stream_seed(8, 0));
}

#[test]
fn runs_are_byte_identical_and_manifest_is_complete() {
    let cfg = small_hofstadter();
    let dir = tempfile::tempdir().unwrap();
    let (art, manifest) = run(&cfg, &dir.path().join("a"), &[]).unwrap();
    let (_, again) = run(&cfg, &dir.path().join("b"), &[]).unwrap();
    assert!(art.ok(), "{:?} {:?}", art.breaches, art.errors);
    assert_eq!(manifest.config_sha256, again.config_sha256);
    let listed: Vec<&str> = manifest.files.iter().map(|e| e.path.as_str()).collect();
    for name in ["config.json", "00-verify.json", "01-spectrum.json", "01-spectrum-spectrum.csv", "02-identities.json", "summary.csv"] {
        assert!(listed.contains(&name), "{name} missing from {listed:?}");
    }
    for (x, y) in manifest.files.iter().zip(&again.files) {
        assert_eq!(x.sha256, y.sha256, "{}", x.path);
        let bytes = std::fs::read(dir.path().join("a").join(&x.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), x.sha256);
    }
    let spectrum = art.report(1).unwrap();
    assert_eq!(spectrum["size"], 144);
    let identities = art.report(2).unwrap();
    assert!(identities["defects"]["covariance"].as_f64().unwrap() < 1e-10);
}

#[test]
fn task_filter_and_unknown_task() {
    let cfg = small_hofstadter();
    let art = execute(&cfg, &["verify".to_string()]).unwrap();
    assert_eq!(art.runtimes.len(), 1);
    assert!(matches!(execute(&cfg, &["astrology".to_string()]), Err(Error::Config { .. })));
}

#[test]
fn numerical_failures_become_error_records() {
    let mut cfg = small_hofstadter();
    cfg.tasks = vec![
        Task::ProductCheck {
            depth: 1,
            half_width: 50.0,
            eps: vec![0.1],
            trials: 1,
            seeds: 1,
            scan_depths: vec![],
            delta: 0.25,
            cylinder_level: 2,
        },
        Task::Verify,
    ];
    let art = execute(&cfg, &[]).unwrap();
    assert!(!art.ok());
    assert_eq!(art.errors.len(), 1);
    assert_eq!(art.errors[0]["error"]["kind"], "window_too_small");
    assert!(art.report(1).is_some());
}

#[test]
fn sweep_and_export_produce_tables() {
    let mut cfg = small_hofstadter();
    cfg.tasks = vec![Task::Spectrum];
    let points = sweep(&cfg, "model.flux", &[0.0, 0.25], &[]).unwrap();
    let rows = sweep_rows(&points);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].value, 0.0);
    let dir = tempfile::tempdir().unwrap();
    let csv = write_sweep(dir.path(), "model.flux", &points).unwrap();
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 3);
    let plots = export_plotdata(&dir.path().join("point-001"), &dir.path().join("plots")).unwrap();
    assert_eq!(plots.len(), 1);
    let text = std::fs::read_to_string(&plots[0]).unwrap();
    assert!(text.starts_with("index,eigenvalue\n"));
    assert_eq!(text.lines().count(), 145);
}
