//! Config-driven pipelines: run tasks on one lattice and model, sweep a numeric
//! key, and turn reports into plot-ready tables.
//!
//! Randomness: every draw descends from the config seed. Stream `k` of a
//! ChaCha8 generator keyed by that seed yields the seed of consumer `k`
//! (0 lattice, 1 perturbation, 16 + i task i).

mod config;
mod export;
mod tasks;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::{ExperimentConfig, Knobs, LatticeSpec, ModelSpec, Source, Task, Tolerances};
pub use export::export_plotdata;
pub use tasks::{build_model, build_sample, model_symmetry, Sample, SummaryRow, TaskOutput};

use crate::delone::{write_lattice, write_lattice_csv};
use crate::{Error, Result};

/// Seed of consumer `stream` under the top-level `seed`.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// In-memory result of a run, written by a single writer afterwards.
#[derive(Clone, Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub rows: Vec<SummaryRow>,
    pub breaches: Vec<String>,
    pub runtimes: Vec<(String, f64)>,
    /// Task errors recorded instead of aborting the run.
    pub errors: Vec<serde_json::Value>,
}

impl Artifacts {
    pub fn ok(&self) -> bool {
        self.breaches.is_empty() && self.errors.is_empty()
    }

    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|f| f.0 == name).map(|f| f.1.as_slice())
    }

    /// Parsed JSON report of the task at `index`.
    pub fn report(&self, index: usize) -> Option<serde_json::Value> {
        let prefix = format!("{index:02}-");
        self.files
            .iter()
            .filter(|f| f.0.starts_with(&prefix) && f.0.ends_with(".json"))
            .filter_map(|f| serde_json::from_slice::<serde_json::Value>(&f.1).ok())
            .find(|v| v.get("index").and_then(|i| i.as_u64()) == Some(index as u64))
    }
}

fn selected<'a>(cfg: &'a ExperimentConfig, only: &[String]) -> Result<Vec<(usize, &'a Task)>> {
    for name in only {
        if !Task::NAMES.contains(&name.as_str()) {
            return Err(Error::Config { key: "--task".into(), message: format!("unknown task `{name}`") });
        }
    }
    Ok(cfg.tasks.iter().enumerate().filter(|(_, t)| only.is_empty() || only.iter().any(|n| n == t.name())).collect())
}

/// Runs the configured tasks in order. Numerical failures inside a task become
/// error records; configuration problems abort.
pub fn execute(cfg: &ExperimentConfig, only: &[String]) -> Result<Artifacts> {
    let tasks = selected(cfg, only)?;
    let mut ctx = tasks::Context::new(cfg)?;
    let mut art = Artifacts::default();
    for (index, task) in tasks {
        let start = Instant::now();
        let name = format!("{index:02}-{}", task.name());
        match tasks::run_task(&mut ctx, index, task) {
            Ok(out) => {
                art.files.push((format!("{name}.json"), serde_json::to_vec_pretty(&out.report)?));
                art.files.extend(out.files);
                art.rows.extend(out.rows);
                art.breaches.extend(out.breaches);
            }
            Err(e) if e.exit_code() == 1 => {
                let record = json!({ "task": task.name(), "index": index, "error": e.record() });
                art.files.push((format!("{name}.json"), serde_json::to_vec_pretty(&record)?));
                art.errors.push(record);
            }
            Err(e) => return Err(e),
        }
        art.runtimes.push((name, start.elapsed().as_secs_f64()));
    }
    Ok(art)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub timestamp_unix: u64,
    pub files: Vec<ManifestEntry>,
    pub runtimes: Vec<(String, f64)>,
    pub breaches: Vec<String>,
    pub errors: Vec<serde_json::Value>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?)
    }
}

/// Writes the config, every artifact, `summary.csv` and a manifest hashing them all.
pub fn write_artifacts(out: &Path, cfg: &ExperimentConfig, art: &Artifacts) -> Result<Manifest> {
    std::fs::create_dir_all(out)?;
    let config_json = cfg.to_json()?;
    let mut files: Vec<(String, Vec<u8>)> = vec![("config.json".into(), config_json.clone().into_bytes())];
    files.extend(art.files.iter().cloned());
    files.push(("summary.csv".into(), tasks::csv_bytes(&art.rows)?));
    let mut entries = Vec::with_capacity(files.len());
    for (name, bytes) in &files {
        std::fs::write(out.join(name), bytes)?;
        entries.push(ManifestEntry { path: name.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() });
    }
    let manifest = Manifest {
        name: cfg.name.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: sha256_hex(config_json.as_bytes()),
        seed: cfg.seed,
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        files: entries,
        runtimes: art.runtimes.clone(),
        breaches: art.breaches.clone(),
        errors: art.errors.clone(),
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn run(cfg: &ExperimentConfig, out: &Path, only: &[String]) -> Result<(Artifacts, Manifest)> {
    let art = execute(cfg, only)?;
    let manifest = write_artifacts(out, cfg, &art)?;
    Ok((art, manifest))
}

/// Writes the sample as `lattice.json` and `lattice.csv`.
pub fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let sample = build_sample(cfg)?;
    std::fs::create_dir_all(out)?;
    let json_path = out.join("lattice.json");
    let csv_path = out.join("lattice.csv");
    write_lattice(&sample.open, &json_path)?;
    write_lattice_csv(&sample.open, &csv_path)?;
    Ok(vec![json_path, csv_path])
}

/// One row of a sweep table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub task: String,
    pub quantity: String,
    pub raw: f64,
    pub rounded: Option<i64>,
    pub deviation: Option<f64>,
    pub oracle: Option<i64>,
    pub pass: bool,
    pub runtime_s: f64,
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub config: ExperimentConfig,
    pub artifacts: Artifacts,
}

/// Runs the pipeline for every value of the numeric key `axis`, in parallel.
pub fn sweep(cfg: &ExperimentConfig, axis: &str, values: &[f64], only: &[String]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Config { key: "values".into(), message: "empty value list".into() });
    }
    let configs: Vec<ExperimentConfig> = values.iter().map(|&v| cfg.with_value(axis, v)).collect::<Result<_>>()?;
    values
        .par_iter()
        .zip(configs.into_par_iter())
        .map(|(&value, config)| {
            let artifacts = execute(&config, only)?;
            Ok(SweepPoint { value, config, artifacts })
        })
        .collect()
}

pub fn sweep_rows(points: &[SweepPoint]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for p in points {
        let runtime = |task: &str| {
            p.artifacts.runtimes.iter().filter(|r| r.0.ends_with(&format!("-{task}"))).map(|r| r.1).sum::<f64>()
        };
        for r in &p.artifacts.rows {
            rows.push(SweepRow {
                value: p.value,
                task: r.task.clone(),
                quantity: r.quantity.clone(),
                raw: r.raw,
                rounded: r.rounded,
                deviation: r.deviation,
                oracle: r.oracle,
                pass: r.pass,
                runtime_s: runtime(&r.task),
            });
        }
        for e in &p.artifacts.errors {
            rows.push(SweepRow {
                value: p.value,
                task: e["task"].as_str().unwrap_or("").into(),
                quantity: format!("error:{}", e["error"]["kind"].as_str().unwrap_or("")),
                raw: f64::NAN,
                rounded: None,
                deviation: None,
                oracle: None,
                pass: false,
                runtime_s: 0.0,
            });
        }
    }
    rows
}

/// Writes each point under `point-<k>/` and the combined `sweep.csv`.
pub fn write_sweep(out: &Path, axis: &str, points: &[SweepPoint]) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    for (k, p) in points.iter().enumerate() {
        write_artifacts(&out.join(format!("point-{k:03}")), &p.config, &p.artifacts)?;
    }
    let path = out.join("sweep.csv");
    std::fs::write(&path, tasks::csv_bytes(&sweep_rows(points))?)?;
    std::fs::write(out.join("sweep.json"), serde_json::to_vec_pretty(&json!({ "axis": axis, "values": points.iter().map(|p| p.value).collect::<Vec<_>>() }))?)?;
    Ok(path)
}

#[cfg(test)]
mod tests;
