use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use delone_index::delone::verify_delone;
use delone_index::experiment::{self, ExperimentConfig, Task};
use delone_index::{Error, Result};

/// Config-driven experiments on Delone lattices.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps and parallel scans.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Restrict to these tasks (repeatable).
    #[arg(long, global = true)]
    task: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured lattice and write it as JSON and CSV.
    Gen,
    /// Certify the Delone constants and, with a model, the algebraic identities.
    Verify,
    /// Run the configured tasks.
    Run,
    /// Run the pipeline once per value of a numeric config key.
    Sweep {
        /// Dotted key, e.g. `model.flux` or `tasks.0.e_hint`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Turn the reports of a run directory into plot tables.
    Export {
        /// Run directory holding `manifest.json`.
        #[arg(long)]
        reports: PathBuf,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config { key: "--config".into(), message: "required".into() })?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, fallback: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

fn report(ok: bool, summary: serde_json::Value) -> Result<ExitCode> {
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let common = &cli.common;
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config { key: "--threads".into(), message: e.to_string() })?;
    }
    match &cli.command {
        Command::Gen => {
            let cfg = load(common)?;
            let files = experiment::generate(&cfg, &out_dir(common, "out"))?;
            report(true, json!({ "written": files }))
        }
        Command::Verify => {
            let mut cfg = load(common)?;
            let sample = experiment::build_sample(&cfg)?;
            let delone = verify_delone(&sample.open)?;
            let mut ok = delone.passed();
            let mut summary = json!({ "points": sample.open.len(), "r": sample.open.r, "R": sample.open.big_r, "delone": delone });
            if cfg.model.is_some() {
                cfg.tasks = vec![Task::Identities];
                let art = experiment::execute(&cfg, &[])?;
                ok &= art.ok();
                summary["identities"] = art.report(0).unwrap_or_default();
            }
            if let Some(out) = &common.out {
                std::fs::create_dir_all(out)?;
                std::fs::write(out.join("verify.json"), serde_json::to_vec_pretty(&summary)?)?;
            }
            report(ok, summary)
        }
        Command::Run => {
            let cfg = load(common)?;
            let out = out_dir(common, "out");
            let (art, manifest) = experiment::run(&cfg, &out, &common.task)?;
            report(
                art.ok(),
                json!({ "out": out, "files": manifest.files.len(), "rows": art.rows, "breaches": art.breaches, "errors": art.errors }),
            )
        }
        Command::Sweep { axis, values } => {
            let cfg = load(common)?;
            let out = out_dir(common, "out");
            let points = experiment::sweep(&cfg, axis, values, &common.task)?;
            let table = experiment::write_sweep(&out, axis, &points)?;
            let ok = points.iter().all(|p| p.artifacts.ok());
            report(ok, json!({ "table": table, "points": points.len() }))
        }
        Command::Export { reports } => {
            let out = common.out.clone().unwrap_or_else(|| reports.join("plots"));
            let files = experiment::export_plotdata(reports, &out)?;
            report(true, json!({ "written": files }))
        }
    }
}

fn write_error_record(out: Option<&Path>, record: &serde_json::Value) {
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), serde_json::to_vec_pretty(record).unwrap_or_default());
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let record = json!({ "kind": "config", "key": "<arguments>", "message": e.to_string(), "exit_code": 2 });
            eprintln!("{}", serde_json::to_string(&record).unwrap_or_default());
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            let record = e.record();
            eprintln!("{}", serde_json::to_string(&record).unwrap_or_default());
            write_error_record(cli.common.out.as_deref(), &record);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
