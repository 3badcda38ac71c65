//! Config-driven pipeline: run a bundled experiment, write hashed artifacts,
//! sweep the flux, and export plot tables.
//!
//! Usage: `cargo run --release --example config_pipeline [config.json]`

use std::path::PathBuf;

use delone_index::experiment::{export_plotdata, run, sweep, write_sweep, ExperimentConfig, Task};

fn main() -> delone_index::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/ssh-odd.json"));
    let cfg = ExperimentConfig::load(&path)?;
    let out = std::env::temp_dir().join("delone-pipeline").join(&cfg.name);
    let (art, manifest) = run(&cfg, &out, &[])?;
    for row in &art.rows {
        println!("{:>18} {:>24} raw {:+.5}  rounded {:?}  oracle {:?}  pass {}", row.task, row.quantity, row.raw, row.rounded, row.oracle, row.pass);
    }
    println!("{} files hashed in {}", manifest.files.len(), out.join("manifest.json").display());
    for f in export_plotdata(&out, &out.join("plots"))? {
        println!("plot table {}", f.display());
    }

    let mut small = ExperimentConfig::from_json(
        r#"{
            "name": "flux-sweep",
            "lattice": { "source": { "generator": "periodic", "dimension": 2 }, "window": [[0, 15], [0, 15]] },
            "model": { "kind": "nn_hofstadter" },
            "knobs": { "bulk_margin": 4 },
            "tasks": [ { "task": "spectrum" } ]
        }"#,
    )?;
    small.tasks.push(Task::Verify);
    let values = [0.0, 1.0 / 6.0, 0.25, 1.0 / 3.0];
    let points = sweep(&small, "model.flux", &values, &[])?;
    let table = write_sweep(&out.join("sweep"), "model.flux", &points)?;
    for p in &points {
        let gaps = p.artifacts.rows.iter().find(|r| r.quantity == "gaps").map_or(0.0, |r| r.raw);
        println!("flux {:.4}: {gaps} gaps", p.value);
    }
    println!("sweep table {}", table.display());
    Ok(())
}
