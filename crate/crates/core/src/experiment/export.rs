use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use super::tasks::csv_bytes;
use super::Manifest;
use crate::Result;

#[derive(Serialize)]
struct Level {
    index: usize,
    eigenvalue: f64,
}

#[derive(Serialize)]
struct EdgeRow {
    position: f64,
    along: f64,
    localization: f64,
    energy: f64,
}

#[derive(Serialize)]
struct ScanRow {
    zeta: String,
    depth: u64,
    norm: f64,
}

#[derive(Serialize)]
struct ChernRow {
    fermi: f64,
    lower: f64,
    upper: f64,
    raw: f64,
    rounded: i64,
    oracle: i64,
}

#[derive(Serialize)]
struct LevelSize {
    level: usize,
    size: u64,
}

#[derive(Serialize)]
struct Eigen {
    eigenvalue: f64,
    multiplicity: u64,
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn edge_rows(modes: &Value) -> Vec<EdgeRow> {
    modes
        .as_array()
        .map(|m| {
            m.iter()
                .map(|e| EdgeRow { position: num(&e["depth"]), along: num(&e["along"]), localization: num(&e["score"]), energy: num(&e["energy"]) })
                .collect()
        })
        .unwrap_or_default()
}

/// Plot tables for one report, as `(suffix, csv)`.
fn tables(report: &Value) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let mut out = Vec::new();
    match report["task"].as_str().unwrap_or("") {
        "spectrum" => {
            let rows: Vec<Level> = report["eigenvalues"]
                .as_array()
                .map(|v| v.iter().enumerate().map(|(index, e)| Level { index, eigenvalue: num(e) }).collect())
                .unwrap_or_default();
            out.push(("spectrum", csv_bytes(&rows)?));
        }
        "chern" => {
            let rows: Vec<ChernRow> = report["gaps"]
                .as_array()
                .map(|g| {
                    g.iter()
                        .map(|e| ChernRow {
                            fermi: num(&e["gap"]["fermi"]),
                            lower: num(&e["gap"]["lower"]),
                            upper: num(&e["gap"]["upper"]),
                            raw: num(&e["chern"]["raw"][0]),
                            rounded: e["chern"]["rounded"].as_i64().unwrap_or(0),
                            oracle: e["fredholm"].as_i64().unwrap_or(0),
                        })
                        .collect()
                })
                .unwrap_or_default();
            out.push(("chern", csv_bytes(&rows)?));
        }
        "bulk-boundary" => out.push(("edge", csv_bytes(&edge_rows(&report["edge_modes"]["modes"]))?)),
        "bulk-boundary-odd" => out.push(("edge", csv_bytes(&edge_rows(&report["report"]["zero_modes"]["modes"]))?)),
        "product-check" => {
            let mut rows = Vec::new();
            for zeta in ["log", "exp"] {
                for r in report["scan"][zeta]["rows"].as_array().into_iter().flatten() {
                    rows.push(ScanRow { zeta: zeta.into(), depth: r["depth"].as_u64().unwrap_or(0), norm: num(&r["norm"]) });
                }
            }
            if !rows.is_empty() {
                out.push(("scan", csv_bytes(&rows)?));
            }
        }
        "tree" => {
            let sizes: Vec<LevelSize> = report["level_sizes"]
                .as_array()
                .map(|s| s.iter().enumerate().map(|(level, v)| LevelSize { level, size: v.as_u64().unwrap_or(0) }).collect())
                .unwrap_or_default();
            out.push(("levels", csv_bytes(&sizes)?));
            let pb: Vec<Eigen> = report["pb_spectrum"]
                .as_array()
                .map(|s| s.iter().map(|p| Eigen { eigenvalue: num(&p[0]), multiplicity: p[1].as_u64().unwrap_or(0) }).collect())
                .unwrap_or_default();
            out.push(("pb-spectrum", csv_bytes(&pb)?));
        }
        _ => {}
    }
    Ok(out)
}

/// Long-format plot tables for every report listed in the run manifest of `dir`.
///
/// Reports of other tasks, error records and side files are skipped.
pub fn export_plotdata(dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let manifest = Manifest::read(dir)?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for entry in manifest.files.iter().filter(|e| e.path.ends_with(".json") && e.path != "config.json") {
        let Ok(text) = std::fs::read(dir.join(&entry.path)) else { continue };
        let Ok(report) = serde_json::from_slice::<Value>(&text) else { continue };
        if report.get("task").is_none() || report.get("error").is_some() {
            continue;
        }
        let stem = entry.path.trim_end_matches(".json");
        for (suffix, bytes) in tables(&report)? {
            let path = out.join(format!("{stem}-{suffix}.csv"));
            std::fs::write(&path, bytes)?;
            written.push(path);
        }
    }
    Ok(written)
}
