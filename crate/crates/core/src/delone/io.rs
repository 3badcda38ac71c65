use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{DeloneSet, Provenance, Window};
use crate::error::{Error, Result};

/// On-disk lattice record.
///
/// Sample metadata that is not part of the record proper (density, closed
/// directions, patch tolerance) rides along in `provenance.params.sample`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeFile {
    pub dimension: usize,
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub window: Vec<[f64; 2]>,
    pub points: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl From<&DeloneSet> for LatticeFile {
    fn from(set: &DeloneSet) -> Self {
        let mut provenance = set.provenance.clone();
        if !provenance.params.is_object() {
            provenance.params = json!({});
        }
        provenance.params["sample"] = json!({
            "density": set.density,
            "periods": set.periods,
            "tol_patch": set.tol_patch,
        });
        LatticeFile {
            dimension: set.dimension,
            r: set.r,
            big_r: set.big_r,
            window: set.window.bounds.clone(),
            points: set.points.clone(),
            provenance,
        }
    }
}

impl TryFrom<LatticeFile> for DeloneSet {
    type Error = Error;

    fn try_from(f: LatticeFile) -> Result<Self> {
        let d = f.dimension;
        if f.window.len() != d || f.points.iter().any(|p| p.len() != d) {
            return Err(Error::DimensionMismatch("lattice file entries disagree with `dimension`".into()));
        }
        let window = Window::new(f.window);
        let sample = f.provenance.params.get("sample").cloned().unwrap_or(serde_json::Value::Null);
        let density = sample
            .get("density")
            .and_then(|v| v.as_f64())
            .unwrap_or(f.points.len() as f64 / window.volume().max(f64::MIN_POSITIVE));
        let periods: Vec<Option<f64>> = sample
            .get("periods")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or_else(|| vec![None; d]);
        let tol_patch = sample.get("tol_patch").and_then(|v| v.as_f64()).unwrap_or(1e-9 * window.diameter());
        let mut provenance = f.provenance;
        if let Some(obj) = provenance.params.as_object_mut() {
            obj.remove("sample");
        }
        Ok(DeloneSet {
            dimension: d,
            points: f.points,
            r: f.r,
            big_r: f.big_r,
            window,
            provenance,
            periods,
            density,
            tol_patch,
        })
    }
}

pub fn write_lattice(set: &DeloneSet, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&LatticeFile::from(set))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_lattice(path: &Path) -> Result<DeloneSet> {
    let text = std::fs::read_to_string(path)?;
    let file: LatticeFile = serde_json::from_str(&text)?;
    file.try_into()
}

/// One point per row, columns `x0,x1,...`.
pub fn write_lattice_csv(set: &DeloneSet, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (0..set.dimension).map(|k| format!("x{k}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for p in &set.points {
        let row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{generate_cut_and_project, CutProjectScheme};
    use super::*;

    #[test]
    fn lattice_round_trip() {
        let s = generate_cut_and_project(CutProjectScheme::AmmannBeenker, &Window::centered(2, 6.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.json");
        write_lattice(&s, &path).unwrap();
        let back = read_lattice(&path).unwrap();
        assert_eq!(back.points, s.points);
        assert_eq!(back.r, s.r);
        assert_eq!(back.big_r, s.big_r);
        assert_eq!(back.density, s.density);
        assert_eq!(back.provenance, s.provenance);
        let text = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["dimension", "r", "R", "window", "points", "provenance"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}
