//! Finite samples of (r, R)-Delone sets, their patches and translates.

mod generators;
mod io;
mod patch;

pub use generators::{
    generate_amorphous, generate_cut_and_project, generate_periodic, perturb, CutProjectScheme,
};
pub use io::{read_lattice, write_lattice, write_lattice_csv, LatticeFile};
pub use patch::{eligible_centers, enumerate_patches, patch_at, Patch};
pub(crate) use patch::PatchExtractor;
pub(crate) use generators::covering_grid;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Window {
    pub bounds: Vec<[f64; 2]>,
}

impl Window {
    pub fn new(bounds: Vec<[f64; 2]>) -> Self {
        Window { bounds }
    }

    /// The cube `[-half, half]^d`.
    pub fn centered(d: usize, half: f64) -> Self {
        Window { bounds: vec![[-half, half]; d] }
    }

    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        Window { bounds: vec![[lo, hi]; d] }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.bounds.iter().zip(x).all(|(b, &v)| v >= b[0] && v <= b[1])
    }

    /// True when the closed ball `B(x; radius)` lies inside the box.
    pub fn contains_ball(&self, x: &[f64], radius: f64) -> bool {
        self.bounds.iter().zip(x).all(|(b, &v)| v - radius >= b[0] && v + radius <= b[1])
    }

    /// Box shrunk by `margin` on every side, `None` if nothing is left.
    pub fn eroded(&self, margin: f64) -> Option<Window> {
        let bounds: Vec<[f64; 2]> = self.bounds.iter().map(|b| [b[0] + margin, b[1] - margin]).collect();
        if bounds.iter().all(|b| b[0] <= b[1]) {
            Some(Window { bounds })
        } else {
            None
        }
    }

    pub fn expanded(&self, margin: f64) -> Window {
        Window { bounds: self.bounds.iter().map(|b| [b[0] - margin, b[1] + margin]).collect() }
    }

    pub fn shifted(&self, by: &[f64]) -> Window {
        Window { bounds: self.bounds.iter().zip(by).map(|(b, &a)| [b[0] + a, b[1] + a]).collect() }
    }

    pub fn extent(&self, k: usize) -> f64 {
        self.bounds[k][1] - self.bounds[k][0]
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|k| self.extent(k).powi(2)).sum::<f64>().sqrt()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.extent(k)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| 0.5 * (b[0] + b[1])).collect()
    }

    pub fn intersect(&self, other: &Window) -> Option<Window> {
        let bounds: Vec<[f64; 2]> = self
            .bounds
            .iter()
            .zip(&other.bounds)
            .map(|(a, b)| [a[0].max(b[0]), a[1].min(b[1])])
            .collect();
        if bounds.iter().all(|b| b[0] <= b[1]) {
            Some(Window { bounds })
        } else {
            None
        }
    }
}

/// Generator name, seed and parameters that produced a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    #[serde(default)]
    pub params: serde_json::Value,
}

/// A finite sample of a Delone set inside a box window.
///
/// `periods[k] = Some(L)` marks direction `k` as closed into a ring of length `L`;
/// displacements along it are then taken minimum-image.
#[derive(Clone, Debug)]
pub struct DeloneSet {
    pub dimension: usize,
    pub points: Vec<Vec<f64>>,
    pub r: f64,
    pub big_r: f64,
    pub window: Window,
    pub provenance: Provenance,
    pub periods: Vec<Option<f64>>,
    /// Points per unit volume of the underlying infinite set.
    pub density: f64,
    /// Patch comparison tolerance.
    pub tol_patch: f64,
}

impl DeloneSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_periodic_closed(&self) -> bool {
        self.periods.iter().any(|p| p.is_some())
    }

    /// `to - from`, minimum-image along closed directions.
    pub fn displacement(&self, from: &[f64], to: &[f64]) -> Vec<f64> {
        let mut d: Vec<f64> = to.iter().zip(from).map(|(a, b)| a - b).collect();
        for (k, p) in self.periods.iter().enumerate() {
            if let Some(l) = p {
                d[k] -= l * (d[k] / l).round();
            }
        }
        d
    }

    pub fn distance(&self, from: &[f64], to: &[f64]) -> f64 {
        norm(&self.displacement(from, to))
    }

    /// Index of the point within `tol` of `x`.
    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        let tol = self.tol_patch.max(1e-12);
        self.points.iter().position(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() <= tol))
    }

    /// Closes the listed directions into rings.
    ///
    /// Only periodic samples qualify; the period along `k` is the number of
    /// lattice columns times the spacing, so the ring is seamless.
    pub fn with_periodic_closure(mut self, dirs: &[usize]) -> Result<Self> {
        if self.provenance.generator != "periodic" {
            return Err(Error::InvalidParameter(
                "periodic closure requires a periodic generator".into(),
            ));
        }
        let spacing = self.provenance.params["spacing"].as_f64().unwrap_or(1.0);
        for &k in dirs {
            if k >= self.dimension {
                return Err(Error::DimensionMismatch(format!("direction {k} >= d={}", self.dimension)));
            }
            let mut coords: Vec<i64> =
                self.points.iter().map(|p| (p[k] / spacing).round() as i64).collect();
            coords.sort_unstable();
            coords.dedup();
            let n = coords.len();
            if n < 3 {
                return Err(Error::WindowTooSmall(format!("ring along {k} needs >= 3 columns")));
            }
            self.periods[k] = Some(n as f64 * spacing);
        }
        Ok(self)
    }

    /// Bucketed lookup structure with cell size `cell`.
    pub fn index(&self, cell: f64) -> SpatialIndex {
        SpatialIndex::new(&self.points, cell)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Uniform grid of buckets for radius queries.
pub struct SpatialIndex {
    cell: f64,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl SpatialIndex {
    pub fn new(points: &[Vec<f64>], cell: f64) -> Self {
        let mut idx = SpatialIndex { cell, buckets: HashMap::new() };
        for (i, p) in points.iter().enumerate() {
            idx.insert(i, p);
        }
        idx
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / self.cell).floor() as i64).collect()
    }

    pub fn insert(&mut self, i: usize, x: &[f64]) {
        let k = self.key(x);
        self.buckets.entry(k).or_default().push(i);
    }

    /// Indices of points with `|p - x| <= radius`.
    pub fn within(&self, points: &[Vec<f64>], x: &[f64], radius: f64) -> Vec<usize> {
        let lo: Vec<i64> = x.iter().map(|v| ((v - radius) / self.cell).floor() as i64).collect();
        let hi: Vec<i64> = x.iter().map(|v| ((v + radius) / self.cell).floor() as i64).collect();
        let mut out = Vec::new();
        let mut key = lo.clone();
        loop {
            if let Some(ids) = self.buckets.get(&key) {
                for &i in ids {
                    let d2: f64 = points[i].iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d2 <= radius * radius {
                        out.push(i);
                    }
                }
            }
            let mut k = 0;
            loop {
                if k == key.len() {
                    out.sort_unstable();
                    return out;
                }
                key[k] += 1;
                if key[k] <= hi[k] {
                    break;
                }
                key[k] = lo[k];
                k += 1;
            }
        }
    }

    /// Distance from `x` to the nearest point, searching out to `max_radius`.
    pub fn nearest_distance(&self, points: &[Vec<f64>], x: &[f64], max_radius: f64) -> Option<f64> {
        self.within(points, x, max_radius)
            .into_iter()
            .map(|i| norm(&points[i].iter().zip(x).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .min_by(|a, b| a.total_cmp(b))
    }
}

/// Result of checking the two Delone constants on a sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeloneReport {
    pub discrete_ok: bool,
    pub dense_ok: bool,
    pub min_pairwise: f64,
    /// Grid point farthest from the sample, with that distance.
    pub worst_gap_center: Option<Vec<f64>>,
    pub worst_gap_distance: f64,
    pub grid_points_checked: usize,
}

impl DeloneReport {
    pub fn passed(&self) -> bool {
        self.discrete_ok && self.dense_ok
    }
}

/// Smallest pairwise distance of a point cloud.
pub fn min_pairwise_distance(points: &[Vec<f64>], hint: f64) -> f64 {
    if points.len() < 2 {
        return f64::INFINITY;
    }
    let mut radius = hint.max(1e-9);
    loop {
        let idx = SpatialIndex::new(points, radius);
        let mut best = f64::INFINITY;
        for (i, p) in points.iter().enumerate() {
            for j in idx.within(points, p, radius) {
                if j != i {
                    let d = norm(&p.iter().zip(&points[j]).map(|(a, b)| a - b).collect::<Vec<_>>());
                    best = best.min(d);
                }
            }
        }
        if best.is_finite() {
            return best;
        }
        radius *= 2.0;
    }
}

/// Checks uniform discreteness exactly and relative density on a grid of pitch `r/2`.
pub fn verify_delone(set: &DeloneSet) -> Result<DeloneReport> {
    if set.is_empty() {
        return Err(Error::InvalidParameter("empty set".into()));
    }
    let min_pairwise = min_pairwise_distance(&set.points, 2.0 * set.r);
    let discrete_ok = min_pairwise >= 2.0 * set.r * (1.0 - 1e-12);

    let idx = set.index(set.big_r.max(set.r));
    let mut worst = 0.0f64;
    let mut worst_center = None;
    let mut dense_ok = true;
    let grid = covering_grid(&set.window, set.big_r, set.r / 2.0);
    let checked = grid.len();
    for g in grid {
        let d = idx
            .nearest_distance(&set.points, &g, set.big_r * (1.0 + 1e-9))
            .unwrap_or(f64::INFINITY);
        if !d.is_finite() {
            dense_ok = false;
        }
        let shown = if d.is_finite() { d } else { 2.0 * set.big_r };
        if shown > worst {
            worst = shown;
            worst_center = Some(g);
        }
    }
    Ok(DeloneReport {
        discrete_ok,
        dense_ok,
        min_pairwise,
        worst_gap_center: worst_center,
        worst_gap_distance: worst,
        grid_points_checked: checked,
    })
}

/// The sample seen from `a`: points `x - a`, window shifted by `-a`.
pub fn translate(set: &DeloneSet, a: &[f64]) -> Result<DeloneSet> {
    if a.len() != set.dimension {
        return Err(Error::DimensionMismatch(format!("vector of length {} in d={}", a.len(), set.dimension)));
    }
    let i = set.index_of(a).ok_or_else(|| Error::NotASite(format!("{a:?}")))?;
    let origin = set.points[i].clone();
    let neg: Vec<f64> = origin.iter().map(|v| -v).collect();
    let mut out = set.clone();
    out.points = set.points.iter().map(|p| p.iter().zip(&origin).map(|(x, o)| x - o).collect()).collect();
    out.points[i] = vec![0.0; set.dimension];
    out.window = set.window.shifted(&neg);
    Ok(out)
}
