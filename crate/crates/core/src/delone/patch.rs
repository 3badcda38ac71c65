use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::{DeloneSet, SpatialIndex};
use crate::error::{Error, Result};

/// The pattern `(L - x) ∩ B(0; radius)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Patch {
    pub radius: f64,
    pub relative_points: Vec<Vec<f64>>,
    /// Coordinates rounded to the tolerance grid, sorted lexicographically and flattened.
    pub canonical_key: Vec<i64>,
}

impl PartialEq for Patch {
    fn eq(&self, other: &Self) -> bool {
        self.canonical_key == other.canonical_key
    }
}

impl Eq for Patch {}

impl Hash for Patch {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.canonical_key.hash(state);
    }
}

impl Patch {
    pub fn new(radius: f64, mut relative_points: Vec<Vec<f64>>, tol: f64) -> Self {
        let mut keyed: Vec<Vec<i64>> =
            relative_points.iter().map(|p| p.iter().map(|v| (v / tol).round() as i64).collect()).collect();
        let mut order: Vec<usize> = (0..keyed.len()).collect();
        order.sort_by(|&a, &b| keyed[a].cmp(&keyed[b]));
        relative_points = order.iter().map(|&i| relative_points[i].clone()).collect();
        keyed = order.iter().map(|&i| keyed[i].clone()).collect();
        Patch { radius, relative_points, canonical_key: keyed.concat() }
    }

    pub fn len(&self) -> usize {
        self.relative_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relative_points.is_empty()
    }

    /// Restriction to a smaller radius.
    pub fn restrict(&self, radius: f64, tol: f64) -> Patch {
        let pts = self
            .relative_points
            .iter()
            .filter(|p| super::norm(p) <= radius + tol)
            .cloned()
            .collect();
        Patch::new(radius, pts, tol)
    }
}

/// Reusable neighbour lookup for many patch extractions on one sample.
pub(crate) struct PatchExtractor<'a> {
    set: &'a DeloneSet,
    index: Option<SpatialIndex>,
}

impl<'a> PatchExtractor<'a> {
    pub(crate) fn new(set: &'a DeloneSet, radius: f64) -> Self {
        let index = if set.is_periodic_closed() { None } else { Some(set.index(radius.max(set.r).max(1e-6))) };
        PatchExtractor { set, index }
    }

    pub(crate) fn eligible(&self, i: usize, radius: f64) -> bool {
        let x = &self.set.points[i];
        self.set.window.bounds.iter().enumerate().all(|(k, b)| {
            self.set.periods[k].is_some() || (x[k] - radius >= b[0] && x[k] + radius <= b[1])
        })
    }

    pub(crate) fn patch(&self, i: usize, radius: f64) -> Patch {
        let set = self.set;
        let x = &set.points[i];
        let reach = radius + set.tol_patch;
        let candidates: Vec<usize> = match &self.index {
            Some(idx) => idx.within(&set.points, x, reach),
            None => (0..set.len()).collect(),
        };
        let rel: Vec<Vec<f64>> = candidates
            .into_iter()
            .filter_map(|j| {
                if j == i {
                    return Some(vec![0.0; set.dimension]);
                }
                let d = set.displacement(x, &set.points[j]);
                (super::norm(&d) <= reach).then_some(d)
            })
            .collect();
        Patch::new(radius, rel, set.tol_patch)
    }
}

/// Patch of `set` around the site `x`.
pub fn patch_at(set: &DeloneSet, x: &[f64], radius: f64) -> Result<Patch> {
    let i = set.index_of(x).ok_or_else(|| Error::NotASite(format!("{x:?}")))?;
    let ex = PatchExtractor::new(set, radius);
    if !ex.eligible(i, radius) {
        return Err(Error::InsufficientSample(format!("ball of radius {radius} around {x:?} exits the window")));
    }
    Ok(ex.patch(i, radius))
}

/// Sites whose radius-`radius` ball lies in the window.
pub fn eligible_centers(set: &DeloneSet, radius: f64) -> Vec<usize> {
    let ex = PatchExtractor::new(set, radius);
    (0..set.len()).filter(|&i| ex.eligible(i, radius)).collect()
}

/// Distinct patch classes with multiplicities, sorted by canonical key.
pub fn enumerate_patches(set: &DeloneSet, radius: f64) -> Vec<(Patch, usize)> {
    let ex = PatchExtractor::new(set, radius);
    let mut classes: HashMap<Vec<i64>, (Patch, usize)> = HashMap::new();
    for i in 0..set.len() {
        if ex.eligible(i, radius) {
            let p = ex.patch(i, radius);
            classes.entry(p.canonical_key.clone()).or_insert((p, 0)).1 += 1;
        }
    }
    let mut out: Vec<(Patch, usize)> = classes.into_values().collect();
    out.sort_by(|a, b| a.0.canonical_key.cmp(&b.0.canonical_key));
    out
}
