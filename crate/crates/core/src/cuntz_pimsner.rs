//! One-dimensional structure: site ordering, the degree cocycle, factorization
//! into elementary steps and the inner products of the step bimodule.

use serde::{Deserialize, Serialize};

use crate::delone::DeloneSet;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};

/// Relative slack on the upper step bound.
const STEP_SLACK: f64 = 1e-9;

/// Sites of a one-dimensional sample in increasing order, `positions[zero] == 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderedLattice {
    pub positions: Vec<f64>,
    /// Index in the base set of each ordered position.
    pub site_index: Vec<usize>,
    pub zero: usize,
    /// Open interval containing every gap.
    pub step_bounds: (f64, f64),
}

impl OrderedLattice {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `y_n` for integer `n`.
    pub fn y(&self, n: i64) -> Option<f64> {
        let k = self.zero as i64 + n;
        (0..self.len() as i64).contains(&k).then(|| self.positions[k as usize])
    }

    fn position_index(&self, x: f64) -> Option<usize> {
        let k = self.positions.partition_point(|&p| p < x - 1e-9);
        (k < self.len() && (self.positions[k] - x).abs() <= 1e-9).then_some(k)
    }

    pub fn contains_step(&self, s: f64) -> bool {
        s > self.step_bounds.0 && s < self.step_bounds.1
    }
}

/// Default step bounds `(r, 2R)`: every gap of a Delone set in `d = 1` lies in `[2r, 2R]`.
pub fn default_step_bounds(set: &DeloneSet) -> (f64, f64) {
    (set.r, 2.0 * set.big_r * (1.0 + STEP_SLACK))
}

pub fn order_lattice(set: &DeloneSet, bounds: Option<(f64, f64)>) -> Result<OrderedLattice> {
    if set.dimension != 1 {
        return Err(Error::DimensionMismatch("ordering needs d = 1".into()));
    }
    let bounds = bounds.unwrap_or_else(|| default_step_bounds(set));
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.sort_by(|&a, &b| set.points[a][0].total_cmp(&set.points[b][0]));
    let positions: Vec<f64> = idx.iter().map(|&i| set.points[i][0]).collect();
    let zero = positions
        .iter()
        .position(|p| p.abs() <= 1e-12)
        .ok_or_else(|| Error::NotASite("0 is not a site; translate the set first".into()))?;
    for (k, w) in positions.windows(2).enumerate() {
        let gap = w[1] - w[0];
        if !(gap > bounds.0 && gap < bounds.1) {
            return Err(Error::InvalidParameter(format!(
                "gap {gap} between y_{} = {} and y_{} = {} outside ({}, {})",
                k as i64 - zero as i64,
                w[0],
                k as i64 + 1 - zero as i64,
                w[1],
                bounds.0,
                bounds.1
            )));
        }
    }
    Ok(OrderedLattice { positions, site_index: idx, zero, step_bounds: bounds })
}

/// The integer `n` with `x = y_n`.
pub fn degree(ol: &OrderedLattice, x: f64) -> Result<i64> {
    let k = ol.position_index(x).ok_or_else(|| Error::NotASite(format!("{x}")))?;
    Ok(k as i64 - ol.zero as i64)
}

/// Degree of the groupoid element `(set - a, b - a)`, counted from the
/// translated configuration rather than from indices.
pub fn element_degree(ol: &OrderedLattice, a: f64, b: f64) -> Result<i64> {
    ol.position_index(a).ok_or_else(|| Error::NotASite(format!("{a}")))?;
    ol.position_index(b).ok_or_else(|| Error::NotASite(format!("{b}")))?;
    let x = b - a;
    let between = ol
        .positions
        .iter()
        .map(|p| p - a)
        .filter(|&t| if x >= 0.0 { t > 1e-9 && t <= x + 1e-9 } else { t < -1e-9 && t >= x - 1e-9 })
        .count() as i64;
    Ok(if x >= 0.0 { between } else { -between })
}

/// Checks `deg(a -> b) + deg(b -> c) == deg(a -> c)` on all triples of the sample.
/// Returns the number of checked pairs.
pub fn check_degree_additivity(ol: &OrderedLattice) -> Result<usize> {
    let n = ol.len();
    for a in 0..n {
        for b in 0..n {
            let counted = element_degree(ol, ol.positions[a], ol.positions[b])?;
            if counted != b as i64 - a as i64 {
                return Err(Error::Inconclusive(format!("degree of ({a} -> {b}) is {counted}")));
            }
        }
    }
    let mut checked = 0;
    for a in 0..n {
        for b in 0..n {
            let ab = element_degree_fast(ol, a, b);
            for cc in 0..n {
                if ab + element_degree_fast(ol, b, cc) != element_degree_fast(ol, a, cc) {
                    return Err(Error::Inconclusive(format!("degree not additive on ({a}, {b}, {cc})")));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

/// Signed count of sites in `(x_a, x_b]` by binary search on the positions.
fn element_degree_fast(ol: &OrderedLattice, a: usize, b: usize) -> i64 {
    let (xa, xb) = (ol.positions[a], ol.positions[b]);
    let upto = |x: f64| ol.positions.partition_point(|&p| p <= x + 1e-9) as i64;
    if xb >= xa {
        upto(xb) - upto(xa)
    } else {
        -(upto(xa) - upto(xb))
    }
}

/// Elementary steps from `from` to `to`, each in `(r, R)` or its mirror.
pub fn factorize_between(ol: &OrderedLattice, from: f64, to: f64) -> Result<Vec<f64>> {
    let i = ol.position_index(from).ok_or_else(|| Error::NotASite(format!("{from}")))?;
    let j = ol.position_index(to).ok_or_else(|| Error::NotASite(format!("{to}")))?;
    let steps: Vec<f64> = if j >= i {
        (i..j).map(|k| ol.positions[k + 1] - ol.positions[k]).collect()
    } else {
        (j..i).rev().map(|k| ol.positions[k] - ol.positions[k + 1]).collect()
    };
    Ok(steps)
}

/// Steps `y_j - y_{j-1}` from the origin to `x`.
pub fn factorize(ol: &OrderedLattice, x: f64) -> Result<Vec<f64>> {
    factorize_between(ol, 0.0, x)
}

/// Number of step sequences from `from` to `to` through sites of the sample with
/// every step inside the step bounds (mirrored for negative targets).
pub fn count_factorizations(ol: &OrderedLattice, from: f64, to: f64, limit: usize) -> Result<usize> {
    let i = ol.position_index(from).ok_or_else(|| Error::NotASite(format!("{from}")))?;
    let j = ol.position_index(to).ok_or_else(|| Error::NotASite(format!("{to}")))?;
    if i == j {
        return Ok(1);
    }
    let sign = if j > i { 1.0 } else { -1.0 };
    // paths[k] = number of admissible walks from i reaching position k, scanned monotonically.
    let order: Vec<usize> = if j > i { (i..=j).collect() } else { (j..=i).rev().collect() };
    let mut paths = vec![0usize; ol.len()];
    paths[i] = 1;
    for (a_pos, &a) in order.iter().enumerate() {
        if paths[a] == 0 {
            continue;
        }
        for &b in &order[a_pos + 1..] {
            let step = sign * (ol.positions[b] - ol.positions[a]);
            if step >= ol.step_bounds.1 {
                break;
            }
            if ol.contains_step(step) {
                paths[b] = (paths[b] + paths[a]).min(limit);
            }
        }
    }
    Ok(paths[j])
}

/// Element of `C_c(c^{-1}(r, R))` as a matrix on the sample: entry `(a, b)` is
/// `f(set - y_a, y_b - y_a)` in ordered indices.
#[derive(Clone, Debug)]
pub struct StepKernel {
    pub matrix: CMat,
}

/// Tabulates `f(a, x)` (ordered index, displacement) on all pairs within `reach`;
/// nonzero values off the step interval are a support violation.
pub fn step_kernel(ol: &OrderedLattice, f: &dyn Fn(usize, f64) -> C64, reach: f64) -> Result<StepKernel> {
    let n = ol.len();
    let mut m = linalg::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let x = ol.positions[b] - ol.positions[a];
            if x.abs() > reach {
                continue;
            }
            let v = f(a, x);
            if v == c(0.0, 0.0) {
                continue;
            }
            if !ol.contains_step(x) {
                return Err(Error::InvalidParameter(format!("kernel is nonzero at displacement {x} outside the step interval")));
            }
            m[(a, b)] = v;
        }
    }
    Ok(StepKernel { matrix: m })
}

/// `(f1 | f2)(set - y_a) = (f1^* f2)(a, a)`.
pub fn right_inner(f1: &StepKernel, f2: &StepKernel) -> Vec<C64> {
    let p = f1.matrix.adjoint() * &f2.matrix;
    (0..p.nrows()).map(|a| p[(a, a)]).collect()
}

/// `_(f1 | f2)(set - y_a) = (f1 f2^*)(a, a)`.
pub fn left_inner(f1: &StepKernel, f2: &StepKernel) -> Vec<C64> {
    let p = &f1.matrix * f2.matrix.adjoint();
    (0..p.nrows()).map(|a| p[(a, a)]).collect()
}

/// `(g . f)(a, b) = g(a) f(a, b)`.
pub fn act_left(g: &[C64], f: &StepKernel) -> StepKernel {
    StepKernel { matrix: faer::Mat::from_fn(f.matrix.nrows(), f.matrix.ncols(), |a, b| g[a] * f.matrix[(a, b)]) }
}

/// `(f . g)(a, b) = f(a, b) g(b)`.
pub fn act_right(f: &StepKernel, g: &[C64]) -> StepKernel {
    StepKernel { matrix: faer::Mat::from_fn(f.matrix.nrows(), f.matrix.ncols(), |a, b| f.matrix[(a, b)] * g[b]) }
}

/// `max |(_(f1|f2) . f3 - f1 . (f2|f3))|` over the sample.
pub fn imprimitivity_defect(f1: &StepKernel, f2: &StepKernel, f3: &StepKernel) -> f64 {
    let lhs = act_left(&left_inner(f1, f2), f3);
    let rhs = act_right(f1, &right_inner(f2, f3));
    linalg::max_abs(&(&lhs.matrix - &rhs.matrix))
}

/// Factorization trace for export.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactorizationTrace {
    pub target: f64,
    pub degree: i64,
    pub steps: Vec<f64>,
    pub alternatives: usize,
}

pub fn factorization_trace(ol: &OrderedLattice, x: f64) -> Result<FactorizationTrace> {
    Ok(FactorizationTrace {
        target: x,
        degree: degree(ol, x)?,
        steps: factorize(ol, x)?,
        alternatives: count_factorizations(ol, 0.0, x, 1 << 20)?,
    })
}
