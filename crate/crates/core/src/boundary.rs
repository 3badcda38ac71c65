//! Half-space compressions, boundary unitaries and the bulk-boundary check.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groupoid::{derivation, OperatorSample};
use crate::hamiltonians::{
    diagonalize, fermi_unitary, find_gaps, default_gap_floor, projection_below, select_gap,
    smooth_gap_function, Gap, SymmetryOperator,
};
use crate::invariants::{chern_even, odd_constant, winding_odd, InvariantReport};
use crate::linalg::{self, c, C64};

/// Odd pairing of the shift on `Z` divided by its Fredholm index.
pub const ODD_DICTIONARY: f64 = -2.0;

/// Compression of an operator to `{x : <x, normal> >= cut}`.
#[derive(Clone, Debug)]
pub struct HalfSpaceModel {
    pub normal: Vec<f64>,
    pub cut: f64,
    pub eps: f64,
    /// Parent indices of the retained sites.
    pub retained: Vec<usize>,
    /// Compressed operator on the retained sites.
    pub compressed: OperatorSample,
    pub slab_width: f64,
}

impl HalfSpaceModel {
    pub fn depth(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.normal).map(|(a, b)| a * b).sum::<f64>() - self.cut
    }
}

/// `chi_+` smoothing: 0 below `cut - eps`, 1 from `cut` on.
fn chi_plus(t: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        return if t >= 0.0 { 1.0 } else { 0.0 };
    }
    let s = ((t + eps) / eps).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Half-space along the axis `dir`.
pub fn half_space(h: &OperatorSample, dir: usize, cut: f64, eps: f64) -> Result<HalfSpaceModel> {
    let mut normal = vec![0.0; h.dimension()];
    normal[dir] = 1.0;
    half_space_oblique(h, &normal, cut, eps)
}

/// Half-space `{<x, normal> >= cut}` for a unit `normal`.
pub fn half_space_oblique(h: &OperatorSample, normal: &[f64], cut: f64, eps: f64) -> Result<HalfSpaceModel> {
    let len = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (len - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("normal must be a unit vector".into()));
    }
    if eps < 0.0 {
        return Err(Error::InvalidParameter("eps must be >= 0".into()));
    }
    let depth: Vec<f64> = h.sites.iter().map(|x| x.iter().zip(normal).map(|(a, b)| a * b).sum::<f64>() - cut).collect();
    if let Some(i) = depth.iter().position(|t| t.abs() < 1e-9) {
        return Err(Error::InvalidParameter(format!("cut passes through site {:?}", h.sites[i])));
    }
    let weights: Vec<f64> = depth.iter().map(|&t| chi_plus(t, eps)).collect();
    let retained: Vec<usize> = (0..h.n_sites()).filter(|&i| weights[i] > 0.0).collect();
    if retained.is_empty() {
        return Err(Error::InvalidParameter("half-space retains no site".into()));
    }
    let q = h.q;
    let rows: Vec<usize> = retained.iter().flat_map(|&i| (0..q).map(move |a| i * q + a)).collect();
    let m = Mat::from_fn(rows.len(), rows.len(), |r, col| {
        let (i, j) = (rows[r] / q, rows[col] / q);
        h.matrix[(rows[r], rows[col])] * (weights[i] * weights[j])
    });
    let mut window = h.window.clone();
    if let Some(k) = normal.iter().position(|&v| (v.abs() - 1.0).abs() < 1e-12) {
        let lo = if normal[k] > 0.0 { cut - eps } else { window.bounds[k][0] };
        let hi = if normal[k] > 0.0 { window.bounds[k][1] } else { -(cut - eps) };
        window.bounds[k] = [lo.max(window.bounds[k][0]), hi.min(window.bounds[k][1])];
    }
    let compressed = OperatorSample {
        sites: retained.iter().map(|&i| h.sites[i].clone()).collect(),
        matrix: m,
        window,
        bulk_margin: h.bulk_margin,
        q,
        range: h.range,
        periods: h.periods.clone(),
        density: h.density,
        boundary_affected: retained.iter().map(|&i| h.boundary_affected[i]).collect(),
    };
    Ok(HalfSpaceModel {
        normal: normal.to_vec(),
        cut,
        eps,
        retained,
        compressed,
        slab_width: 2.0 * h.range.max(1.0),
    })
}

/// `exp(2 pi i f(h_hat))` with its decay profile away from the cut.
#[derive(Clone, Debug)]
pub struct BoundaryUnitary {
    pub unitary: OperatorSample,
    pub unitarity_defect: f64,
    /// `(depth bin start, mean row norm of u - 1)` in unit-width bins, over
    /// sites at least `bulk_margin` away from the lateral window faces.
    pub profile: Vec<(f64, f64)>,
}

pub fn boundary_unitary(hs: &HalfSpaceModel, f: &dyn Fn(f64) -> f64) -> Result<BoundaryUnitary> {
    let h = &hs.compressed;
    let (vals, vecs) = linalg::eigh(&h.matrix)?;
    let u = linalg::spectral_function(&vals, &vecs, |l| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * f(l)));
    let unitarity_defect = linalg::unitarity_defect(&u);
    if unitarity_defect > 1e-8 {
        return Err(Error::LinearAlgebra(format!("boundary unitary defect {unitarity_defect:.3e}")));
    }
    let q = h.q;
    let n = u.nrows();
    let mut bins: std::collections::BTreeMap<i64, (f64, usize)> = std::collections::BTreeMap::new();
    let lateral_ok = |x: &[f64]| {
        (0..x.len()).all(|k| {
            hs.normal[k] != 0.0
                || h.periods.get(k).copied().flatten().is_some()
                || (x[k] >= h.window.bounds[k][0] + h.bulk_margin && x[k] <= h.window.bounds[k][1] - h.bulk_margin)
        })
    };
    for r in 0..n {
        if !lateral_ok(&h.sites[r / q]) {
            continue;
        }
        let mut s = 0.0;
        for col in 0..n {
            let z = u[(r, col)] - if r == col { c(1.0, 0.0) } else { c(0.0, 0.0) };
            s += z.norm_sqr();
        }
        let depth = hs.depth(&h.sites[r / q]);
        let e = bins.entry(depth.floor() as i64).or_insert((0.0, 0));
        e.0 += s.sqrt();
        e.1 += 1;
    }
    let profile = bins.into_iter().map(|(k, (s, cnt))| (k as f64, s / cnt as f64)).collect();
    Ok(BoundaryUnitary { unitary: h.with_matrix(u), unitarity_defect, profile })
}

/// Boundary pairing of a boundary unitary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryReport {
    /// `C~_{d-1} sum (-1)^nu Tr(prod u* d_nu u)` per unit boundary volume.
    pub raw: f64,
    /// `raw / ODD_DICTIONARY`: the pairing in Fredholm-index normalization.
    pub normalized: f64,
    pub slab_width: f64,
    pub slab_sites: usize,
    pub lateral_margin: f64,
    /// `normalized` recomputed on a slab of twice the width.
    pub doubled: f64,
    pub sensitivity: f64,
}

/// Sites of the slab `0 <= depth < width` away from the lateral window edges.
fn slab_sites(hs: &HalfSpaceModel, width: f64, lateral_margin: f64, parallel: &[usize]) -> Vec<usize> {
    let h = &hs.compressed;
    (0..h.n_sites())
        .filter(|&i| {
            let x = &h.sites[i];
            let t = hs.depth(x);
            t >= 0.0
                && t < width
                && parallel.iter().all(|&k| {
                    h.periods.get(k).copied().flatten().is_some()
                        || (x[k] >= h.window.bounds[k][0] + lateral_margin && x[k] <= h.window.bounds[k][1] - lateral_margin)
                })
        })
        .collect()
}

fn slab_pairing(u: &OperatorSample, du: &linalg::CMat, slab: &[usize], slab_width: f64) -> f64 {
    let q = u.q;
    let mut t = c(0.0, 0.0);
    for &i in slab {
        for a in 0..q {
            let row = i * q + a;
            for k in 0..u.size() {
                t += u.matrix[(k, row)].conj() * du[(k, row)];
            }
        }
    }
    let d = u.dimension() as f64;
    let boundary_length = slab.len() as f64 / (slab_width * u.density.powf(1.0 / d));
    (odd_constant(1) * t / boundary_length).re
}

/// Odd pairing of `u` along the boundary direction `parallel`, traced per unit
/// boundary volume over a slab of width `slab_width` next to the cut.
pub fn boundary_invariant(
    bu: &BoundaryUnitary,
    hs: &HalfSpaceModel,
    parallel: &[usize],
    slab_width: f64,
    lateral_margin: f64,
) -> Result<BoundaryReport> {
    if parallel.len() != 1 {
        return Err(Error::InvalidParameter("boundary pairing implemented for one boundary direction".into()));
    }
    if slab_width <= 0.0 {
        return Err(Error::InvalidParameter("slab width must be positive".into()));
    }
    let u = &bu.unitary;
    let du = derivation(u, parallel[0]).matrix;
    let mut values = Vec::with_capacity(2);
    let mut slab_len = 0;
    for w in [slab_width, 2.0 * slab_width] {
        let slab = slab_sites(hs, w, lateral_margin, parallel);
        if slab.is_empty() {
            return Err(Error::WindowTooSmall(format!("empty boundary slab of width {w}")));
        }
        if values.is_empty() {
            slab_len = slab.len();
        }
        values.push(slab_pairing(u, &du, &slab, w));
    }
    let raw = values[0];
    let normalized = raw / ODD_DICTIONARY;
    let doubled = values[1] / ODD_DICTIONARY;
    Ok(BoundaryReport {
        raw,
        normalized,
        slab_width,
        slab_sites: slab_len,
        lateral_margin,
        doubled,
        sensitivity: (doubled - normalized).abs(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BulkBoundaryReport {
    pub bulk: f64,
    pub boundary: f64,
    pub sign: f64,
    pub agree: bool,
    pub boundary_report: BoundaryReport,
    pub gap: Gap,
}

/// Even case: bulk Chern number of `h` against the boundary pairing of the
/// half-space `x_dir >= cut`, with `<[p],[lambda_d]> = -<d[p],[lambda_{d-1}]>`.
///
/// The bulk trace uses `h.bulk_margin`, which also sets the lateral margin of the slab.
pub fn bulk_boundary_even(
    h: &OperatorSample,
    e_hint: f64,
    dir: usize,
    cut: f64,
    slab_width: f64,
    tol: f64,
) -> Result<(BulkBoundaryReport, InvariantReport)> {
    if h.dimension() != 2 {
        return Err(Error::DimensionMismatch("even bulk-boundary check is implemented for d = 2".into()));
    }
    let sd = diagonalize(h)?;
    let gap = select_gap(&find_gaps(&sd, default_gap_floor(&sd)), e_hint)
        .ok_or_else(|| Error::Gapless("no bulk gap".into()))?;
    let p = projection_below(h, &sd, gap.fermi);
    let bulk = chern_even(&p, &[0, 1])?;
    let f = smooth_gap_function(&gap)?;
    let hs = half_space(h, dir, cut, 0.0)?;
    let bu = boundary_unitary(&hs, &|e| f.eval(e))?;
    let boundary_report = boundary_invariant(&bu, &hs, &[1 - dir], slab_width, h.bulk_margin)?;
    let boundary = boundary_report.normalized;
    let sign = -1.0;
    let agree = (bulk.raw[0] - sign * boundary).abs() < tol;
    Ok((BulkBoundaryReport { bulk: bulk.raw[0], boundary, sign, agree, boundary_report, gap }, bulk))
}

/// Eigenvector of the compression with energy inside the window, in the basis
/// that diagonalizes the near-boundary weight within the window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeMode {
    pub energy: f64,
    pub score: f64,
    pub depth: f64,
    /// Mean coordinate along the first boundary direction; 0 in `d = 1`.
    pub along: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZeroModeReport {
    /// Modes with localization score above [`LOCALIZATION_MIN`].
    pub count: i64,
    /// `Tr(Q Pi_near)` for the in-window spectral projection `Q`.
    pub localized_weight: f64,
    pub modes: Vec<EdgeMode>,
}

pub const LOCALIZATION_MIN: f64 = 0.9;

/// Counts eigenvalues of the compression in `energy` that live within `reach` of the cut.
///
/// Scores are eigenvalues of `Q Pi_near Q` on the in-window space, so
/// hybridized pairs from distant boundaries separate again.
pub fn zero_mode_count(hs: &HalfSpaceModel, energy: (f64, f64), reach: f64) -> Result<ZeroModeReport> {
    let h = &hs.compressed;
    let (vals, vecs) = linalg::eigh(&h.matrix)?;
    let q = h.q;
    let near: Vec<bool> = h.sites.iter().map(|x| hs.depth(x) < reach).collect();
    let cols: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > energy.0 && vals[k] < energy.1).collect();
    if cols.is_empty() {
        return Ok(ZeroModeReport { count: 0, localized_weight: 0.0, modes: Vec::new() });
    }
    let v = linalg::select_columns(&vecs, &cols);
    let near_v = Mat::from_fn(v.nrows(), v.ncols(), |r, k| if near[r / q] { v[(r, k)] } else { c(0.0, 0.0) });
    let w = v.adjoint() * &near_v;
    let energy_op = Mat::from_fn(cols.len(), cols.len(), |a, b| if a == b { c(vals[cols[a]], 0.0) } else { c(0.0, 0.0) });
    let (scores, rot) = linalg::eigh(&w)?;
    let local = &v * &rot;
    let along_dir = hs.normal.iter().position(|&n| n.abs() < 0.5);
    let energies = rot.adjoint() * &energy_op * &rot;
    let modes: Vec<EdgeMode> = (0..cols.len())
        .map(|k| {
            let (mut depth, mut along) = (0.0, 0.0);
            for r in 0..local.nrows() {
                let m = local[(r, k)].norm_sqr();
                let x = &h.sites[r / q];
                depth += m * hs.depth(x);
                along += m * along_dir.map_or(0.0, |j| x[j]);
            }
            EdgeMode { energy: energies[(k, k)].re, score: scores[k], depth, along }
        })
        .collect();
    let count = modes.iter().filter(|m| m.score > LOCALIZATION_MIN).count() as i64;
    Ok(ZeroModeReport { count, localized_weight: scores.iter().sum(), modes })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OddBulkBoundaryReport {
    pub winding: InvariantReport,
    pub zero_modes: ZeroModeReport,
    pub agree: bool,
}

/// Odd case in `d = 1`: Fredholm index of the Fermi unitary of the closed chain
/// against the zero modes at the left end of the open chain.
pub fn bulk_boundary_odd(
    ring: &OperatorSample,
    open: &OperatorSample,
    chiral: &SymmetryOperator,
) -> Result<OddBulkBoundaryReport> {
    if ring.dimension() != 1 || open.dimension() != 1 {
        return Err(Error::DimensionMismatch("odd bulk-boundary check is implemented for d = 1".into()));
    }
    let u = fermi_unitary(ring, chiral)?;
    let winding = winding_odd(&u, &[0])?;
    let first = open.sites.iter().map(|x| x[0]).fold(f64::INFINITY, f64::min);
    let hs = half_space(open, 0, first - 0.5, 0.0)?;
    let sd = diagonalize(ring)?;
    let gap = select_gap(&find_gaps(&sd, default_gap_floor(&sd)), 0.0)
        .ok_or_else(|| Error::Gapless("closed chain has no gap at 0".into()))?;
    let reach = open.window.extent(0) / 4.0;
    let zero_modes = zero_mode_count(&hs, (0.5 * gap.lower, 0.5 * gap.upper), reach)?;
    let oracle = winding.oracle.ok_or_else(|| Error::Unresolved("no Fredholm oracle for the winding".into()))?;
    Ok(OddBulkBoundaryReport { agree: oracle.abs() == zero_modes.count, zero_modes, winding })
}
