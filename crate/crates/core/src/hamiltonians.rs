//! Model Hamiltonians, spectral gaps, Fermi projections and chiral unitaries.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::delone::{norm, DeloneSet, Patch};
use crate::error::{Error, Result};
use crate::groupoid::{represent, CovariantKernel, MagneticCocycle, OperatorSample};
use crate::linalg::{self, c, CMat, C64, I};

/// Hopping amplitudes below this are dropped.
pub const AMP_FLOOR: f64 = 1e-8;

/// `e^{-beta |d|}` for `0 < |d| <= cutoff`.
#[derive(Clone, Debug)]
pub struct ExpHopping {
    pub beta: f64,
    pub cutoff: f64,
}

impl CovariantKernel for ExpHopping {
    fn internal_dim(&self) -> usize {
        1
    }
    fn hop_range(&self) -> f64 {
        self.cutoff
    }
    fn amplitude(&self, _: Option<&Patch>, d: &[f64]) -> Option<CMat> {
        let r = norm(d);
        (r > 0.0 && r <= self.cutoff).then(|| linalg::scale(&linalg::identity(1), c((-self.beta * r).exp(), 0.0)))
    }
}

/// Constant amplitude `t` out to `radius`.
#[derive(Clone, Debug)]
pub struct NearestNeighbour {
    pub t: f64,
    pub radius: f64,
}

impl CovariantKernel for NearestNeighbour {
    fn internal_dim(&self) -> usize {
        1
    }
    fn hop_range(&self) -> f64 {
        self.radius
    }
    fn amplitude(&self, _: Option<&Patch>, d: &[f64]) -> Option<CMat> {
        let r = norm(d);
        (r > 0.0 && r <= self.radius).then(|| linalg::scale(&linalg::identity(1), c(self.t, 0.0)))
    }
}

/// Cutoff at which `e^{-beta r}` drops below [`AMP_FLOOR`].
pub fn exp_cutoff(beta: f64) -> f64 {
    (1.0 / AMP_FLOOR).ln() / beta
}

/// Exponentially decaying hopping with Peierls phases.
///
/// Returns the operator and a warning when the cutoff admits no hopping.
pub fn exp_hopping(
    set: &DeloneSet,
    beta: f64,
    b: &MagneticCocycle,
    cutoff: Option<f64>,
) -> Result<(OperatorSample, Option<String>)> {
    if beta <= 0.0 {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be positive")));
    }
    let cutoff = cutoff.unwrap_or_else(|| exp_cutoff(beta));
    let warning = (cutoff < 2.0 * set.r).then(|| format!("cutoff {cutoff} < 2r = {}: no hopping", 2.0 * set.r));
    Ok((represent(set, &ExpHopping { beta, cutoff }, b)?, warning))
}

/// Sharp-cutoff hopping `t` with Peierls phases.
pub fn nn_hofstadter(set: &DeloneSet, t: f64, b: &MagneticCocycle, nn_radius: f64) -> Result<OperatorSample> {
    represent(set, &NearestNeighbour { t, radius: nn_radius }, b)
}

/// `H_xy ⊗ hop(y - x)` off the diagonal plus `1 ⊗ onsite`.
///
/// `hop(-d)` must equal `hop(d)^dagger`.
pub fn with_internal(
    model: &OperatorSample,
    onsite: &CMat,
    hop: &dyn Fn(&[f64]) -> CMat,
) -> Result<OperatorSample> {
    if model.q != 1 {
        return Err(Error::DimensionMismatch("with_internal expects a scalar model".into()));
    }
    let q = onsite.nrows();
    if q == 0 || onsite.ncols() != q {
        return Err(Error::DimensionMismatch("onsite block must be square and nonempty".into()));
    }
    if linalg::hermiticity_defect(onsite) > 1e-12 {
        return Err(Error::SymmetryViolated("onsite block is not Hermitian".into()));
    }
    let n = model.n_sites();
    let d = model.dimension();
    let mut m = linalg::zeros(n * q, n * q);
    for i in 0..n {
        for j in 0..n {
            let h = model.matrix[(i, j)];
            let blk = if i == j {
                let mut blk = onsite.clone();
                for a in 0..q {
                    blk[(a, a)] += h;
                }
                blk
            } else if h != c(0.0, 0.0) {
                let disp: Vec<f64> = (0..d).map(|k| -model.separation(i, j, k)).collect();
                let hm = hop(&disp);
                if hm.nrows() != q || hm.ncols() != q {
                    return Err(Error::DimensionMismatch(format!("hop block {}x{} for q={q}", hm.nrows(), hm.ncols())));
                }
                linalg::scale(&hm, h)
            } else {
                continue;
            };
            for a in 0..q {
                for b in 0..q {
                    m[(i * q + a, j * q + b)] = blk[(a, b)];
                }
            }
        }
    }
    let defect = linalg::hermiticity_defect(&m);
    if defect > 1e-12 * linalg::max_abs(&m).max(1.0) {
        return Err(Error::SymmetryViolated(format!("hop(-d) != hop(d)^dagger: defect {defect:.3e}")));
    }
    Ok(OperatorSample {
        sites: model.sites.clone(),
        matrix: m,
        window: model.window.clone(),
        bulk_margin: model.bulk_margin,
        q,
        range: model.range,
        periods: model.periods.clone(),
        density: model.density,
        boundary_affected: model.boundary_affected.clone(),
    })
}

/// Direction-resolved hop block for lattice bonds: `forward[k]` along `+e_k`,
/// its adjoint along `-e_k`.
fn axis_hop(forward: Vec<CMat>) -> impl Fn(&[f64]) -> CMat {
    move |d: &[f64]| {
        let (k, v) = d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(k, v)| (k, *v))
            .unwrap();
        if v > 0.0 {
            forward[k].clone()
        } else {
            linalg::adjoint(&forward[k])
        }
    }
}

/// SSH chain on a one-dimensional sample: intra-cell `v`, inter-cell `w`.
pub fn ssh(set: &DeloneSet, v: f64, w: f64, nn_radius: f64) -> Result<OperatorSample> {
    if set.dimension != 1 {
        return Err(Error::DimensionMismatch("SSH lives on d = 1".into()));
    }
    let base = nn_hofstadter(set, 1.0, &MagneticCocycle::zero(1), nn_radius)?;
    let onsite = linalg::scale(&linalg::pauli(1), c(v, 0.0));
    let forward = Mat::from_fn(2, 2, |a, b| if a == 1 && b == 0 { c(w, 0.0) } else { c(0.0, 0.0) });
    with_internal(&base, &onsite, &axis_hop(vec![forward]))
}

/// SSH chains along `e_1`, stacked along the remaining directions without coupling.
pub fn ssh_stack(set: &DeloneSet, v: f64, w: f64) -> Result<OperatorSample> {
    let d = set.dimension;
    let base = nn_hofstadter(set, 1.0, &MagneticCocycle::zero(d), 1.01)?;
    // Remove bonds transverse to e_1.
    let mut chain = base.clone();
    for i in 0..base.n_sites() {
        for j in 0..base.n_sites() {
            if (1..d).any(|k| base.separation(i, j, k).abs() > 0.5) {
                chain.matrix[(i, j)] = c(0.0, 0.0);
            }
        }
    }
    let onsite = linalg::scale(&linalg::pauli(1), c(v, 0.0));
    let forward = Mat::from_fn(2, 2, |a, b| if a == 1 && b == 0 { c(w, 0.0) } else { c(0.0, 0.0) });
    let mut fw = vec![forward];
    fw.extend((1..d).map(|_| linalg::zeros(2, 2)));
    with_internal(&chain, &onsite, &axis_hop(fw))
}

/// Qi-Wu-Zhang model on a square sample: `m sigma_z` onsite,
/// `(sigma_z + i sigma_x)/2` along `+e_1`, `(sigma_z + i sigma_y)/2` along `+e_2`.
pub fn qwz(set: &DeloneSet, m: f64, b: &MagneticCocycle) -> Result<OperatorSample> {
    if set.dimension != 2 {
        return Err(Error::DimensionMismatch("QWZ lives on d = 2".into()));
    }
    let base = nn_hofstadter(set, 1.0, b, 1.01)?;
    let onsite = linalg::scale(&linalg::pauli(3), c(m, 0.0));
    let hx = linalg::scale(&(&linalg::pauli(3) + &linalg::scale(&linalg::pauli(1), I)), c(0.5, 0.0));
    let hy = linalg::scale(&(&linalg::pauli(3) + &linalg::scale(&linalg::pauli(2), I)), c(0.5, 0.0));
    with_internal(&base, &onsite, &axis_hop(vec![hx, hy]))
}

/// Kitaev chain in Bogoliubov-de Gennes form: `-mu sigma_z` onsite,
/// `-t sigma_z - i delta sigma_y` along `+e_1`.
pub fn kitaev(set: &DeloneSet, mu: f64, t: f64, delta: f64) -> Result<OperatorSample> {
    if set.dimension != 1 {
        return Err(Error::DimensionMismatch("Kitaev chain lives on d = 1".into()));
    }
    let base = nn_hofstadter(set, 1.0, &MagneticCocycle::zero(1), 1.01)?;
    let onsite = linalg::scale(&linalg::pauli(3), c(-mu, 0.0));
    let fwd = &linalg::scale(&linalg::pauli(3), c(-t, 0.0)) + &linalg::scale(&linalg::pauli(2), c(0.0, -delta));
    with_internal(&base, &onsite, &axis_hop(vec![fwd]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryKind {
    Chiral,
    TimeReversal,
    ParticleHole,
}

/// Internal symmetry `1 ⊗ matrix`, optionally composed with complex conjugation.
#[derive(Clone, Debug)]
pub struct SymmetryOperator {
    pub kind: SymmetryKind,
    pub matrix: CMat,
    pub antilinear: bool,
}

impl SymmetryOperator {
    pub fn chiral(matrix: CMat) -> Self {
        SymmetryOperator { kind: SymmetryKind::Chiral, matrix, antilinear: false }
    }

    pub fn particle_hole(matrix: CMat) -> Self {
        SymmetryOperator { kind: SymmetryKind::ParticleHole, matrix, antilinear: true }
    }

    pub fn time_reversal(matrix: CMat) -> Self {
        SymmetryOperator { kind: SymmetryKind::TimeReversal, matrix, antilinear: true }
    }

    /// `S A S^{-1}` on the full space, with `A` conjugated when antilinear.
    pub fn conjugate(&self, a: &OperatorSample) -> CMat {
        let full = linalg::kron(&linalg::identity(a.n_sites()), &self.matrix);
        let src = if self.antilinear {
            Mat::from_fn(a.size(), a.size(), |i, j| a.matrix[(i, j)].conj())
        } else {
            a.matrix.clone()
        };
        &(&full * &src) * full.adjoint()
    }

    /// Deviation from the relation the symmetry class prescribes for `h`.
    pub fn defect(&self, h: &OperatorSample) -> f64 {
        let s = self.conjugate(h);
        let target = match self.kind {
            SymmetryKind::TimeReversal => h.matrix.clone(),
            SymmetryKind::Chiral | SymmetryKind::ParticleHole => linalg::scale(&h.matrix, c(-1.0, 0.0)),
        };
        linalg::max_abs(&(&s - &target))
    }
}

/// Open interval `(lower, upper)` free of bulk spectrum with its Fermi level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub lower: f64,
    pub upper: f64,
    pub fermi: f64,
    /// Bulk states per site below the gap.
    pub ids: f64,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Clone, Debug)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
    /// Share of each eigenvector in the bulk window, normalized so a uniform state has weight 1.
    pub bulk_weights: Vec<f64>,
    pub gap: Option<Gap>,
    pub gap_floor: f64,
    /// Per-site bulk normalization of the sample.
    pub bulk_sites: usize,
    pub q: usize,
}

impl SpectralData {
    pub fn is_gapless(&self) -> bool {
        self.gap.is_none()
    }

    pub fn width(&self) -> f64 {
        match (self.eigenvalues.first(), self.eigenvalues.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// `||H - V diag(lambda) V^dagger||_max`.
    pub fn reconstruction_defect(&self, h: &OperatorSample) -> f64 {
        let back = linalg::spectral_function(&self.eigenvalues, &self.eigenvectors, |l| c(l, 0.0));
        linalg::max_abs(&(&back - &h.matrix))
    }
}

/// Eigenvectors with bulk weight above this count as bulk states.
pub const BULK_WEIGHT_MIN: f64 = 0.3;

/// Full diagonalization with bulk weights; no gap selected yet.
pub fn diagonalize(h: &OperatorSample) -> Result<SpectralData> {
    let (vals, vecs) = linalg::eigh(&h.matrix)?;
    let q = h.q;
    let mut bulk = h.bulk_sites();
    if bulk.is_empty() {
        bulk = (0..h.n_sites()).collect();
    }
    let scale = h.n_sites() as f64 / bulk.len() as f64;
    let weights = (0..vals.len())
        .map(|k| {
            let mut s = 0.0;
            for &i in &bulk {
                for a in 0..q {
                    s += vecs[(i * q + a, k)].norm_sqr();
                }
            }
            s * scale
        })
        .collect();
    let width = vals.last().copied().unwrap_or(0.0) - vals.first().copied().unwrap_or(0.0);
    Ok(SpectralData {
        eigenvalues: vals,
        eigenvectors: vecs,
        bulk_weights: weights,
        gap: None,
        gap_floor: GAP_FLOOR_REL * width,
        bulk_sites: bulk.len(),
        q,
    })
}

/// Relative width below which a spacing of bulk levels is not called a gap.
pub const GAP_FLOOR_REL: f64 = 0.03;

/// `GAP_FLOOR_REL` times the spectral width.
pub fn default_gap_floor(sd: &SpectralData) -> f64 {
    GAP_FLOOR_REL * sd.width()
}

/// All gaps of the bulk-weighted spectrum wider than `min_width`, ascending.
pub fn find_gaps(sd: &SpectralData, min_width: f64) -> Vec<Gap> {
    let bulk: Vec<usize> = (0..sd.eigenvalues.len()).filter(|&k| sd.bulk_weights[k] > BULK_WEIGHT_MIN).collect();
    let mut out = Vec::new();
    for w in bulk.windows(2) {
        let (lo, hi) = (sd.eigenvalues[w[0]], sd.eigenvalues[w[1]]);
        if hi - lo > min_width {
            let fermi = 0.5 * (lo + hi);
            out.push(Gap { lower: lo, upper: hi, fermi, ids: ids_below(sd, fermi) });
        }
    }
    out
}

/// Bulk states per site below `energy`.
pub fn ids_below(sd: &SpectralData, energy: f64) -> f64 {
    let total: f64 = sd
        .eigenvalues
        .iter()
        .zip(&sd.bulk_weights)
        .filter(|(l, _)| **l < energy)
        .map(|(_, w)| w)
        .sum();
    total * sd.q as f64 / sd.eigenvectors.nrows().max(1) as f64
}

/// Largest gap containing `e_hint`, else the gap nearest to it.
pub fn spectral_gap(h: &OperatorSample, e_hint: f64) -> Result<SpectralData> {
    let mut sd = diagonalize(h)?;
    let floor = default_gap_floor(&sd);
    sd.gap_floor = floor;
    sd.gap = select_gap(&find_gaps(&sd, floor), e_hint);
    Ok(sd)
}

pub fn select_gap(gaps: &[Gap], e_hint: f64) -> Option<Gap> {
    if let Some(g) = gaps.iter().filter(|g| g.lower < e_hint && e_hint < g.upper).max_by(|a, b| a.width().total_cmp(&b.width())) {
        return Some(*g);
    }
    gaps.iter()
        .min_by(|a, b| {
            let da = (a.fermi - e_hint).abs().min((a.lower - e_hint).abs()).min((a.upper - e_hint).abs());
            let db = (b.fermi - e_hint).abs().min((b.lower - e_hint).abs()).min((b.upper - e_hint).abs());
            da.total_cmp(&db)
        })
        .copied()
}

/// `sum_{lambda < E_F} v v^dagger`.
pub fn fermi_projection(h: &OperatorSample, sd: &SpectralData) -> Result<OperatorSample> {
    let gap = sd.gap.ok_or_else(|| Error::Gapless("no gap selected".into()))?;
    Ok(projection_below(h, sd, gap.fermi))
}

pub fn projection_below(h: &OperatorSample, sd: &SpectralData, energy: f64) -> OperatorSample {
    let cols: Vec<usize> = (0..sd.eigenvalues.len()).filter(|&k| sd.eigenvalues[k] < energy).collect();
    let v = linalg::select_columns(&sd.eigenvectors, &cols);
    OperatorSample { range: f64::INFINITY, ..h.with_matrix(&v * v.adjoint()) }
}

/// Cubic smoothstep from 0 at `lower` to 1 at `upper`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GapFunction {
    pub lower: f64,
    pub upper: f64,
}

impl GapFunction {
    pub fn eval(&self, e: f64) -> f64 {
        let t = ((e - self.lower) / (self.upper - self.lower)).clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    }

    /// `1 - f`.
    pub fn complement(&self) -> impl Fn(f64) -> f64 + '_ {
        move |e| 1.0 - self.eval(e)
    }
}

pub fn smooth_gap_function(gap: &Gap) -> Result<GapFunction> {
    if gap.upper <= gap.lower {
        return Err(Error::InvalidParameter("empty gap".into()));
    }
    Ok(GapFunction { lower: gap.lower, upper: gap.upper })
}

/// Off-diagonal block `U` of `1 - 2P` in the eigenbasis of the chiral operator:
/// the map from the `+1` sector to the `-1` sector.
pub fn fermi_unitary(h: &OperatorSample, chiral: &SymmetryOperator) -> Result<OperatorSample> {
    let scale = linalg::max_abs(&h.matrix).max(1.0);
    let defect = chiral.defect(h);
    if defect > 1e-10 * scale {
        return Err(Error::SymmetryViolated(format!("R_C H R_C != -H: defect {defect:.3e}")));
    }
    let (rv, rw) = linalg::eigh(&chiral.matrix)?;
    if rv.iter().any(|l| (l.abs() - 1.0).abs() > 1e-10) {
        return Err(Error::SymmetryViolated("chiral operator is not a self-adjoint unitary".into()));
    }
    let minus: Vec<usize> = (0..rv.len()).filter(|&k| rv[k] < 0.0).collect();
    let plus: Vec<usize> = (0..rv.len()).filter(|&k| rv[k] > 0.0).collect();
    if minus.len() != plus.len() {
        return Err(Error::SymmetryViolated("chiral sectors of unequal dimension".into()));
    }
    let (vals, vecs) = linalg::eigh(&h.matrix)?;
    let min_abs = vals.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    if min_abs < 1e-8 * scale {
        return Err(Error::Gapless(format!("0 in spectrum (|lambda|min = {min_abs:.3e})")));
    }
    let sign = linalg::spectral_function(&vals, &vecs, |l| c(l.signum(), 0.0));
    let n = h.n_sites();
    let q = h.q;
    let half = plus.len();
    // Sector basis vectors: site i, sector state k -> column of rw.
    let u = Mat::from_fn(n * half, n * half, |row, col| {
        let (i, a) = (row / half, minus[row % half]);
        let (j, b) = (col / half, plus[col % half]);
        let mut s = c(0.0, 0.0);
        for p in 0..q {
            let left = rw[(p, a)].conj();
            if left == c(0.0, 0.0) {
                continue;
            }
            for r in 0..q {
                s += left * sign[(i * q + p, j * q + r)] * rw[(r, b)];
            }
        }
        s
    });
    let defect = linalg::unitarity_defect(&u);
    if defect > 1e-8 {
        return Err(Error::LinearAlgebra(format!("Fermi unitary defect {defect:.3e}")));
    }
    Ok(OperatorSample {
        sites: h.sites.clone(),
        matrix: u,
        window: h.window.clone(),
        bulk_margin: h.bulk_margin,
        q: half,
        range: f64::INFINITY,
        periods: h.periods.clone(),
        density: h.density,
        boundary_affected: h.boundary_affected.clone(),
    })
}

/// Bloch Hamiltonian of a translation-invariant model, from its real-space blocks.
pub fn bloch_matrix(onsite: &CMat, hops: &[(Vec<f64>, CMat)], k: &[f64]) -> CMat {
    let mut h = onsite.clone();
    for (d, blk) in hops {
        let phase: f64 = d.iter().zip(k).map(|(a, b)| a * b).sum();
        h = &h + &linalg::scale(blk, C64::from_polar(1.0, phase));
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delone::{generate_cut_and_project, generate_periodic, CutProjectScheme, Window};
    use proptest::prelude::*;

    fn square(n: usize) -> DeloneSet {
        generate_periodic(2, 1.0, &Window::cube(2, 0.0, n as f64 - 1.0)).unwrap()
    }

    fn ring(n: usize) -> DeloneSet {
        generate_periodic(1, 1.0, &Window::cube(1, 0.0, n as f64 - 1.0)).unwrap().with_periodic_closure(&[0]).unwrap()
    }

    fn qwz_energy(m: f64, k: [f64; 2]) -> f64 {
        let dz = m + k[0].cos() + k[1].cos();
        (k[0].sin().powi(2) + k[1].sin().powi(2) + dz * dz).sqrt()
    }

    #[test]
    fn qwz_torus_matches_bloch_bands() {
        let n = 6;
        let set = square(n).with_periodic_closure(&[0, 1]).unwrap();
        let h = qwz(&set, 1.3, &MagneticCocycle::zero(2)).unwrap();
        let mut got = linalg::eigvalsh(&h.matrix).unwrap();
        let mut want = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let k = [2.0 * std::f64::consts::PI * a as f64 / n as f64, 2.0 * std::f64::consts::PI * b as f64 / n as f64];
                let e = qwz_energy(1.3, k);
                want.extend([-e, e]);
            }
        }
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10, "{g} vs {w}");
        }
    }

    #[test]
    fn bloch_matrix_of_qwz_has_closed_form_spectrum() {
        let onsite = linalg::scale(&linalg::pauli(3), c(-0.7, 0.0));
        let hx = linalg::scale(&(&linalg::pauli(3) + &linalg::scale(&linalg::pauli(1), I)), c(0.5, 0.0));
        let hy = linalg::scale(&(&linalg::pauli(3) + &linalg::scale(&linalg::pauli(2), I)), c(0.5, 0.0));
        let hops = vec![
            (vec![1.0, 0.0], hx.clone()),
            (vec![-1.0, 0.0], linalg::adjoint(&hx)),
            (vec![0.0, 1.0], hy.clone()),
            (vec![0.0, -1.0], linalg::adjoint(&hy)),
        ];
        for k in [[0.3, -1.1], [2.0, 0.5], [std::f64::consts::PI, 0.0]] {
            let vals = linalg::eigvalsh(&bloch_matrix(&onsite, &hops, &k)).unwrap();
            let e = qwz_energy(-0.7, k);
            assert!((vals[0] + e).abs() < 1e-12 && (vals[1] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn ssh_is_chiral_and_kitaev_particle_hole_symmetric() {
        let set = generate_periodic(1, 1.0, &Window::cube(1, 0.0, 11.0)).unwrap();
        let h = ssh(&set, 0.4, 1.0, 1.01).unwrap();
        assert!(SymmetryOperator::chiral(linalg::pauli(3)).defect(&h) < 1e-14);
        assert!(SymmetryOperator::chiral(linalg::pauli(1)).defect(&h) > 0.1);
        let k = kitaev(&set, 0.3, 1.0, 0.8).unwrap();
        assert!(SymmetryOperator::particle_hole(linalg::pauli(1)).defect(&k) < 1e-14);
    }

    #[test]
    fn ssh_ring_spectrum_is_two_bands() {
        let (v, w) = (0.4, 1.0);
        let h = ssh(&ring(10), v, w, 1.01).unwrap();
        let got = linalg::eigvalsh(&h.matrix).unwrap();
        let mut want: Vec<f64> = (0..10)
            .flat_map(|a| {
                let k = 2.0 * std::f64::consts::PI * a as f64 / 10.0;
                let e = (v * v + w * w + 2.0 * v * w * k.cos()).sqrt();
                [-e, e]
            })
            .collect();
        want.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&want) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn hop_must_be_adjoint_under_reversal() {
        let set = generate_periodic(1, 1.0, &Window::cube(1, 0.0, 5.0)).unwrap();
        let base = nn_hofstadter(&set, 1.0, &MagneticCocycle::zero(1), 1.01).unwrap();
        let bad = |_: &[f64]| Mat::from_fn(2, 2, |a, b| if a == 1 && b == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let r = with_internal(&base, &linalg::zeros(2, 2), &bad);
        assert!(matches!(r, Err(Error::SymmetryViolated(_))));
    }

    #[test]
    fn flux_shift_by_two_quanta_is_invisible_on_integer_lattice() {
        let set = square(8);
        let a = nn_hofstadter(&set, 1.0, &MagneticCocycle::from_flux_quanta(0.3), 1.01).unwrap();
        let b = nn_hofstadter(&set, 1.0, &MagneticCocycle::from_flux_quanta(2.3), 1.01).unwrap();
        assert!(linalg::max_abs(&(&a.matrix - &b.matrix)) < 1e-12);
        let neg = nn_hofstadter(&set, 1.0, &MagneticCocycle::from_flux_quanta(-0.3), 1.01).unwrap();
        let (ea, en) = (linalg::eigvalsh(&a.matrix).unwrap(), linalg::eigvalsh(&neg.matrix).unwrap());
        assert!(ea.iter().zip(&en).all(|(x, y)| (x - y).abs() < 1e-10));
    }

    #[test]
    fn exp_hopping_is_bounded_by_row_sums() {
        let set = generate_cut_and_project(CutProjectScheme::AmmannBeenker, &Window::centered(2, 5.0)).unwrap();
        let (h, warn) = exp_hopping(&set, 2.0, &MagneticCocycle::planar(0.2), None).unwrap();
        assert!(warn.is_none());
        assert!(h.hermiticity_defect() < 1e-14);
        let row_max = (0..h.size()).map(|i| (0..h.size()).map(|j| h.matrix[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max);
        let vals = linalg::eigvalsh(&h.matrix).unwrap();
        assert!(vals.iter().all(|l| l.abs() <= row_max + 1e-12));
        let (_, warn) = exp_hopping(&set, 2.0, &MagneticCocycle::zero(2), Some(0.1)).unwrap();
        assert!(warn.is_some());
    }

    #[test]
    fn fermi_projection_is_an_orthogonal_projection() {
        let set = square(12);
        let h = nn_hofstadter(&set, 1.0, &MagneticCocycle::from_flux_quanta(0.25), 1.01).unwrap();
        let sd = spectral_gap(&h, -2.0).unwrap();
        let gap = sd.gap.unwrap();
        assert!(gap.lower < -2.0 && gap.upper > -1.5);
        let p = fermi_projection(&h, &sd).unwrap();
        let p2 = &p.matrix * &p.matrix;
        assert!(linalg::max_abs(&(&p2 - &p.matrix)) < 1e-10);
        assert!(p.hermiticity_defect() < 1e-12);
        let rank = sd.eigenvalues.iter().filter(|&&l| l < gap.fermi).count() as f64;
        assert!((linalg::trace(&p.matrix).re - rank).abs() < 1e-9);
        assert!(sd.reconstruction_defect(&h) < 1e-10);
    }

    #[test]
    fn fermi_unitary_of_ssh_ring_is_unitary_and_needs_a_gap() {
        let chiral = SymmetryOperator::chiral(linalg::pauli(3));
        let u = fermi_unitary(&ssh(&ring(12), 0.5, 1.0, 1.01).unwrap(), &chiral).unwrap();
        assert_eq!(u.q, 1);
        assert!(linalg::unitarity_defect(&u.matrix) < 1e-10);
        let gapless = ssh(&ring(12), 1.0, 1.0, 1.01).unwrap();
        assert!(matches!(fermi_unitary(&gapless, &chiral), Err(Error::Gapless(_))));
        let wrong = SymmetryOperator::chiral(linalg::pauli(1));
        assert!(matches!(fermi_unitary(&ssh(&ring(12), 0.5, 1.0, 1.01).unwrap(), &wrong), Err(Error::SymmetryViolated(_))));
    }

    proptest! {
        #[test]
        fn gap_function_is_monotone_step(lo in -3.0f64..0.0, w in 0.05f64..3.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let f = smooth_gap_function(&Gap { lower: lo, upper: lo + w, fermi: lo + w / 2.0, ids: 0.0 }).unwrap();
            prop_assert!(f.eval(lo).abs() < 1e-15);
            prop_assert!((f.eval(lo + w) - 1.0).abs() < 1e-15);
            let (x, y) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(f.eval(x) <= f.eval(y) + 1e-15);
            prop_assert!((f.eval(x) + f.complement()(x) - 1.0).abs() < 1e-15);
        }
    }
}
