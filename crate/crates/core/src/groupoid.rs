//! Finite-volume realization of the twisted groupoid algebra: the magnetic
//! cocycle, covariant kernels and their evaluation representation, position
//! operators, derivations, and s-cover frames.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delone::{norm, DeloneSet, Patch, PatchExtractor, SpatialIndex, Window};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};

/// Constant magnetic field as a real `d x d` matrix; `sigma(x, y) = exp(-i x^T B y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagneticCocycle {
    pub b: Vec<Vec<f64>>,
}

impl MagneticCocycle {
    pub fn zero(d: usize) -> Self {
        MagneticCocycle { b: vec![vec![0.0; d]; d] }
    }

    pub fn new(b: Vec<Vec<f64>>) -> Result<Self> {
        let d = b.len();
        if b.iter().any(|row| row.len() != d) {
            return Err(Error::DimensionMismatch("field matrix must be square".into()));
        }
        Ok(MagneticCocycle { b })
    }

    /// `B_12 = -B_21 = b12` in d = 2.
    pub fn planar(b12: f64) -> Self {
        MagneticCocycle { b: vec![vec![0.0, b12], vec![-b12, 0.0]] }
    }

    /// Planar field threading `alpha` flux quanta through each unit square of `Z^2`.
    ///
    /// With `sigma(x, y) = exp(-i x^T B y)` a unit plaquette collects the phase `2 B_12`,
    /// so `alpha` quanta means `B_12 = pi * alpha`.
    pub fn from_flux_quanta(alpha: f64) -> Self {
        Self::planar(std::f64::consts::PI * alpha)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn is_zero(&self) -> bool {
        self.b.iter().flatten().all(|&v| v == 0.0)
    }

    /// max |B + B^T|.
    pub fn skew_defect(&self) -> f64 {
        let d = self.dim();
        let mut m = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                m = m.max((self.b[i][j] + self.b[j][i]).abs());
            }
        }
        m
    }

    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, xi) in x.iter().enumerate() {
            for (j, yj) in y.iter().enumerate() {
                s += xi * self.b[i][j] * yj;
            }
        }
        s
    }
}

/// `exp(-i x^T B y)`.
pub fn sigma(b: &MagneticCocycle, x: &[f64], y: &[f64]) -> C64 {
    C64::from_polar(1.0, -b.form(x, y))
}

/// Worst cocycle and normalization defects over sampled triples.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CocycleDefect {
    pub cocycle: f64,
    pub normalization: f64,
}

pub fn check_2cocycle(b: &MagneticCocycle, samples: &[[Vec<f64>; 3]]) -> CocycleDefect {
    let mut out = CocycleDefect { cocycle: 0.0, normalization: 0.0 };
    for [x, y, z] in samples {
        let xy: Vec<f64> = x.iter().zip(y).map(|(a, c)| a + c).collect();
        let yz: Vec<f64> = y.iter().zip(z).map(|(a, c)| a + c).collect();
        let lhs = sigma(b, x, y) * sigma(b, &xy, z);
        let rhs = sigma(b, x, &yz) * sigma(b, y, z);
        out.cocycle = out.cocycle.max((lhs - rhs).norm());
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        out.normalization = out.normalization.max((sigma(b, x, &neg) - C64::new(1.0, 0.0)).norm());
    }
    out
}

/// Covariant hopping rule `f(T_{-x} omega, y - x)` with `q x q` matrix values.
pub trait CovariantKernel: Sync {
    fn internal_dim(&self) -> usize;

    /// Amplitudes vanish beyond this displacement length.
    fn hop_range(&self) -> f64;

    /// Radius of the source patch the rule reads; `None` for translation-invariant rules.
    fn pattern_radius(&self) -> Option<f64> {
        None
    }

    /// Block for displacement `y - x` out of a site with local pattern `patch`
    /// (`None` when `pattern_radius` is `None`). Zero displacement is the onsite block.
    fn amplitude(&self, patch: Option<&Patch>, displacement: &[f64]) -> Option<CMat>;
}

/// Finite truncation of a represented operator on `l^2(sites) ⊗ C^q`.
///
/// Index `i * q + a` addresses internal state `a` at site `i`.
#[derive(Clone, Debug)]
pub struct OperatorSample {
    pub sites: Vec<Vec<f64>>,
    pub matrix: CMat,
    pub window: Window,
    pub bulk_margin: f64,
    pub q: usize,
    /// Effective propagation range of the operator.
    pub range: f64,
    pub periods: Vec<Option<f64>>,
    pub density: f64,
    /// Sites whose kernel pattern was clipped by the window.
    pub boundary_affected: Vec<bool>,
}

impl OperatorSample {
    pub fn dimension(&self) -> usize {
        self.window.dim()
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Same sites and metadata, new matrix.
    pub fn with_matrix(&self, matrix: CMat) -> OperatorSample {
        OperatorSample { matrix, ..self.meta_clone() }
    }

    fn meta_clone(&self) -> OperatorSample {
        OperatorSample {
            sites: self.sites.clone(),
            matrix: linalg::zeros(0, 0),
            window: self.window.clone(),
            bulk_margin: self.bulk_margin,
            q: self.q,
            range: self.range,
            periods: self.periods.clone(),
            density: self.density,
            boundary_affected: self.boundary_affected.clone(),
        }
    }

    /// Site-diagonal operator from per-site blocks.
    pub fn diagonal_like(&self, f: impl Fn(usize, &[f64]) -> CMat) -> OperatorSample {
        let q = self.q;
        let mut m = linalg::zeros(self.size(), self.size());
        for (i, x) in self.sites.iter().enumerate() {
            let blk = f(i, x);
            for a in 0..q {
                for c in 0..q {
                    m[(i * q + a, i * q + c)] = blk[(a, c)];
                }
            }
        }
        OperatorSample { range: 0.0, ..self.with_matrix(m) }
    }

    pub fn identity_like(&self) -> OperatorSample {
        OperatorSample { range: 0.0, ..self.with_matrix(linalg::identity(self.size())) }
    }

    /// `(x_i - x_k)_j`, minimum-image along closed directions.
    pub fn separation(&self, i: usize, k: usize, j: usize) -> f64 {
        let mut s = self.sites[i][j] - self.sites[k][j];
        if let Some(l) = self.periods.get(j).copied().flatten() {
            s -= l * (s / l).round();
        }
        s
    }

    /// Region in which traces are taken: the window eroded by `bulk_margin`
    /// along open directions.
    pub fn bulk_window(&self) -> Option<Window> {
        let bounds: Vec<[f64; 2]> = self
            .window
            .bounds
            .iter()
            .enumerate()
            .map(|(k, b)| {
                if self.periods.get(k).copied().flatten().is_some() {
                    *b
                } else {
                    [b[0] + self.bulk_margin, b[1] - self.bulk_margin]
                }
            })
            .collect();
        bounds.iter().all(|b| b[0] <= b[1]).then_some(Window { bounds })
    }

    pub fn bulk_sites(&self) -> Vec<usize> {
        match self.bulk_window() {
            Some(w) => (0..self.n_sites()).filter(|&i| w.contains(&self.sites[i])).collect(),
            None => Vec::new(),
        }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.matrix)
    }

    pub fn adjoint(&self) -> OperatorSample {
        self.with_matrix(linalg::adjoint(&self.matrix))
    }
}

/// Builds `pi_omega(f)` on the sample: block `(x, y) = sigma(x, y) f(P_x, y - x)`.
pub fn represent(set: &DeloneSet, kernel: &dyn CovariantKernel, b: &MagneticCocycle) -> Result<OperatorSample> {
    let d = set.dimension;
    if b.dim() != d {
        return Err(Error::DimensionMismatch(format!("field of dimension {} on d={d}", b.dim())));
    }
    if set.is_periodic_closed() && !b.is_zero() {
        return Err(Error::InvalidParameter("closed directions are only supported without a magnetic field".into()));
    }
    let q = kernel.internal_dim();
    let range = kernel.hop_range();
    let n = set.len();
    let index = (!set.is_periodic_closed()).then(|| SpatialIndex::new(&set.points, range.max(set.r)));
    let pat_radius = kernel.pattern_radius();
    let extractor = pat_radius.map(|rho| PatchExtractor::new(set, rho));

    let rows: Vec<Result<(Vec<(usize, CMat)>, bool)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = &set.points[i];
            let (patch, clipped) = match (&extractor, pat_radius) {
                (Some(ex), Some(rho)) => (Some(ex.patch(i, rho)), !ex.eligible(i, rho)),
                _ => (None, false),
            };
            let neighbours: Vec<usize> = match &index {
                Some(idx) => idx.within(&set.points, x, range * (1.0 + 1e-12)),
                None => (0..n).filter(|&j| set.distance(x, &set.points[j]) <= range * (1.0 + 1e-12)).collect(),
            };
            let mut blocks = Vec::with_capacity(neighbours.len());
            for j in neighbours {
                let disp = set.displacement(x, &set.points[j]);
                if let Some(blk) = kernel.amplitude(patch.as_ref(), &disp) {
                    if blk.nrows() != q || blk.ncols() != q {
                        return Err(Error::DimensionMismatch(format!(
                            "kernel block {}x{} for q={q}",
                            blk.nrows(),
                            blk.ncols()
                        )));
                    }
                    let phase = sigma(b, x, &set.points[j]);
                    blocks.push((j, linalg::scale(&blk, phase)));
                }
            }
            Ok((blocks, clipped || !set.window.contains_ball(x, range)))
        })
        .collect();

    let mut m = linalg::zeros(n * q, n * q);
    let mut affected = vec![false; n];
    for (i, row) in rows.into_iter().enumerate() {
        let (blocks, clipped) = row?;
        affected[i] = clipped;
        for (j, blk) in blocks {
            for a in 0..q {
                for c in 0..q {
                    m[(i * q + a, j * q + c)] += blk[(a, c)];
                }
            }
        }
    }
    let scale = linalg::max_abs(&m).max(1.0);
    let defect = linalg::hermiticity_defect(&m);
    if defect > 1e-12 * scale {
        return Err(Error::SymmetryViolated(format!(
            "kernel is not Hermitian-symmetric: defect {defect:.3e}"
        )));
    }
    Ok(OperatorSample {
        sites: set.points.clone(),
        matrix: m,
        window: set.window.clone(),
        bulk_margin: 2.0 * range + 2.0 * set.big_r,
        q,
        range,
        periods: set.periods.clone(),
        density: set.density,
        boundary_affected: affected,
    })
}

/// Matrix product of two operators on the same sites.
pub fn convolve(a: &OperatorSample, c: &OperatorSample) -> Result<OperatorSample> {
    if a.q != c.q || a.sites != c.sites {
        return Err(Error::DimensionMismatch("convolution of operators on different sites".into()));
    }
    Ok(OperatorSample {
        bulk_margin: a.bulk_margin.max(c.bulk_margin) + a.range + c.range,
        range: a.range + c.range,
        ..a.with_matrix(&a.matrix * &c.matrix)
    })
}

/// Diagonal position operators `X_j - x0_j`.
pub fn position_operators(a: &OperatorSample, origin: &[f64]) -> Vec<OperatorSample> {
    let q = a.q;
    (0..a.dimension())
        .map(|j| {
            let diag: Vec<C64> = a
                .sites
                .iter()
                .flat_map(|x| std::iter::repeat_n(C64::new(x[j] - origin[j], 0.0), q))
                .collect();
            OperatorSample { range: 0.0, ..a.with_matrix(linalg::diagonal(&diag)) }
        })
        .collect()
}

/// `[X_j, A]`: entries `(x_j - y_j) A_xy`.
pub fn derivation(a: &OperatorSample, j: usize) -> OperatorSample {
    let q = a.q;
    let m = Mat::from_fn(a.size(), a.size(), |r, c| {
        let s = a.separation(r / q, c / q, j);
        a.matrix[(r, c)] * s
    });
    a.with_matrix(m)
}

/// Smooth bump supported in the open unit ball.
pub fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

/// Square partition of unity `{chi_y}` subordinate to balls `B(y; eps)`, `y` in `pitch * Z^d`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Frame {
    pub dimension: usize,
    pub eps: f64,
    pub pitch: f64,
}

impl Frame {
    pub fn new(dimension: usize, eps: f64, pitch: f64) -> Result<Self> {
        if eps <= 0.0 || pitch <= 0.0 {
            return Err(Error::InvalidParameter("eps and pitch must be positive".into()));
        }
        if pitch * (dimension as f64).sqrt() / 2.0 >= eps {
            return Err(Error::InvalidParameter(format!(
                "balls of radius {eps} on a grid of pitch {pitch} do not cover R^{dimension}"
            )));
        }
        Ok(Frame { dimension, eps, pitch })
    }

    /// Nonzero `(center, chi_center(x))` pairs at `x`, centers as integer grid labels.
    pub fn weights(&self, x: &[f64]) -> Vec<(Vec<i64>, f64)> {
        let lo: Vec<i64> = x.iter().map(|v| ((v - self.eps) / self.pitch).floor() as i64).collect();
        let hi: Vec<i64> = x.iter().map(|v| ((v + self.eps) / self.pitch).ceil() as i64).collect();
        let mut raw = Vec::new();
        let mut key = lo.clone();
        loop {
            let y: Vec<f64> = key.iter().map(|&k| k as f64 * self.pitch).collect();
            let dist = norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
            let w = bump(dist / self.eps);
            if w > 0.0 {
                raw.push((key.clone(), w));
            }
            let mut k = 0;
            loop {
                if k == key.len() {
                    let total: f64 = raw.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
                    return raw.into_iter().map(|(c, w)| (c, w / total)).collect();
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

    /// `u = sum_y chi_y^2` at `x`.
    pub fn unit_at(&self, x: &[f64]) -> f64 {
        self.weights(x).iter().map(|(_, w)| w * w).sum()
    }

    pub fn center(&self, label: &[i64]) -> Vec<f64> {
        label.iter().map(|&k| k as f64 * self.pitch).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameReport {
    pub partition_defect: f64,
    pub reconstruction_residual: f64,
    /// Largest number of sample sites inside a single frame ball.
    pub max_sites_per_ball: usize,
}

/// Frame on the sample, checked for partition of unity, reconstruction and s-injectivity.
///
/// Reconstruction is tested on `test_kernel` (a finite kernel on the sample) as `||u f - f||`.
pub fn s_cover_frame(
    set: &DeloneSet,
    eps: f64,
    pitch: f64,
    test_kernel: Option<&OperatorSample>,
) -> Result<(Frame, FrameReport)> {
    if eps >= set.r / 2.0 {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be below r/2 = {}", set.r / 2.0)));
    }
    let frame = Frame::new(set.dimension, eps, pitch)?;
    let units: Vec<f64> = set.points.iter().map(|x| frame.unit_at(x)).collect();
    let partition_defect = units.iter().map(|u| (u - 1.0).abs()).fold(0.0, f64::max);

    let mut per_ball: std::collections::HashMap<Vec<i64>, usize> = std::collections::HashMap::new();
    for x in &set.points {
        for (c, _) in frame.weights(x) {
            *per_ball.entry(c).or_default() += 1;
        }
    }
    let max_sites_per_ball = per_ball.values().copied().max().unwrap_or(0);

    let reconstruction_residual = match test_kernel {
        Some(f) => {
            let q = f.q;
            let uf = Mat::from_fn(f.size(), f.size(), |r, c| f.matrix[(r, c)] * units[r / q]);
            linalg::max_abs(&(&uf - &f.matrix))
        }
        None => 0.0,
    };
    Ok((frame, FrameReport { partition_defect, reconstruction_residual, max_sites_per_ball }))
}

/// Worst defects of the algebraic identities on one represented operator.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IdentityDefects {
    pub cocycle: f64,
    pub hermiticity: f64,
    pub leibniz: f64,
    pub frame_reconstruction: f64,
    pub covariance: f64,
}

impl IdentityDefects {
    pub fn max(&self) -> f64 {
        [self.cocycle, self.hermiticity, self.leibniz, self.frame_reconstruction, self.covariance]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Cocycle identity on sample triples, Hermiticity, Leibniz rule for every direction,
/// frame reconstruction on `h`, and covariance of `build` under translation by the
/// site `shift`: `pi(T_a set) = U_a pi(set) U_a^*` with `U_a = exp(-i <a, B x>)`.
pub fn identity_defects(
    set: &DeloneSet,
    b: &MagneticCocycle,
    h: &OperatorSample,
    build: &dyn Fn(&DeloneSet) -> Result<OperatorSample>,
    shift: &[f64],
) -> Result<IdentityDefects> {
    let d = set.dimension;
    let step = set.points.len().div_ceil(32).max(1);
    let picks: Vec<&Vec<f64>> = set.points.iter().step_by(step).collect();
    let triples: Vec<[Vec<f64>; 3]> = picks
        .iter()
        .zip(picks.iter().skip(1))
        .zip(picks.iter().skip(2))
        .map(|((x, y), z)| [(*x).clone(), (*y).clone(), (*z).clone()])
        .collect();
    let cd = check_2cocycle(b, &triples);

    let hh = convolve(h, h)?;
    let mut leibniz = 0.0f64;
    for j in 0..d {
        let dh = derivation(h, j).matrix;
        let rhs = &(&dh * &h.matrix) + &(&h.matrix * &dh);
        leibniz = leibniz.max(linalg::max_abs(&(&derivation(&hh, j).matrix - &rhs)));
    }

    let eps = 0.4 * set.r;
    let (_, frame) = s_cover_frame(set, eps, eps / (d as f64).sqrt(), Some(h))?;

    let moved = build(&crate::delone::translate(set, shift)?)?;
    let q = h.q;
    let origin = set.index_of(shift).ok_or_else(|| Error::NotASite(format!("{shift:?}")))?;
    let a = &set.points[origin];
    let phases: Vec<C64> = set.points.iter().map(|x| C64::from_polar(1.0, -b.form(a, x))).collect();
    let covariance = if moved.size() != h.size() {
        f64::INFINITY
    } else {
        let mut worst = 0.0f64;
        for r in 0..h.size() {
            for c in 0..h.size() {
                let want = phases[r / q] * h.matrix[(r, c)] * phases[c / q].conj();
                worst = worst.max((moved.matrix[(r, c)] - want).norm());
            }
        }
        worst
    };
    Ok(IdentityDefects {
        cocycle: cd.cocycle.max(cd.normalization),
        hermiticity: h.hermiticity_defect(),
        leibniz,
        frame_reconstruction: frame.reconstruction_residual.max(frame.partition_defect),
        covariance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delone::{generate_periodic, translate};
    use crate::linalg::c;
    use rand::{Rng, SeedableRng};

    pub(crate) struct NearestNeighbour;

    impl CovariantKernel for NearestNeighbour {
        fn internal_dim(&self) -> usize {
            1
        }
        fn hop_range(&self) -> f64 {
            1.01
        }
        fn amplitude(&self, _: Option<&Patch>, d: &[f64]) -> Option<CMat> {
            (norm(d) > 0.5).then(|| linalg::identity(1))
        }
    }

    struct Onsite;

    impl CovariantKernel for Onsite {
        fn internal_dim(&self) -> usize {
            1
        }
        fn hop_range(&self) -> f64 {
            0.0
        }
        fn amplitude(&self, _: Option<&Patch>, d: &[f64]) -> Option<CMat> {
            (norm(d) == 0.0).then(|| linalg::identity(1))
        }
    }

    struct OneWay;

    impl CovariantKernel for OneWay {
        fn internal_dim(&self) -> usize {
            1
        }
        fn hop_range(&self) -> f64 {
            1.01
        }
        fn amplitude(&self, _: Option<&Patch>, d: &[f64]) -> Option<CMat> {
            (d[0] > 0.5).then(|| linalg::identity(1))
        }
    }

    fn z2(half: f64) -> DeloneSet {
        generate_periodic(2, 1.0, &Window::centered(2, half)).unwrap()
    }

    #[test]
    fn sigma_examples() {
        let b0 = MagneticCocycle::zero(2);
        assert_eq!(sigma(&b0, &[1.0, 2.0], &[3.0, -1.0]), c(1.0, 0.0));
        let phi = 0.37;
        let b = MagneticCocycle::planar(phi);
        let s = sigma(&b, &[1.0, 0.0], &[0.0, 1.0]);
        assert!((s - C64::from_polar(1.0, -phi)).norm() < 1e-15);
        assert!((sigma(&b, &[0.3, 1.7], &[-0.3, -1.7]) - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn cocycle_identity_on_random_triples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let b = MagneticCocycle::new(vec![vec![0.0, 0.7, -0.2], vec![-0.7, 0.0, 1.1], vec![0.2, -1.1, 0.0]]).unwrap();
        let samples: Vec<[Vec<f64>; 3]> = (0..1000)
            .map(|_| {
                let mut v = || (0..3).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<f64>>();
                [v(), v(), v()]
            })
            .collect();
        let d = check_2cocycle(&b, &samples);
        assert!(d.cocycle < 1e-12 && d.normalization < 1e-12);
        let bad = MagneticCocycle::new(vec![vec![0.0, 0.7, 0.0], vec![0.7, 0.0, 0.0], vec![0.0, 0.0, 0.3]]).unwrap();
        assert!(check_2cocycle(&bad, &samples).normalization > 1e-3);
    }

    #[test]
    fn identity_kernel_gives_identity() {
        let s = z2(2.0);
        let op = represent(&s, &Onsite, &MagneticCocycle::zero(2)).unwrap();
        assert!(linalg::max_abs(&(&op.matrix - &linalg::identity(25))) < 1e-15);
    }

    #[test]
    fn nearest_neighbour_is_adjacency() {
        let s = z2(3.0);
        let op = represent(&s, &NearestNeighbour, &MagneticCocycle::zero(2)).unwrap();
        for i in 0..s.len() {
            for j in 0..s.len() {
                let d = norm(&[s.points[i][0] - s.points[j][0], s.points[i][1] - s.points[j][1]]);
                let want = if (d - 1.0).abs() < 1e-9 { 1.0 } else { 0.0 };
                assert_eq!(op.matrix[(i, j)], c(want, 0.0));
            }
        }
    }

    #[test]
    fn harper_spectrum_is_symmetric() {
        let s = z2(4.0);
        let op = represent(&s, &NearestNeighbour, &MagneticCocycle::from_flux_quanta(0.25)).unwrap();
        assert!(op.hermiticity_defect() < 1e-12);
        let vals = linalg::eigvalsh(&op.matrix).unwrap();
        let n = vals.len();
        for k in 0..n {
            assert!((vals[k] + vals[n - 1 - k]).abs() < 1e-9);
        }
    }

    #[test]
    fn asymmetric_kernel_rejected() {
        let s = z2(2.0);
        assert!(matches!(represent(&s, &OneWay, &MagneticCocycle::zero(2)), Err(Error::SymmetryViolated(_))));
    }

    #[test]
    fn magnetic_translation_covariance() {
        let s = z2(4.0);
        let b = MagneticCocycle::planar(0.3);
        let a = [1.0, 2.0];
        let h = represent(&s, &NearestNeighbour, &b).unwrap();
        let t = translate(&s, &a).unwrap();
        let ht = represent(&t, &NearestNeighbour, &b).unwrap();
        let phases: Vec<C64> = s.points.iter().map(|x| C64::from_polar(1.0, -b.form(&a, x))).collect();
        let mut worst = 0.0f64;
        for i in 0..s.len() {
            for j in 0..s.len() {
                let want = phases[i] * h.matrix[(i, j)] * phases[j].conj();
                worst = worst.max((ht.matrix[(i, j)] - want).norm());
            }
        }
        assert!(worst < 1e-12);
    }

    #[test]
    fn identity_defects_vanish_on_hofstadter_sample() {
        let s = z2(4.0);
        let b = MagneticCocycle::planar(0.3);
        let build = |set: &DeloneSet| represent(set, &NearestNeighbour, &b);
        let h = build(&s).unwrap();
        let defects = identity_defects(&s, &b, &h, &build, &[1.0, 2.0]).unwrap();
        assert!(defects.max() < 1e-10, "{defects:?}");
        assert!(matches!(identity_defects(&s, &b, &h, &build, &[0.5, 0.0]), Err(Error::NotASite(_))));
    }

    #[test]
    fn derivation_rules() {
        let s = z2(3.0);
        let h = represent(&s, &NearestNeighbour, &MagneticCocycle::planar(0.4)).unwrap();
        let x = position_operators(&h, &[0.0, 0.0]);
        for j in 0..2 {
            let dh = derivation(&h, j);
            let comm = &(&x[j].matrix * &h.matrix) - &(&h.matrix * &x[j].matrix);
            assert!(linalg::max_abs(&(&dh.matrix - &comm)) < 1e-12);
            assert!(linalg::trace(&dh.matrix).norm() == 0.0);
            let hh = convolve(&h, &h).unwrap();
            let lhs = derivation(&hh, j).matrix;
            let rhs = &(&dh.matrix * &h.matrix) + &(&h.matrix * &dh.matrix);
            assert!(linalg::max_abs(&(&lhs - &rhs)) < 1e-10);
        }
        let diag = x[0].clone();
        assert_eq!(linalg::max_abs(&derivation(&diag, 1).matrix), 0.0);
        let comm = &(&x[0].matrix * &x[1].matrix) - &(&x[1].matrix * &x[0].matrix);
        assert_eq!(linalg::max_abs(&comm), 0.0);
    }

    #[test]
    fn shift_derivation_equals_shift() {
        let s = generate_periodic(1, 1.0, &Window::cube(1, 0.0, 9.0)).unwrap();
        struct Shift;
        impl CovariantKernel for Shift {
            fn internal_dim(&self) -> usize {
                1
            }
            fn hop_range(&self) -> f64 {
                1.01
            }
            fn amplitude(&self, _: Option<&Patch>, d: &[f64]) -> Option<CMat> {
                (d[0] < -0.5).then(|| linalg::identity(1))
            }
        }
        // U delta_x = delta_{x+1}: entry (x+1, x) nonzero, displacement x - (x+1) = -1.
        let u = crate::groupoid::tests::unchecked(&s, &Shift);
        let du = derivation(&u, 0);
        assert!(linalg::max_abs(&(&du.matrix - &u.matrix)) < 1e-15);
    }

    pub(crate) fn unchecked(set: &DeloneSet, k: &dyn CovariantKernel) -> OperatorSample {
        let n = set.len();
        let m = Mat::from_fn(n, n, |i, j| {
            let d = set.displacement(&set.points[i], &set.points[j]);
            if norm(&d) <= k.hop_range() {
                k.amplitude(None, &d).map(|b| b[(0, 0)]).unwrap_or(c(0.0, 0.0))
            } else {
                c(0.0, 0.0)
            }
        });
        OperatorSample {
            sites: set.points.clone(),
            matrix: m,
            window: set.window.clone(),
            bulk_margin: 0.0,
            q: 1,
            range: k.hop_range(),
            periods: set.periods.clone(),
            density: set.density,
            boundary_affected: vec![false; n],
        }
    }

    #[test]
    fn involution_and_associativity() {
        let s = z2(3.0);
        let a = represent(&s, &NearestNeighbour, &MagneticCocycle::planar(0.2)).unwrap();
        let x = position_operators(&a, &[0.1, -0.3]);
        let cmat = convolve(&a, &x[0]).unwrap();
        let lhs = linalg::adjoint(&cmat.matrix);
        let rhs = &linalg::adjoint(&x[0].matrix) * &linalg::adjoint(&a.matrix);
        assert!(linalg::max_abs(&(&lhs - &rhs)) < 1e-12);
        let id = a.identity_like();
        assert!(linalg::max_abs(&(&convolve(&a, &id).unwrap().matrix - &a.matrix)) == 0.0);
        let ab_c = convolve(&convolve(&a, &x[0]).unwrap(), &x[1]).unwrap();
        let a_bc = convolve(&a, &convolve(&x[0], &x[1]).unwrap()).unwrap();
        assert!(linalg::max_abs(&(&ab_c.matrix - &a_bc.matrix)) < 1e-10);
    }

    #[test]
    fn frame_on_z2() {
        let s = z2(3.0);
        let h = represent(&s, &NearestNeighbour, &MagneticCocycle::planar(0.2)).unwrap();
        let (_, rep) = s_cover_frame(&s, 0.24, 0.3, Some(&h)).unwrap();
        assert!(rep.partition_defect < 1e-12);
        assert!(rep.reconstruction_residual < 1e-12);
        assert!(rep.max_sites_per_ball <= 1);
        assert!(s_cover_frame(&s, 0.3, 0.3, None).is_err());
    }

    #[test]
    fn position_spectrum() {
        let s = z2(2.0);
        let h = represent(&s, &Onsite, &MagneticCocycle::zero(2)).unwrap();
        let x = position_operators(&h, &[0.0, 0.0]);
        let r2 = &(&x[0].matrix * &x[0].matrix) + &(&x[1].matrix * &x[1].matrix);
        let mut got: Vec<f64> = (0..25).map(|i| r2[(i, i)].re).collect();
        let mut want: Vec<f64> = s.points.iter().map(|p| p[0] * p[0] + p[1] * p[1]).collect();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        assert_eq!(got, want);
        for i in 0..25 {
            assert!((-2.0..=2.0).contains(&x[0].matrix[(i, i)].re));
        }
    }
}
