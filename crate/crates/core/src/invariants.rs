//! Bulk index pairings and their Fredholm oracles.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groupoid::{derivation, OperatorSample};
use crate::hamiltonians::{SymmetryKind, SymmetryOperator};
use crate::linalg::{self, c, CMat, C64};

/// Deviation above which a raw value is reported as not integral.
pub const ROUND_TOL: f64 = 0.05;

/// Relative singular-value threshold for near-kernel vectors of the Fredholm oracles.
pub const ORACLE_KERNEL_TOL: f64 = 0.1;

/// Relative threshold for exact kernels of symmetric operators.
pub const KERNEL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantReport {
    pub raw: [f64; 2],
    pub rounded: i64,
    pub deviation: f64,
    /// `deviation < ROUND_TOL`.
    pub integral: bool,
    pub method: String,
    pub dirs: Vec<usize>,
    pub bulk_margin: f64,
    pub bulk_sites: usize,
    pub oracle: Option<i64>,
    /// `raw / oracle` when the oracle is nonzero.
    pub ratio: Option<f64>,
    #[serde(skip)]
    pub runtime_s: f64,
}

impl InvariantReport {
    fn from_raw(raw: C64, method: &str, dirs: &[usize], op: &OperatorSample, bulk_sites: usize) -> Self {
        let rounded = raw.re.round();
        let deviation = (raw - c(rounded, 0.0)).norm();
        InvariantReport {
            raw: [raw.re, raw.im],
            rounded: rounded as i64,
            deviation,
            integral: deviation < ROUND_TOL,
            method: method.into(),
            dirs: dirs.to_vec(),
            bulk_margin: op.bulk_margin,
            bulk_sites,
            oracle: None,
            ratio: None,
            runtime_s: 0.0,
        }
    }

    pub fn raw_value(&self) -> C64 {
        c(self.raw[0], self.raw[1])
    }
}

/// Sites entering the bulk trace, with the volume they represent.
fn bulk_normalization(a: &OperatorSample) -> Result<(Vec<usize>, f64)> {
    let bulk = a.bulk_sites();
    if bulk.is_empty() {
        return Err(Error::WindowTooSmall(format!(
            "bulk window empty for margin {}",
            a.bulk_margin
        )));
    }
    let volume = bulk.len() as f64 / a.density;
    Ok((bulk, volume))
}

/// `(1/|Lambda|) sum_{x in bulk} tr_q A_xx` with `|Lambda|` the bulk volume.
pub fn trace_per_unit_volume(a: &OperatorSample) -> Result<C64> {
    let (bulk, volume) = bulk_normalization(a)?;
    let q = a.q;
    let mut s = c(0.0, 0.0);
    for &i in &bulk {
        for k in 0..q {
            s += a.matrix[(i * q + k, i * q + k)];
        }
    }
    Ok(s / volume)
}

/// Bulk trace per unit volume of the product `factors[0] factors[1] ...`,
/// forming only the bulk rows.
fn product_trace(op: &OperatorSample, factors: &[&CMat]) -> Result<C64> {
    let (bulk, volume) = bulk_normalization(op)?;
    let q = op.q;
    let rows: Vec<usize> = bulk.iter().flat_map(|&i| (0..q).map(move |k| i * q + k)).collect();
    let mut acc = linalg::select_rows(factors[0], &rows);
    for f in &factors[1..factors.len() - 1] {
        acc = &acc * *f;
    }
    let last = factors[factors.len() - 1];
    let mut s = c(0.0, 0.0);
    for (r, &row) in rows.iter().enumerate() {
        for k in 0..acc.ncols() {
            s += acc[(r, k)] * last[(k, row)];
        }
    }
    Ok(s / volume)
}

/// Permutations of `0..n` with their signs.
pub fn signed_permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        if rest.is_empty() {
            out.push((prefix.clone(), sign));
            return;
        }
        for k in 0..rest.len() {
            let v = rest.remove(k);
            prefix.push(v);
            let s = if k % 2 == 0 { sign } else { -sign };
            rec(prefix, rest, s, out);
            prefix.pop();
            rest.insert(k, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), 1.0, &mut out);
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `C_{2n} = (-2 pi i)^n / n!`.
pub fn even_constant(dirs: usize) -> C64 {
    let n = dirs / 2;
    c(0.0, -2.0 * std::f64::consts::PI).powu(n as u32) / factorial(n)
}

/// `C~_{2n+1} = 2 (2 pi i)^n n! / (2n+1)!`.
pub fn odd_constant(dirs: usize) -> C64 {
    let n = dirs / 2;
    c(0.0, 2.0 * std::f64::consts::PI).powu(n as u32) * (2.0 * factorial(n) / factorial(2 * n + 1))
}

/// `C_d sum_rho (-1)^rho Tr_vol(P prod_j d_{rho(j)} P)`.
pub fn chern_even(p: &OperatorSample, dirs: &[usize]) -> Result<InvariantReport> {
    if dirs.is_empty() || !dirs.len().is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("even pairing needs an even number of directions, got {}", dirs.len())));
    }
    let start = Instant::now();
    let derivs: Vec<CMat> = dirs.iter().map(|&j| derivation(p, j).matrix).collect();
    let mut raw = c(0.0, 0.0);
    for (perm, sign) in signed_permutations(dirs.len()) {
        let mut factors: Vec<&CMat> = vec![&p.matrix];
        factors.extend(perm.iter().map(|&k| &derivs[k]));
        raw += product_trace(p, &factors)? * sign;
    }
    raw *= even_constant(dirs.len());
    let bulk = p.bulk_sites().len();
    let mut rep = InvariantReport::from_raw(raw, "formula", dirs, p, bulk);
    rep.runtime_s = start.elapsed().as_secs_f64();
    Ok(rep)
}

/// `C~_d sum_rho (-1)^rho Tr_vol(prod_j u* d_{rho(j)} u)`; in d = 1 the
/// Fredholm oracle and the ratio raw/oracle are attached.
pub fn winding_odd(u: &OperatorSample, dirs: &[usize]) -> Result<InvariantReport> {
    if dirs.len() % 2 != 1 {
        return Err(Error::InvalidParameter(format!("odd pairing needs an odd number of directions, got {}", dirs.len())));
    }
    let defect = linalg::unitarity_defect(&u.matrix);
    if defect > 1e-8 {
        return Err(Error::InvalidParameter(format!("operator is not unitary: defect {defect:.3e}")));
    }
    let start = Instant::now();
    let ustar = linalg::adjoint(&u.matrix);
    let terms: Vec<CMat> = dirs.iter().map(|&j| &ustar * &derivation(u, j).matrix).collect();
    let mut raw = c(0.0, 0.0);
    for (perm, sign) in signed_permutations(dirs.len()) {
        let factors: Vec<&CMat> = perm.iter().map(|&k| &terms[k]).collect();
        let t = if factors.len() == 1 {
            trace_per_unit_volume(&u.with_matrix(factors[0].clone()))?
        } else {
            product_trace(u, &factors)?
        };
        raw += t * sign;
    }
    raw *= odd_constant(dirs.len());
    let bulk = u.bulk_sites().len();
    let mut rep = InvariantReport::from_raw(raw, "formula", dirs, u, bulk);
    if dirs.len() == 1 {
        let cut = default_cut(u, dirs[0]);
        let oracle = fredholm_odd(u, dirs[0], cut)?;
        rep.oracle = Some(oracle);
        rep.ratio = (oracle != 0).then(|| raw.re / oracle as f64);
    }
    rep.runtime_s = start.elapsed().as_secs_f64();
    Ok(rep)
}

/// Pairing restricted to the direction subset `dirs`, traced over the full bulk window.
pub fn weak_invariant(op: &OperatorSample, dirs: &[usize]) -> Result<InvariantReport> {
    let mut rep = if dirs.len().is_multiple_of(2) { chern_even(op, dirs)? } else { winding_odd(op, dirs)? };
    rep.method = "weak".into();
    Ok(rep)
}

/// Midpoint between the two site coordinates closest to the window centre along `dir`.
pub fn default_cut(op: &OperatorSample, dir: usize) -> f64 {
    let mut xs: Vec<f64> = op.sites.iter().map(|x| x[dir]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mid = 0.5 * (op.window.bounds[dir][0] + op.window.bounds[dir][1]);
    let k = xs.partition_point(|&x| x < mid).clamp(1, xs.len().max(2) - 1);
    if xs.len() < 2 {
        return mid;
    }
    0.5 * (xs[k - 1] + xs[k])
}

/// `sum_i |psi_i|^2` over sites with `near(i)`.
fn localized_weight(psi: &[C64], q: usize, near: &[bool]) -> f64 {
    psi.iter().enumerate().filter(|(k, _)| near[k / q]).map(|(_, z)| z.norm_sqr()).sum()
}

/// Net count of near-kernel vectors of `m` localized where `near` holds:
/// right singular vectors minus left singular vectors, each weighted by its mass there.
fn localized_index(m: &CMat, embed: Option<&CMat>, q: usize, near: &[bool], tol: f64) -> Result<f64> {
    let svd = linalg::svd(m)?;
    let smax = svd.values.first().copied().unwrap_or(0.0);
    let n = m.ncols();
    let mut net = 0.0;
    for k in 0..n {
        let s = svd.values.get(k).copied().unwrap_or(0.0);
        if s >= tol * smax {
            continue;
        }
        let right: Vec<C64> = (0..n).map(|i| svd.v[(i, k)]).collect();
        let left: Vec<C64> = (0..m.nrows()).map(|i| svd.u[(i, k)]).collect();
        let (right, left) = match embed {
            Some(e) => (apply(e, &right), apply(e, &left)),
            None => (right, left),
        };
        net += localized_weight(&right, q, near) - localized_weight(&left, q, near);
    }
    Ok(net)
}

fn apply(m: &CMat, v: &[C64]) -> Vec<C64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|k| m[(i, k)] * v[k]).sum()).collect()
}

/// `Index(Pi U Pi + 1 - Pi)` with `Pi` the indicator of `x_dir >= cut`,
/// counting kernel and cokernel vectors localized within a quarter window of the cut.
pub fn fredholm_odd(u: &OperatorSample, dir: usize, cut: f64) -> Result<i64> {
    let q = u.q;
    let n = u.n_sites();
    let keep: Vec<bool> = u.sites.iter().map(|x| x[dir] >= cut).collect();
    let m = Mat::from_fn(n * q, n * q, |r, col| {
        let (i, j) = (r / q, col / q);
        if keep[i] && keep[j] {
            u.matrix[(r, col)]
        } else if r == col && !keep[i] {
            c(1.0, 0.0)
        } else {
            c(0.0, 0.0)
        }
    });
    let reach = u.window.extent(dir) / 4.0;
    let near: Vec<bool> = u
        .sites
        .iter()
        .map(|x| {
            let mut s = x[dir] - cut;
            if let Some(l) = u.periods.get(dir).copied().flatten() {
                s -= l * (s / l).round();
            }
            s.abs() <= reach
        })
        .collect();
    let net = localized_index(&m, None, q, &near, ORACLE_KERNEL_TOL)?;
    Ok(net.round() as i64)
}

/// Index of `P F_+ P` on `ran P` for the Dirac phase `F_+ = (x_1 + i x_2)/|x|`
/// centred at `origin`, counting near-kernel vectors localized around the origin.
pub fn fredholm_even(p: &OperatorSample, origin: &[f64]) -> Result<i64> {
    if p.dimension() != 2 {
        return Err(Error::DimensionMismatch("even Fredholm oracle is implemented for d = 2".into()));
    }
    let q = p.q;
    let dist: Vec<f64> = p.sites.iter().map(|x| ((x[0] - origin[0]).powi(2) + (x[1] - origin[1]).powi(2)).sqrt()).collect();
    if dist.iter().any(|&r| r < 1e-6) {
        return Err(Error::InvalidParameter(format!("origin {origin:?} lies on a site")));
    }
    let (vals, vecs) = linalg::eigh(&p.matrix)?;
    let cols: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > 0.5).collect();
    let v = linalg::select_columns(&vecs, &cols);
    let phase: Vec<C64> = p
        .sites
        .iter()
        .zip(&dist)
        .flat_map(|(x, r)| std::iter::repeat_n(c((x[0] - origin[0]) / r, (x[1] - origin[1]) / r), q))
        .collect();
    let fv = Mat::from_fn(v.nrows(), v.ncols(), |i, k| phase[i] * v[(i, k)]);
    let t = v.adjoint() * &fv;
    let edge = p
        .window
        .bounds
        .iter()
        .zip(origin)
        .map(|(b, &o)| (o - b[0]).min(b[1] - o))
        .fold(f64::INFINITY, f64::min);
    let near: Vec<bool> = dist.iter().map(|&r| r <= edge / 2.0).collect();
    let net = localized_index(&t, Some(&v), q, &near, ORACLE_KERNEL_TOL)?;
    Ok(net.round() as i64)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Z2Report {
    /// Kernel dimension, localized to the region when one is given.
    pub kernel_count: f64,
    pub index: u8,
    pub kernel_values: Vec<f64>,
    pub symmetry_defect: f64,
}

/// Kernel parity of a Hermitian operator obeying `symmetry`.
///
/// With `region`, each kernel vector contributes its weight on the region,
/// so the count refers to one boundary of an open sample.
pub fn z2_index(
    op: &OperatorSample,
    symmetry: &SymmetryOperator,
    region: Option<&dyn Fn(&[f64]) -> bool>,
) -> Result<Z2Report> {
    let scale = linalg::max_abs(&op.matrix).max(1.0);
    let symmetry_defect = symmetry.defect(op);
    if symmetry_defect > 1e-8 * scale {
        return Err(Error::SymmetryViolated(format!("{:?} defect {symmetry_defect:.3e}", symmetry.kind)));
    }
    let (vals, vecs) = linalg::eigh(&op.matrix)?;
    let smax = vals.iter().map(|l| l.abs()).fold(0.0, f64::max);
    let tol = KERNEL_TOL * smax;
    if let Some(l) = vals.iter().find(|l| l.abs() > tol && l.abs() < 10.0 * tol) {
        return Err(Error::Unresolved(format!(
            "singular value {:.3e} in ({tol:.3e}, {:.3e}); enlarge the sample",
            l.abs(),
            10.0 * tol
        )));
    }
    let kernel: Vec<usize> = (0..vals.len()).filter(|&k| vals[k].abs() <= tol).collect();
    let q = op.q;
    let near: Vec<bool> = match region {
        Some(f) => op.sites.iter().map(|x| f(x)).collect(),
        None => vec![true; op.n_sites()],
    };
    let count: f64 = kernel
        .iter()
        .map(|&k| {
            let col: Vec<C64> = (0..vecs.nrows()).map(|i| vecs[(i, k)]).collect();
            localized_weight(&col, q, &near)
        })
        .sum();
    let n = count.round();
    if (count - n).abs() > 0.25 {
        return Err(Error::Unresolved(format!("localized kernel weight {count:.3} is not near an integer")));
    }
    Ok(Z2Report {
        kernel_count: count,
        index: (n as i64).rem_euclid(2) as u8,
        kernel_values: kernel.iter().map(|&k| vals[k]).collect(),
        symmetry_defect,
    })
}

/// Kind tag used by configs for the symmetry of a `z2` task.
pub fn symmetry_for(kind: SymmetryKind, matrix: CMat) -> SymmetryOperator {
    match kind {
        SymmetryKind::Chiral => SymmetryOperator::chiral(matrix),
        SymmetryKind::ParticleHole => SymmetryOperator::particle_hole(matrix),
        SymmetryKind::TimeReversal => SymmetryOperator::time_reversal(matrix),
    }
}

/// Multi-indices `alpha` in `N^d` with `|alpha| <= order`.
pub fn multi_indices(d: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for a in &out {
            let used: usize = a.iter().sum();
            for k in 0..=(order - used) {
                let mut b = a.clone();
                b.push(k);
                next.push(b);
            }
        }
        out = next;
    }
    out
}

/// `sum_{|alpha| <= s} Tr_vol(|d^alpha A|^p)^{1/p}`.
pub fn sobolev_norm(a: &OperatorSample, order: usize, p: u32) -> Result<f64> {
    if p == 0 {
        return Err(Error::InvalidParameter("power p must be >= 1".into()));
    }
    let mut total = 0.0;
    for alpha in multi_indices(a.dimension(), order) {
        let mut m = a.clone();
        for (j, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                m = derivation(&m, j);
            }
        }
        let gram = m.matrix.adjoint() * &m.matrix;
        let (vals, vecs) = linalg::eigh(&gram)?;
        let abs_p = linalg::spectral_function(&vals, &vecs, |l| c(l.max(0.0).powf(p as f64 / 2.0), 0.0));
        let t = trace_per_unit_volume(&a.with_matrix(abs_p))?.re.max(0.0);
        total += t.powf(1.0 / p as f64);
    }
    Ok(total)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidueReport {
    pub dimension: usize,
    pub radius: f64,
    /// `(s, (s - d) zeta(s))` pairs.
    pub values: Vec<(f64, f64)>,
    pub extrapolated: f64,
    pub target: f64,
    pub relative_error: f64,
}

/// Volume of the unit sphere `S^{d-1}`.
pub fn sphere_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => {
            let half = d as f64 / 2.0;
            2.0 * std::f64::consts::PI.powf(half) / gamma_half_integer(d)
        }
    }
}

fn gamma_half_integer(d: usize) -> f64 {
    // Gamma(d/2) for integer d >= 1.
    if d.is_multiple_of(2) {
        factorial(d / 2 - 1)
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while x < d as f64 / 2.0 - 1e-9 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// `(s - d) sum_{x in Z^d, |x| <= radius} (1 + |x|^2)^{-s/2}` plus the tail
/// beyond `radius` from an asymptotic series, extrapolated to `s = d` by a
/// polynomial fit.
pub fn residue_check(d: usize, s_values: &[f64], radius: f64) -> Result<ResidueReport> {
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidParameter(format!("dimension {d} not in 1..=3")));
    }
    if s_values.len() < 2 || s_values.iter().any(|&s| s <= d as f64) {
        return Err(Error::InvalidParameter("need >= 2 exponents, all above d".into()));
    }
    if radius < 10.0 {
        return Err(Error::WindowTooSmall(format!("radius {radius} < 10")));
    }
    let m = radius.floor() as i64;
    let mut norms2 = Vec::new();
    let mut idx = vec![-m; d];
    loop {
        let r2: f64 = idx.iter().map(|&k| (k * k) as f64).sum();
        if r2 <= radius * radius {
            norms2.push(r2);
        }
        let mut k = 0;
        loop {
            if k == d {
                break;
            }
            idx[k] += 1;
            if idx[k] <= m {
                break;
            }
            idx[k] = -m;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    let area = sphere_volume(d);
    let values: Vec<(f64, f64)> = s_values
        .iter()
        .map(|&s| {
            let sum: f64 = norms2.iter().map(|r2| (1.0 + r2).powf(-s / 2.0)).sum();
            // (1 + rho^2)^{-s/2} = rho^{-s} sum_m binom(-s/2, m) rho^{-2m}.
            let mut tail = 0.0;
            let mut coeff = 1.0;
            for j in 0..8 {
                let e = s + 2.0 * j as f64 - d as f64;
                tail += coeff * radius.powf(-e) / e;
                coeff *= (-s / 2.0 - j as f64) / (j as f64 + 1.0);
            }
            (s, (s - d as f64) * (sum + area * tail))
        })
        .collect();
    let xs: Vec<f64> = values.iter().map(|v| v.0 - d as f64).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.1).collect();
    let extrapolated = polyfit_at_zero(&xs, &ys, (xs.len() - 1).min(3));
    Ok(ResidueReport {
        dimension: d,
        radius,
        values,
        extrapolated,
        target: area,
        relative_error: (extrapolated - area).abs() / area,
    })
}

/// Least-squares polynomial of the given degree, evaluated at 0.
fn polyfit_at_zero(xs: &[f64], ys: &[f64], degree: usize) -> f64 {
    let n = degree + 1;
    let a = Mat::from_fn(xs.len(), n, |i, k| xs[i].powi(k as i32));
    let b = Mat::from_fn(xs.len(), 1, |i, _| ys[i]);
    let ata = a.transpose() * &a;
    let atb = a.transpose() * &b;
    let sol = ata.full_piv_lu().solve(&atb);
    sol[(0, 0)]
}

/// Raw values and the common integer of several realizations, or an error naming the disagreement.
pub fn agree(reports: &[InvariantReport]) -> Result<i64> {
    let first = reports.first().ok_or_else(|| Error::InvalidParameter("no realizations".into()))?;
    if let Some(bad) = reports.iter().find(|r| r.rounded != first.rounded || !r.integral) {
        return Err(Error::Inconclusive(format!(
            "realizations disagree: {} vs {} (deviation {:.3})",
            first.rounded, bad.rounded, bad.deviation
        )));
    }
    Ok(first.rounded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delone::{generate_periodic, Window};
    use crate::groupoid::MagneticCocycle;
    use crate::hamiltonians::{fermi_unitary, kitaev, nn_hofstadter, projection_below, spectral_gap, ssh, ssh_stack};
    use crate::linalg::pauli;

    fn chain(n: usize) -> OperatorSample {
        let set = generate_periodic(1, 1.0, &Window::cube(1, 0.0, n as f64 - 1.0)).unwrap();
        nn_hofstadter(&set, 1.0, &MagneticCocycle::zero(1), 1.01).unwrap()
    }

    fn ring_shift(n: usize, power: i64) -> OperatorSample {
        let set = generate_periodic(1, 1.0, &Window::cube(1, 0.0, n as f64 - 1.0)).unwrap().with_periodic_closure(&[0]).unwrap();
        let h = nn_hofstadter(&set, 1.0, &MagneticCocycle::zero(1), 1.01).unwrap();
        let m = Mat::from_fn(n, n, |i, j| if (j as i64 + power).rem_euclid(n as i64) as usize == i { c(1.0, 0.0) } else { c(0.0, 0.0) });
        h.with_matrix(m)
    }

    #[test]
    fn constants() {
        assert!((even_constant(2) - c(0.0, -2.0 * std::f64::consts::PI)).norm() < 1e-15);
        assert!((odd_constant(1) - c(2.0, 0.0)).norm() < 1e-15);
        let c3 = odd_constant(3);
        assert!((c3 - c(0.0, 2.0 * std::f64::consts::PI / 3.0)).norm() < 1e-14);
    }

    #[test]
    fn signed_permutations_have_correct_parity() {
        let perms = signed_permutations(3);
        assert_eq!(perms.len(), 6);
        for (p, s) in perms {
            let inversions = (0..3).flat_map(|i| (i + 1..3).map(move |j| (i, j))).filter(|&(i, j)| p[i] > p[j]).count();
            assert_eq!(s, if inversions % 2 == 0 { 1.0 } else { -1.0 });
        }
    }

    #[test]
    fn shift_powers_pair_to_twice_minus_their_index() {
        for k in 1..=3 {
            let u = ring_shift(40, k);
            let rep = winding_odd(&u, &[0]).unwrap();
            assert!((rep.raw[0] - 2.0 * k as f64).abs() < 1e-12, "{:?}", rep.raw);
            assert_eq!(rep.oracle, Some(-k));
            assert!((rep.ratio.unwrap() + 2.0).abs() < 1e-12);
        }
        let back = winding_odd(&ring_shift(40, -1), &[0]).unwrap();
        assert_eq!(back.oracle, Some(1));
    }

    #[test]
    fn shift_sobolev_norm_is_two() {
        let v = sobolev_norm(&ring_shift(30, 1), 1, 1).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
        assert_eq!(multi_indices(2, 2).len(), 6);
        assert_eq!(multi_indices(3, 1).len(), 4);
    }

    #[test]
    fn non_unitary_input_is_rejected() {
        let h = chain(10);
        assert!(matches!(winding_odd(&h, &[0]), Err(Error::InvalidParameter(_))));
        assert!(matches!(chern_even(&h, &[0]), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn chern_is_antisymmetric_in_directions() {
        let set = generate_periodic(2, 1.0, &Window::cube(2, 0.0, 15.0)).unwrap();
        let mut h = nn_hofstadter(&set, 1.0, &MagneticCocycle::from_flux_quanta(0.25), 1.01).unwrap();
        h.bulk_margin = 4.0;
        let sd = spectral_gap(&h, -2.0).unwrap();
        let p = projection_below(&h, &sd, sd.gap.unwrap().fermi);
        let a = chern_even(&p, &[0, 1]).unwrap();
        let b = chern_even(&p, &[1, 0]).unwrap();
        assert!((a.raw_value() + b.raw_value()).norm() < 1e-10);
        assert_eq!(a.rounded, -1);
    }

    #[test]
    fn ssh_winding_follows_dimerization() {
        let ring = |v: f64, w: f64| {
            let set = generate_periodic(1, 1.0, &Window::cube(1, 0.0, 39.0)).unwrap().with_periodic_closure(&[0]).unwrap();
            ssh(&set, v, w, 1.01).unwrap()
        };
        let chiral = crate::hamiltonians::SymmetryOperator::chiral(pauli(3));
        let top = winding_odd(&fermi_unitary(&ring(0.5, 1.0), &chiral).unwrap(), &[0]).unwrap();
        let triv = winding_odd(&fermi_unitary(&ring(1.0, 0.5), &chiral).unwrap(), &[0]).unwrap();
        assert_eq!(top.oracle.unwrap().abs(), 1);
        assert!((top.raw[0] / top.oracle.unwrap() as f64 + 2.0).abs() < 1e-6);
        assert_eq!(triv.oracle, Some(0));
        assert!(triv.raw[0].abs() < 1e-6);
    }

    #[test]
    fn weak_invariant_of_stacked_chains_matches_single_chain() {
        let set = generate_periodic(2, 1.0, &Window::new(vec![[0.0, 19.0], [0.0, 9.0]])).unwrap().with_periodic_closure(&[0]).unwrap();
        let mut h = ssh_stack(&set, 0.5, 1.0).unwrap();
        h.bulk_margin = 2.0;
        let chiral = crate::hamiltonians::SymmetryOperator::chiral(pauli(3));
        let u = fermi_unitary(&h, &chiral).unwrap();
        let weak = weak_invariant(&u, &[0]).unwrap();
        let single = {
            let s1 = generate_periodic(1, 1.0, &Window::cube(1, 0.0, 19.0)).unwrap().with_periodic_closure(&[0]).unwrap();
            winding_odd(&fermi_unitary(&ssh(&s1, 0.5, 1.0, 1.01).unwrap(), &chiral).unwrap(), &[0]).unwrap()
        };
        assert_eq!(weak.method, "weak");
        assert!((weak.raw[0] - single.raw[0]).abs() < 1e-8, "{} vs {}", weak.raw[0], single.raw[0]);
    }

    /// Sign of `Pf(A(0)) Pf(A(pi))` for the Majorana form of the Kitaev Bloch Hamiltonian.
    fn kitaev_pfaffian_sign(mu: f64, t: f64) -> i32 {
        let pf = |k: f64| -mu - 2.0 * t * f64::cos(k);
        if pf(0.0) * pf(std::f64::consts::PI) < 0.0 { 1 } else { 0 }
    }

    #[test]
    fn kitaev_z2_matches_pfaffian() {
        let set = generate_periodic(1, 1.0, &Window::cube(1, 0.0, 39.0)).unwrap();
        let phs = crate::hamiltonians::SymmetryOperator::particle_hole(pauli(1));
        let left = |x: &[f64]| x[0] < 20.0;
        for (mu, t) in [(0.5, 1.0), (-1.2, 1.0), (3.0, 1.0), (-2.5, 1.0)] {
            let h = kitaev(&set, mu, t, 1.0).unwrap();
            let rep = z2_index(&h, &phs, Some(&left)).unwrap();
            assert_eq!(rep.index as i32, kitaev_pfaffian_sign(mu, t), "mu = {mu}");
            let whole = z2_index(&h, &phs, None).unwrap();
            assert_eq!(whole.index, 0);
        }
    }

    #[test]
    fn z2_rejects_broken_symmetry() {
        let set = generate_periodic(1, 1.0, &Window::cube(1, 0.0, 9.0)).unwrap();
        let h = kitaev(&set, 0.5, 1.0, 1.0).unwrap();
        let wrong = crate::hamiltonians::SymmetryOperator::particle_hole(pauli(3));
        assert!(matches!(z2_index(&h, &wrong, None), Err(Error::SymmetryViolated(_))));
    }

    #[test]
    fn residues_reach_sphere_volumes() {
        for d in [1, 2] {
            let rep = residue_check(d, &[d as f64 + 0.2, d as f64 + 0.3, d as f64 + 0.4, d as f64 + 0.5], 40.0).unwrap();
            assert!(rep.relative_error < 1e-2, "d={d}: {} vs {}", rep.extrapolated, rep.target);
        }
        assert!(residue_check(2, &[2.5, 3.0], 5.0).is_err());
        assert!(residue_check(2, &[1.5, 3.0], 20.0).is_err());
    }

    #[test]
    fn agreement_across_realizations() {
        let u = ring_shift(20, 1);
        let a = winding_odd(&u, &[0]).unwrap();
        assert_eq!(agree(&[a.clone(), a.clone()]).unwrap(), 2);
        let b = winding_odd(&ring_shift(20, 2), &[0]).unwrap();
        assert!(matches!(agree(&[a, b]), Err(Error::Inconclusive(_))));
    }

    #[test]
    fn trace_per_volume_of_identity_is_density() {
        let id = chain(30).identity_like();
        let mut id = id;
        id.bulk_margin = 3.0;
        assert!((trace_per_unit_volume(&id).unwrap() - c(1.0, 0.0)).norm() < 1e-12);
        id.bulk_margin = 100.0;
        assert!(matches!(trace_per_unit_volume(&id), Err(Error::WindowTooSmall(_))));
    }
}
