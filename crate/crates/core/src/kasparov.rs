//! Truncated product module: fibers over pattern-tree vertices, the position
//! operator `X`, the frame connection `T` and numerical checks of their estimates.

use std::collections::HashMap;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delone::{norm, DeloneSet};
use crate::error::{Error, Result};
use crate::groupoid::{s_cover_frame, Frame};
use crate::linalg::{self, c, CMat, C64};
use crate::pattern_tree::{build_tree, choice_pair, cylinder_indicator, ChoicePair, PatternTree, Zeta};

/// Sites of the sample seen from one witness, inside the box `[-w, w]^d`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fiber {
    pub witness: usize,
    /// Indices in the base set, ordered lexicographically by position.
    pub sites: Vec<usize>,
    pub positions: Vec<Vec<f64>>,
}

impl Fiber {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VertexFibers {
    pub level: usize,
    pub index: usize,
    pub plus: Fiber,
    pub minus: Fiber,
}

impl VertexFibers {
    pub fn n_sites(&self) -> usize {
        self.plus.len() + self.minus.len()
    }

    /// Positions in block order: the `+` fiber first.
    pub fn positions(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.plus.positions.iter().chain(&self.minus.positions)
    }

    pub fn sites(&self) -> impl Iterator<Item = &usize> {
        self.plus.sites.iter().chain(&self.minus.sites)
    }
}

/// Fibers of `tau_+` and `tau_-` for every retained vertex. The basis of a vertex
/// block is `(site, clifford)` with the site index running over `plus` then `minus`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiberSpace {
    pub dimension: usize,
    pub half_width: f64,
    pub clifford_dim: usize,
    pub level_radius: f64,
    pub blocks: Vec<VertexFibers>,
}

impl FiberSpace {
    pub fn block_dim(&self, k: usize) -> usize {
        self.blocks[k].n_sites() * self.clifford_dim
    }

    pub fn total_dim(&self) -> usize {
        (0..self.blocks.len()).map(|k| self.block_dim(k)).sum()
    }
}

fn box_fits(set: &DeloneSet, site: usize, reach: f64) -> bool {
    let center = &set.points[site];
    set.window.bounds.iter().enumerate().all(|(k, b)| {
        set.periods[k].is_some() || (center[k] - reach >= b[0] - 1e-9 && center[k] + reach <= b[1] + 1e-9)
    })
}

/// `tau` itself when its box fits, otherwise the first deep witness of `v` with the
/// same leaf class (the same boundary point at the tree's resolution) whose box fits.
fn placed_witness(set: &DeloneSet, tree: &PatternTree, level: usize, idx: usize, tau: usize, reach: f64) -> Result<usize> {
    if box_fits(set, tau, reach) {
        return Ok(tau);
    }
    let v = tree.vertex(level, idx);
    let class = v.deep_witnesses.iter().position(|&w| w == tau).map(|k| v.deep_classes[k]);
    class
        .and_then(|cl| {
            v.deep_witnesses
                .iter()
                .zip(&v.deep_classes)
                .find(|(&w, &k)| k == cl && box_fits(set, w, reach))
                .map(|(&w, _)| w)
        })
        .ok_or_else(|| {
            Error::WindowTooSmall(format!(
                "no witness of vertex ({level}, {idx}) equivalent to site {tau} has its box of half-width {reach} in the sample"
            ))
        })
}

fn fiber(set: &DeloneSet, witness: usize, half_width: f64) -> Result<Fiber> {
    let center = &set.points[witness];
    let mut members: Vec<(Vec<f64>, usize)> = set
        .points
        .iter()
        .enumerate()
        .filter_map(|(j, p)| {
            let x = set.displacement(center, p);
            x.iter().all(|v| v.abs() <= half_width + 1e-9).then_some((x, j))
        })
        .collect();
    members.sort_by(|a, b| {
        a.0.iter().zip(&b.0).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let (positions, sites) = members.into_iter().unzip();
    Ok(Fiber { witness, sites, positions })
}

pub fn build_fiber_space(set: &DeloneSet, tree: &PatternTree, pair: &ChoicePair, half_width: f64) -> Result<FiberSpace> {
    build_fiber_space_truncated(set, tree, pair, half_width, tree.depth, 0.0)
}

/// Keeps vertices up to `max_level`; every witness box must stay `margin` inside the sample.
/// A witness too close to the edge is replaced by an equivalent one deeper inside.
pub fn build_fiber_space_truncated(
    set: &DeloneSet,
    tree: &PatternTree,
    pair: &ChoicePair,
    half_width: f64,
    max_level: usize,
    margin: f64,
) -> Result<FiberSpace> {
    if half_width < 0.0 {
        return Err(Error::InvalidParameter(format!("half-width {half_width} is negative")));
    }
    let mut blocks = Vec::new();
    for (level, idx) in tree.vertices() {
        if level > max_level {
            continue;
        }
        blocks.push(VertexFibers {
            level,
            index: idx,
            plus: fiber(set, placed_witness(set, tree, level, idx, pair.tau_plus[level][idx], half_width + margin)?, half_width)?,
            minus: fiber(set, placed_witness(set, tree, level, idx, pair.tau_minus[level][idx], half_width + margin)?, half_width)?,
        });
    }
    Ok(FiberSpace {
        dimension: set.dimension,
        half_width,
        clifford_dim: 1 << set.dimension,
        level_radius: tree.level_radius,
        blocks,
    })
}

/// `gamma^k = e_k ∧ + ι_{e_k}` on the exterior algebra, basis labelled by subsets as bitmasks.
pub fn clifford_generators(d: usize) -> Vec<CMat> {
    let n = 1usize << d;
    (0..d)
        .map(|k| {
            let mut g = linalg::zeros(n, n);
            for s in 0..n {
                let sign = if (s & ((1 << k) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                g[(s ^ (1 << k), s)] = c(sign, 0.0);
            }
            g
        })
        .collect()
}

/// Degree parity of the exterior algebra.
pub fn clifford_grading(d: usize) -> CMat {
    let n = 1usize << d;
    Mat::from_fn(n, n, |i, j| if i == j { c(if i.count_ones() % 2 == 0 { 1.0 } else { -1.0 }, 0.0) } else { c(0.0, 0.0) })
}

/// Operator commuting with the vertex decomposition, one dense block per vertex.
#[derive(Clone, Debug)]
pub struct BlockOperator {
    pub blocks: Vec<CMat>,
}

impl BlockOperator {
    pub fn apply(&self, v: &[Vec<C64>]) -> Vec<Vec<C64>> {
        self.blocks
            .iter()
            .zip(v)
            .map(|(b, x)| (0..b.nrows()).map(|i| (0..b.ncols()).map(|j| b[(i, j)] * x[j]).sum()).collect())
            .collect()
    }

    pub fn zip_with(&self, other: &BlockOperator, f: impl Fn(&CMat, &CMat) -> CMat) -> BlockOperator {
        BlockOperator { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(linalg::max_abs).fold(0.0, f64::max)
    }

    pub fn spectral_norm(&self) -> Result<f64> {
        self.blocks.iter().try_fold(0.0, |m, b| Ok(f64::max(m, linalg::spectral_norm(b)?)))
    }

    /// Dense matrix on the full space, blocks in vertex order.
    pub fn to_dense(&self) -> CMat {
        self.blocks.iter().fold(linalg::zeros(0, 0), |acc, b| linalg::direct_sum(&acc, b))
    }
}

fn vec_norm(v: &[Vec<C64>]) -> f64 {
    v.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `X = sum_k x_k ⊗ gamma^k`.
pub fn operator_x(fs: &FiberSpace) -> BlockOperator {
    let gammas = clifford_generators(fs.dimension);
    let blocks = fs
        .blocks
        .iter()
        .map(|b| {
            let x: Vec<&Vec<f64>> = b.positions().collect();
            let q = fs.clifford_dim;
            Mat::from_fn(x.len() * q, x.len() * q, |i, j| {
                if i / q != j / q {
                    return c(0.0, 0.0);
                }
                gammas.iter().enumerate().map(|(k, g)| g[(i % q, j % q)] * x[i / q][k]).sum()
            })
        })
        .collect();
    BlockOperator { blocks }
}

/// `κ`, the exterior-algebra parity on every site.
pub fn grading(fs: &FiberSpace) -> BlockOperator {
    let kappa = clifford_grading(fs.dimension);
    let blocks = fs.blocks.iter().map(|b| linalg::kron(&linalg::identity(b.n_sites()), &kappa)).collect();
    BlockOperator { blocks }
}

fn frame_weights(frame: &Frame, x: &[f64]) -> HashMap<Vec<i64>, f64> {
    frame.weights(x).into_iter().collect()
}

fn overlap(a: &HashMap<Vec<i64>, f64>, b: &HashMap<Vec<i64>, f64>) -> f64 {
    a.iter().filter_map(|(y, wa)| b.get(y).map(|wb| wa * wb)).sum()
}

/// Site-level connection blocks: `T_+[eta, xi] = zeta_|v| sum_y chi_y(eta) chi_y(xi)`
/// from the `+` fiber to the `-` fiber, and its transpose.
pub fn connection_blocks(fs: &FiberSpace, frame: &Frame, zeta: Zeta) -> Vec<CMat> {
    fs.blocks
        .par_iter()
        .map(|b| {
            let z = zeta.at(b.level, fs.level_radius);
            let (np, nm) = (b.plus.len(), b.minus.len());
            let mut t = linalg::zeros(np + nm, np + nm);
            if z == 0.0 {
                return t;
            }
            let wp: Vec<_> = b.plus.positions.iter().map(|x| frame_weights(frame, x)).collect();
            let wm: Vec<_> = b.minus.positions.iter().map(|x| frame_weights(frame, x)).collect();
            for (i, xm) in b.minus.positions.iter().enumerate() {
                for (j, xp) in b.plus.positions.iter().enumerate() {
                    let gap: Vec<f64> = xm.iter().zip(xp).map(|(a, b)| a - b).collect();
                    if norm(&gap) >= 2.0 * frame.eps {
                        continue;
                    }
                    let v = z * overlap(&wm[i], &wp[j]);
                    t[(np + i, j)] = c(v, 0.0);
                    t[(j, np + i)] = c(v, 0.0);
                }
            }
            t
        })
        .collect()
}

/// `T = T_scalar ⊗ 1` on the Clifford factor.
pub fn operator_t(fs: &FiberSpace, frame: &Frame, zeta: Zeta) -> BlockOperator {
    let one = linalg::identity(fs.clifford_dim);
    BlockOperator { blocks: connection_blocks(fs, frame, zeta).iter().map(|t| linalg::kron(t, &one)).collect() }
}

/// Frame with grid pitch `eps / sqrt(d)`, rejected unless `eps < r / 2`.
pub fn product_frame(set: &DeloneSet, eps: f64) -> Result<Frame> {
    let pitch = eps / (set.dimension as f64).sqrt();
    Ok(s_cover_frame(set, eps, pitch, None)?.0)
}

/// `max |Xκ + κX|` and `max |Tκ - κT|`.
pub fn grading_defects(fs: &FiberSpace, x: &BlockOperator, t: &BlockOperator) -> (f64, f64) {
    let k = grading(fs);
    let xk = x.zip_with(&k, |a, b| a * b).zip_with(&k.zip_with(x, |a, b| a * b), |a, b| a + b);
    let tk = t.zip_with(&k, |a, b| a * b).zip_with(&k.zip_with(t, |a, b| a * b), |a, b| a - b);
    (xk.max_abs(), tk.max_abs())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnticommutatorReport {
    pub max_ratio: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// `max ||(XT - TX) κ φ|| / ||T κ φ||` over random `φ`.
pub fn anticommutator_estimate(
    fs: &FiberSpace,
    x: &BlockOperator,
    t: &BlockOperator,
    trials: usize,
    seed: u64,
) -> Result<AnticommutatorReport> {
    let kappa = grading(fs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut max_ratio, mut evaluated, mut skipped) = (0.0f64, 0, 0);
    for _ in 0..trials {
        let phi: Vec<Vec<C64>> = (0..fs.blocks.len())
            .map(|k| (0..fs.block_dim(k)).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
            .collect();
        let psi = kappa.apply(&phi);
        let tpsi = t.apply(&psi);
        let denom = vec_norm(&tpsi);
        if denom <= 1e-12 * vec_norm(&phi) {
            skipped += 1;
            continue;
        }
        let xt = x.apply(&tpsi);
        let tx = t.apply(&x.apply(&psi));
        let diff: Vec<Vec<C64>> = xt.iter().zip(&tx).map(|(a, b)| a.iter().zip(b).map(|(u, v)| u - v).collect()).collect();
        max_ratio = max_ratio.max(vec_norm(&diff) / denom);
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::Inconclusive(format!("T κ φ vanished in all {trials} trials")));
    }
    Ok(AnticommutatorReport { max_ratio, evaluated, skipped })
}

/// Largest of `||[T, f](1 + X^2)^{-δ}||` and `||(1 + X^2)^{-δ}[T, f]||` over vertex blocks,
/// `f` given per site in block order.
pub fn damped_commutator_norm(fs: &FiberSpace, connection: &[CMat], f: &[Vec<f64>], delta: f64) -> Result<f64> {
    let mut best = 0.0f64;
    for ((b, t), fv) in fs.blocks.iter().zip(connection).zip(f) {
        let w: Vec<f64> = b.positions().map(|x| (1.0 + x.iter().map(|v| v * v).sum::<f64>()).powf(-delta)).collect();
        let n = t.nrows();
        let comm = Mat::from_fn(n, n, |i, j| t[(i, j)] * (fv[j] - fv[i]));
        if linalg::max_abs(&comm) == 0.0 {
            continue;
        }
        let right = Mat::from_fn(n, n, |i, j| comm[(i, j)] * w[j]);
        let left = Mat::from_fn(n, n, |i, j| comm[(i, j)] * w[i]);
        best = best.max(linalg::spectral_norm(&right)?).max(linalg::spectral_norm(&left)?);
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanRow {
    pub depth: usize,
    pub dimension: usize,
    pub half_width: f64,
    pub norm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanReport {
    pub zeta: Zeta,
    pub delta: f64,
    pub rows: Vec<ScanRow>,
    /// Last norm within 10% of the largest earlier one.
    pub non_diverging: bool,
    /// Last norm over first norm.
    pub growth: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanConfig {
    pub depths: Vec<usize>,
    pub delta: f64,
    pub zeta: Zeta,
    pub eps: f64,
    pub seed: u64,
    /// Level and class of the cylinder whose indicator is commuted with `T`.
    pub cylinder: (usize, usize),
}

/// Commutator norms of `T` with a cylinder indicator at truncation depths `n`,
/// fiber half-width `(n + 2) R`.
pub fn log_commutator_scan(set: &DeloneSet, cfg: &ScanConfig) -> Result<ScanReport> {
    if cfg.depths.len() < 3 {
        return Err(Error::Inconclusive(format!("{} depths; a trend needs at least 3", cfg.depths.len())));
    }
    if cfg.delta <= 0.0 {
        return Err(Error::InvalidParameter(format!("delta = {} must be positive", cfg.delta)));
    }
    let frame = product_frame(set, cfg.eps)?;
    let (f_level, f_index) = cfg.cylinder;
    let mut rows: Vec<ScanRow> = cfg
        .depths
        .par_iter()
        .map(|&n| {
            let tree = build_tree(set, n + 2 + f_level, None)?;
            let r = tree.level_radius;
            if f_level > n + 2 || f_index >= tree.levels[f_level].len() {
                return Err(Error::InvalidParameter(format!("no cylinder ({f_level}, {f_index})")));
            }
            let pair = choice_pair(&tree, cfg.seed);
            let half_width = (n + 2) as f64 * r;
            let fs = build_fiber_space_truncated(set, &tree, &pair, half_width, n, f_level as f64 * r)?;
            let indicator = cylinder_indicator(set, &tree, f_level, f_index);
            let f: Vec<Vec<f64>> = fs
                .blocks
                .iter()
                .map(|b| b.sites().map(|&j| indicator[j].expect("margin keeps cylinders inside the sample")).collect())
                .collect();
            let t = connection_blocks(&fs, &frame, cfg.zeta);
            let norm = damped_commutator_norm(&fs, &t, &f, cfg.delta)?;
            Ok(ScanRow { depth: n, dimension: fs.total_dim(), half_width, norm })
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| r.depth);
    let last = rows.last().expect("at least 3 rows").norm;
    let earlier = rows[..rows.len() - 1].iter().map(|r| r.norm).fold(0.0, f64::max);
    let first = rows[0].norm;
    let growth = if first > 0.0 { last / first } else if last > 0.0 { f64::INFINITY } else { 1.0 };
    Ok(ScanReport { zeta: cfg.zeta, delta: cfg.delta, rows, non_diverging: last <= 1.1 * earlier, growth })
}

pub fn scan_to_csv(report: &ScanReport) -> String {
    let mut out = String::from("depth,dimension,half_width,norm\n");
    for r in &report.rows {
        out.push_str(&format!("{},{},{},{}\n", r.depth, r.dimension, r.half_width, r.norm));
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductSpectrum {
    pub eigenvalues: Vec<f64>,
    pub gap_at_zero: f64,
    /// `max |λ_i + λ_{n-1-i}|` over the sorted spectrum.
    pub asymmetry: f64,
    /// `(Λ, #{|λ| <= Λ})` at integer `Λ`.
    pub counting: Vec<(f64, usize)>,
}

/// Spectrum of `D = X + Tκ`, diagonalized block by block.
pub fn product_spectrum(fs: &FiberSpace, x: &BlockOperator, t: &BlockOperator) -> Result<ProductSpectrum> {
    let kappa = grading(fs);
    let d = x.zip_with(&t.zip_with(&kappa, |a, b| a * b), |a, b| a + b);
    let mut eigenvalues: Vec<f64> = Vec::new();
    for block in &d.blocks {
        eigenvalues.extend(linalg::eigvalsh(block)?);
    }
    eigenvalues.sort_by(f64::total_cmp);
    let n = eigenvalues.len();
    let asymmetry = (0..n).map(|i| (eigenvalues[i] + eigenvalues[n - 1 - i]).abs()).fold(0.0, f64::max);
    let gap_at_zero = eigenvalues.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    let top = eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max).ceil() as usize;
    let counting = (1..=top.max(1))
        .map(|l| (l as f64, eigenvalues.iter().filter(|v| v.abs() <= l as f64).count()))
        .collect();
    Ok(ProductSpectrum { eigenvalues, gap_at_zero, asymmetry, counting })
}

/// `max |[T, u_n]|` per vertex block, `u_n` the multiplication by `sum_{y in I_n} chi_y^2`
/// with `I_n` the frame labels meeting the fibers of vertices at level `<= n`.
pub fn unit_commutators(fs: &FiberSpace, frame: &Frame, connection: &[CMat], n: usize) -> Vec<(usize, usize, f64)> {
    let mut labels: std::collections::HashSet<Vec<i64>> = std::collections::HashSet::new();
    for b in fs.blocks.iter().filter(|b| b.level <= n) {
        for x in b.positions() {
            labels.extend(frame.weights(x).into_iter().map(|(y, _)| y));
        }
    }
    let unit = |x: &[f64]| -> f64 { frame.weights(x).iter().filter(|(y, _)| labels.contains(y)).map(|(_, w)| w * w).sum() };
    fs.blocks
        .iter()
        .zip(connection)
        .map(|(b, t)| {
            let u: Vec<f64> = b.positions().map(|x| unit(x)).collect();
            let m = t.nrows();
            let defect = (0..m)
                .flat_map(|i| (0..m).map(move |j| (i, j)))
                .map(|(i, j)| (t[(i, j)] * (u[j] - u[i])).norm())
                .fold(0.0, f64::max);
            (b.level, b.index, defect)
        })
        .collect()
}
