//! Pattern trees of finite-local-complexity samples, their ultrametric boundary,
//! choice functions and the Pearson-Bellissard type Dirac operator.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::delone::{DeloneSet, Patch, PatchExtractor};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};

/// Minimum number of eligible centres for the default depth.
pub const MIN_CENTERS: usize = 20;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Vertex {
    pub level: usize,
    pub patch: Patch,
    /// Index of the parent in the previous level.
    pub parent: Option<usize>,
    /// Sites realizing the pattern, sorted lexicographically by coordinates.
    pub witnesses: Vec<usize>,
    /// Witnesses whose ball of radius `depth * level_radius` lies in the window.
    pub deep_witnesses: Vec<usize>,
    /// Leaf class of each deep witness: equal classes are indistinguishable boundary points.
    pub deep_classes: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatternTree {
    pub level_radius: f64,
    pub depth: usize,
    pub levels: Vec<Vec<Vertex>>,
    /// `(level, parent index, child index)` with the child on `level + 1`.
    pub edges: Vec<(usize, usize, usize)>,
}

impl PatternTree {
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.len()).collect()
    }

    pub fn n_vertices(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    /// `(level, index)` of every vertex in level order.
    pub fn vertices(&self) -> Vec<(usize, usize)> {
        self.levels.iter().enumerate().flat_map(|(n, l)| (0..l.len()).map(move |i| (n, i))).collect()
    }

    pub fn vertex(&self, level: usize, index: usize) -> &Vertex {
        &self.levels[level][index]
    }

    /// Index at `level` of the vertex with the given pattern.
    pub fn find(&self, level: usize, patch: &Patch) -> Option<usize> {
        self.levels.get(level)?.iter().position(|v| v.patch == *patch)
    }

    /// Path from the root to the vertex, as indices per level.
    pub fn path(&self, level: usize, index: usize) -> Vec<usize> {
        let mut out = vec![index];
        let mut cur = (level, index);
        while let Some(p) = self.levels[cur.0][cur.1].parent {
            out.push(p);
            cur = (cur.0 - 1, p);
        }
        out.reverse();
        out
    }
}

fn lexicographic(set: &DeloneSet, sites: &mut [usize]) {
    sites.sort_by(|&a, &b| {
        set.points[a].iter().zip(&set.points[b]).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
}

/// Largest `n` for which at least [`MIN_CENTERS`] sites have their `n * level_radius` ball in the window.
pub fn default_depth(set: &DeloneSet, level_radius: f64) -> usize {
    let ex = PatchExtractor::new(set, level_radius);
    let mut n = 0;
    loop {
        let radius = (n + 1) as f64 * level_radius;
        let count = (0..set.len()).filter(|&i| ex.eligible(i, radius)).count();
        if count < MIN_CENTERS || n >= 64 {
            return n;
        }
        n += 1;
    }
}

/// Patch classes at radii `n * level_radius` for `n = 0..=depth`, linked by restriction.
///
/// `level_radius` defaults to the covering radius of the set.
pub fn build_tree(set: &DeloneSet, depth: usize, level_radius: Option<f64>) -> Result<PatternTree> {
    let step = level_radius.unwrap_or(set.big_r);
    if step <= 0.0 {
        return Err(Error::InvalidParameter(format!("level radius {step} must be positive")));
    }
    let max_radius = depth as f64 * step;
    let ex = PatchExtractor::new(set, max_radius.max(step));
    let deep: Vec<bool> = (0..set.len()).map(|i| ex.eligible(i, max_radius)).collect();
    if !deep.iter().any(|&b| b) {
        return Err(Error::WindowTooSmall(format!("no site has its ball of radius {max_radius} in the window")));
    }
    let mut levels: Vec<Vec<Vertex>> = Vec::with_capacity(depth + 1);
    let mut edges = Vec::new();
    let mut previous: Vec<Option<usize>> = vec![None; set.len()];
    for n in 0..=depth {
        let radius = n as f64 * step;
        let mut classes: BTreeMap<Vec<i64>, (Patch, Vec<usize>)> = BTreeMap::new();
        for i in (0..set.len()).filter(|&i| ex.eligible(i, radius)) {
            let p = ex.patch(i, radius);
            classes.entry(p.canonical_key.clone()).or_insert_with(|| (p, Vec::new())).1.push(i);
        }
        let mut current: Vec<Option<usize>> = vec![None; set.len()];
        let mut level = Vec::with_capacity(classes.len());
        for (idx, (_, (patch, mut witnesses))) in classes.into_iter().enumerate() {
            lexicographic(set, &mut witnesses);
            let parent = if n == 0 { None } else { previous[witnesses[0]] };
            if n > 0 {
                let parent = parent.expect("witness eligible at a larger radius is eligible at a smaller one");
                if witnesses.iter().any(|&w| previous[w] != Some(parent)) {
                    return Err(Error::InvalidParameter(format!(
                        "patch tolerance {} separates restrictions of one level-{n} pattern",
                        set.tol_patch
                    )));
                }
                edges.push((n - 1, parent, idx));
            }
            for &w in &witnesses {
                current[w] = Some(idx);
            }
            let deep_witnesses = witnesses.iter().copied().filter(|&w| deep[w]).collect();
            level.push(Vertex { level: n, patch, parent, witnesses, deep_witnesses, deep_classes: Vec::new() });
        }
        if n == 0 && level.len() != 1 {
            return Err(Error::InvalidParameter("level 0 must have a single root".into()));
        }
        levels.push(level);
        previous = current;
    }
    for level in &mut levels {
        for v in level.iter_mut() {
            v.deep_classes = v.deep_witnesses.iter().map(|&w| previous[w].expect("deep witness has a leaf")).collect();
        }
    }
    Ok(PatternTree { level_radius: step, depth, levels, edges })
}

/// `rho = e^{-n* R}` for the deepest shared level `n*`; `saturated` when the
/// patterns agree through the full depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UltrametricValue {
    pub value: f64,
    pub shared_level: usize,
    pub saturated: bool,
}

/// Ultrametric distance between the boundary points `set - x_a` and `set - x_b`.
pub fn ultrametric(set: &DeloneSet, a: usize, b: usize, depth: usize, level_radius: f64) -> Result<UltrametricValue> {
    let max_radius = depth as f64 * level_radius;
    let ex = PatchExtractor::new(set, max_radius.max(level_radius));
    for &i in &[a, b] {
        if i >= set.len() {
            return Err(Error::NotASite(format!("index {i}")));
        }
        if !ex.eligible(i, max_radius) {
            return Err(Error::InsufficientSample(format!("site {i} lacks a radius-{max_radius} patch")));
        }
    }
    let mut shared = 0;
    for n in 1..=depth {
        let radius = n as f64 * level_radius;
        if ex.patch(a, radius) != ex.patch(b, radius) {
            break;
        }
        shared = n;
    }
    Ok(UltrametricValue {
        value: (-(shared as f64) * level_radius).exp(),
        shared_level: shared,
        saturated: shared == depth,
    })
}

/// Choice functions `tau_+`, `tau_-` as witness sites per vertex.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChoicePair {
    pub tau_plus: Vec<Vec<usize>>,
    pub tau_minus: Vec<Vec<usize>>,
    /// `tau_+(v)` and `tau_-(v)` are the same boundary point up to the tree depth.
    pub coincident: Vec<Vec<bool>>,
    pub seed: u64,
}

impl ChoicePair {
    pub fn any_coincident(&self) -> bool {
        self.coincident.iter().flatten().any(|&b| b)
    }

    pub fn all_coincident(&self) -> bool {
        self.coincident.iter().flatten().all(|&b| b)
    }
}

/// `tau_+` is the lexicographically smallest witness, preferring deep ones.
/// `tau_-` is the next deep witness with a different leaf pattern for seed 0,
/// a seeded draw among those otherwise, and `tau_+` itself when none exists.
pub fn choice_pair(tree: &PatternTree, seed: u64) -> ChoicePair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    let mut flags = Vec::new();
    for level in &tree.levels {
        let (mut p, mut m, mut f) = (Vec::new(), Vec::new(), Vec::new());
        for v in level {
            let first = v.deep_witnesses.first().copied().unwrap_or(v.witnesses[0]);
            let rest: Vec<usize> = match v.deep_classes.first() {
                Some(&leaf) => {
                    v.deep_witnesses.iter().zip(&v.deep_classes).filter(|(_, &k)| k != leaf).map(|(&w, _)| w).collect()
                }
                None => Vec::new(),
            };
            let second = if rest.is_empty() {
                first
            } else if seed == 0 {
                rest[0]
            } else {
                *rest.choose(&mut rng).expect("nonempty")
            };
            p.push(first);
            m.push(second);
            f.push(first == second);
        }
        plus.push(p);
        minus.push(m);
        flags.push(f);
    }
    ChoicePair { tau_plus: plus, tau_minus: minus, coincident: flags, seed }
}

/// `tau(v)` lies in the cylinder of `v`: its pattern at level `|v|` is `v`.
pub fn in_cylinder(set: &DeloneSet, tree: &PatternTree, site: usize, level: usize, index: usize) -> bool {
    let radius = level as f64 * tree.level_radius;
    let ex = PatchExtractor::new(set, radius.max(tree.level_radius));
    ex.eligible(site, radius) && ex.patch(site, radius) == tree.levels[level][index].patch
}

/// Indicator of the cylinder of vertex `(level, index)` on every site; `None` where
/// the ball of radius `level * R` leaves the sample.
pub fn cylinder_indicator(set: &DeloneSet, tree: &PatternTree, level: usize, index: usize) -> Vec<Option<f64>> {
    let radius = level as f64 * tree.level_radius;
    let ex = PatchExtractor::new(set, radius.max(tree.level_radius));
    let target = &tree.levels[level][index].patch;
    (0..set.len())
        .map(|i| ex.eligible(i, radius).then(|| if ex.patch(i, radius) == *target { 1.0 } else { 0.0 }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zeta {
    /// `log(1 + n)`.
    Log,
    /// `e^{n R}`.
    Exp,
}

impl Zeta {
    pub fn at(self, n: usize, level_radius: f64) -> f64 {
        match self {
            Zeta::Log => (1.0 + n as f64).ln(),
            Zeta::Exp => (n as f64 * level_radius).exp(),
        }
    }
}

/// `D` on `l^2(V) ⊗ C^2`, vertex `k` (level order) owning rows `2k, 2k + 1`.
#[derive(Clone, Debug)]
pub struct DiracOperator {
    pub matrix: CMat,
    pub vertex_levels: Vec<usize>,
    pub zeta: Zeta,
    pub level_radius: f64,
}

pub fn pb_operator(tree: &PatternTree, zeta: Zeta) -> DiracOperator {
    let levels: Vec<usize> = tree.vertices().into_iter().map(|(n, _)| n).collect();
    let mut m = linalg::zeros(2 * levels.len(), 2 * levels.len());
    for (k, &n) in levels.iter().enumerate() {
        let z = c(zeta.at(n, tree.level_radius), 0.0);
        m[(2 * k, 2 * k + 1)] = z;
        m[(2 * k + 1, 2 * k)] = z;
    }
    DiracOperator { matrix: m, vertex_levels: levels, zeta, level_radius: tree.level_radius }
}

/// Sorted distinct values of `values` with multiplicities, merged within `tol`.
pub fn multiplicities(values: &[f64], tol: f64) -> Vec<(f64, usize)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    for x in v {
        match out.last_mut() {
            Some((y, k)) if (x - *y).abs() <= tol => *k += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

/// `sup_v zeta_|v| |f(tau_+(v)) - f(tau_-(v))|`.
pub fn commutator_norm(tree: &PatternTree, pair: &ChoicePair, f: &dyn Fn(usize) -> f64, zeta: Zeta) -> f64 {
    tree.vertices()
        .into_iter()
        .map(|(n, i)| zeta.at(n, tree.level_radius) * (f(pair.tau_plus[n][i]) - f(pair.tau_minus[n][i])).abs())
        .fold(0.0, f64::max)
}

/// `[D, pi(f)]` as a matrix, for checking [`commutator_norm`].
pub fn commutator_matrix(tree: &PatternTree, pair: &ChoicePair, f: &dyn Fn(usize) -> f64, dirac: &DiracOperator) -> CMat {
    let diag: Vec<f64> = tree
        .vertices()
        .into_iter()
        .flat_map(|(n, i)| [f(pair.tau_plus[n][i]), f(pair.tau_minus[n][i])])
        .collect();
    let pi = linalg::diagonal(&diag.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>());
    &(&dirac.matrix * &pi) - &(&pi * &dirac.matrix)
}

/// `max_n zeta_n sup_{p in V_n} diam C_p`, with diameters estimated from deep witnesses.
///
/// Finite exactly when the hypothesis `zeta_n <= C (sup diam C_p)^{-1}` holds on the sample.
pub fn zeta_constant(set: &DeloneSet, tree: &PatternTree, zeta: Zeta, max_witnesses: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (n, level) in tree.levels.iter().enumerate() {
        let z = zeta.at(n, tree.level_radius);
        for v in level {
            let w: Vec<usize> = v.deep_witnesses.iter().copied().take(max_witnesses).collect();
            let mut diam: f64 = 0.0;
            for a in 0..w.len() {
                for b in a + 1..w.len() {
                    diam = diam.max(ultrametric(set, w[a], w[b], tree.depth, tree.level_radius)?.value);
                }
            }
            if w.len() < 2 {
                diam = (-(n as f64) * tree.level_radius).exp();
            }
            worst = worst.max(z * diam);
        }
    }
    Ok(worst)
}

/// `sum_{|v| <= level} [chi_p(tau_+(v)) - chi_p(tau_-(v))]` for the cylinder of `p` at `level`.
pub fn quasi_hom_pairing(set: &DeloneSet, tree: &PatternTree, pair: &ChoicePair, p: &Patch, level: usize) -> Result<i64> {
    if level > tree.depth {
        return Err(Error::InvalidParameter(format!("level {level} exceeds tree depth {}", tree.depth)));
    }
    if tree.find(level, p).is_none() {
        return Err(Error::InvalidParameter(format!("pattern is not a vertex at level {level}")));
    }
    let radius = level as f64 * tree.level_radius;
    let ex = PatchExtractor::new(set, radius.max(tree.level_radius));
    let chi = |site: usize| -> Result<i64> {
        if !ex.eligible(site, radius) {
            return Err(Error::InsufficientSample(format!("witness {site} lacks a radius-{radius} patch")));
        }
        Ok((ex.patch(site, radius) == *p) as i64)
    };
    let mut total = 0;
    for n in 0..=level {
        for i in 0..tree.levels[n].len() {
            total += chi(pair.tau_plus[n][i])? - chi(pair.tau_minus[n][i])?;
        }
    }
    Ok(total)
}

#[derive(Serialize)]
struct ExportVertex<'a> {
    id: String,
    level: usize,
    key: &'a [i64],
    size: usize,
    witness: &'a [f64],
    multiplicity: usize,
}

#[derive(Serialize)]
struct ExportTree<'a> {
    level_radius: f64,
    depth: usize,
    level_sizes: Vec<usize>,
    vertices: Vec<ExportVertex<'a>>,
    edges: Vec<(String, String)>,
}

fn vertex_id(level: usize, index: usize) -> String {
    format!("v{level}_{index}")
}

pub fn tree_to_json(set: &DeloneSet, tree: &PatternTree) -> Result<String> {
    let vertices = tree
        .vertices()
        .into_iter()
        .map(|(n, i)| {
            let v = &tree.levels[n][i];
            ExportVertex {
                id: vertex_id(n, i),
                level: n,
                key: &v.patch.canonical_key,
                size: v.patch.len(),
                witness: &set.points[v.witnesses[0]],
                multiplicity: v.witnesses.len(),
            }
        })
        .collect();
    let edges = tree.edges.iter().map(|&(n, p, ch)| (vertex_id(n, p), vertex_id(n + 1, ch))).collect();
    let out = ExportTree { level_radius: tree.level_radius, depth: tree.depth, level_sizes: tree.level_sizes(), vertices, edges };
    Ok(serde_json::to_string_pretty(&out)?)
}

pub fn tree_to_dot(tree: &PatternTree) -> String {
    let mut s = String::from("digraph pattern_tree {\n  node [shape=circle];\n");
    for (n, i) in tree.vertices() {
        let v = &tree.levels[n][i];
        let _ = writeln!(s, "  {} [label=\"{}:{}\\n#{}\"];", vertex_id(n, i), n, i, v.witnesses.len());
    }
    for &(n, p, ch) in &tree.edges {
        let _ = writeln!(s, "  {} -> {};", vertex_id(n, p), vertex_id(n + 1, ch));
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delone::{enumerate_patches, generate_cut_and_project, generate_periodic, CutProjectScheme, Window};
    use proptest::prelude::*;

    fn fibonacci(len: f64) -> DeloneSet {
        generate_cut_and_project(CutProjectScheme::Fibonacci, &Window::cube(1, 0.0, len)).unwrap()
    }

    #[test]
    fn periodic_tree_is_a_single_path() {
        let set = generate_periodic(2, 1.0, &Window::centered(2, 6.0)).unwrap();
        let tree = build_tree(&set, 3, None).unwrap();
        assert_eq!(tree.level_sizes(), vec![1; 4]);
        let pair = choice_pair(&tree, 0);
        assert!(pair.all_coincident());
        let d = pb_operator(&tree, Zeta::Log);
        let vals = linalg::eigvalsh(&d.matrix).unwrap();
        let want: Vec<f64> = {
            let mut w: Vec<f64> = (0..4).flat_map(|n| [(1.0 + n as f64).ln(), -(1.0 + n as f64).ln()]).collect();
            w.sort_by(f64::total_cmp);
            w
        };
        assert!(vals.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));
        let p = &tree.levels[2][0].patch;
        assert_eq!(quasi_hom_pairing(&set, &tree, &pair, p, 2).unwrap(), 0);
        let centre = set.index_of(&[0.0, 0.0]).unwrap();
        let other = set.index_of(&[1.0, -2.0]).unwrap();
        assert!(ultrametric(&set, centre, other, 3, tree.level_radius).unwrap().saturated);
    }

    #[test]
    fn depth_zero_is_the_root() {
        let tree = build_tree(&fibonacci(50.0), 0, None).unwrap();
        assert_eq!(tree.level_sizes(), vec![1]);
        assert!(tree.edges.is_empty());
    }

    #[test]
    fn too_deep_is_rejected() {
        assert!(matches!(build_tree(&fibonacci(10.0), 20, None), Err(Error::WindowTooSmall(_))));
    }

    #[test]
    fn fibonacci_levels_match_patch_classes() {
        let set = fibonacci(400.0);
        let tree = build_tree(&set, 6, None).unwrap();
        for n in 0..=6 {
            let oracle = enumerate_patches(&set, n as f64 * tree.level_radius);
            assert_eq!(tree.levels[n].len(), oracle.len(), "level {n}");
            for (v, (p, count)) in tree.levels[n].iter().zip(&oracle) {
                assert_eq!(v.patch, *p);
                assert_eq!(v.witnesses.len(), *count);
            }
        }
        for &(n, p, ch) in &tree.edges {
            let child = &tree.levels[n + 1][ch].patch;
            assert_eq!(child.restrict(n as f64 * tree.level_radius, set.tol_patch), tree.levels[n][p].patch);
        }
    }

    #[test]
    fn fibonacci_pb_multiplicities_equal_level_sizes() {
        let set = fibonacci(300.0);
        let tree = build_tree(&set, 4, None).unwrap();
        let d = pb_operator(&tree, Zeta::Log);
        let vals = linalg::eigvalsh(&d.matrix).unwrap();
        let mult = multiplicities(&vals, 1e-9);
        let sizes = tree.level_sizes();
        for (n, &size) in sizes.iter().enumerate() {
            let z = (1.0 + n as f64).ln();
            let k = |t: f64| mult.iter().find(|(v, _)| (v - t).abs() < 1e-9).map(|m| m.1).unwrap_or(0);
            if n == 0 {
                assert_eq!(k(0.0), 2 * size);
            } else {
                assert_eq!(k(z), size);
                assert_eq!(k(-z), size);
            }
        }
        let e = pb_operator(&build_tree(&set, 2, None).unwrap(), Zeta::Exp);
        let vals = linalg::eigvalsh(&e.matrix).unwrap();
        assert!((vals.last().unwrap() - (2.0 * tree.level_radius).exp()).abs() < 1e-9);
    }

    #[test]
    fn choice_functions_live_in_their_cylinders() {
        let set = fibonacci(300.0);
        let tree = build_tree(&set, 5, None).unwrap();
        let pair = choice_pair(&tree, 1);
        for (n, i) in tree.vertices() {
            assert!(in_cylinder(&set, &tree, pair.tau_plus[n][i], n, i));
            assert!(in_cylinder(&set, &tree, pair.tau_minus[n][i], n, i));
        }
        assert!(pair.coincident[tree.depth].iter().all(|&b| b));
        assert!(pair.coincident[1..tree.depth].iter().flatten().any(|&b| !b));
        for (n, i) in tree.vertices() {
            if !pair.coincident[n][i] {
                let rho = ultrametric(&set, pair.tau_plus[n][i], pair.tau_minus[n][i], tree.depth, tree.level_radius).unwrap();
                assert!(!rho.saturated && rho.shared_level >= n);
            }
        }
        let again = choice_pair(&tree, 1);
        assert_eq!(pair.tau_minus, again.tau_minus);
    }

    #[test]
    fn fibonacci_distinct_first_patches_are_far_apart() {
        let set = fibonacci(200.0);
        let tree = build_tree(&set, 4, None).unwrap();
        let k = tree.levels.iter().position(|l| l.len() >= 2).unwrap();
        let a = tree.levels[k][0].deep_witnesses[0];
        let b = tree.levels[k][1].deep_witnesses[0];
        let rho = ultrametric(&set, a, b, 4, tree.level_radius).unwrap();
        assert_eq!(rho.shared_level, k - 1);
        assert!((rho.value - (-((k - 1) as f64) * tree.level_radius).exp()).abs() < 1e-15);
        let c = tree.levels[k][0].deep_witnesses[1];
        let rho = ultrametric(&set, a, c, 4, tree.level_radius).unwrap();
        assert!(rho.value <= (-(k as f64) * tree.level_radius).exp() + 1e-15);
        assert!(ultrametric(&set, a, a, 4, tree.level_radius).unwrap().saturated);
    }

    #[test]
    fn commutator_norm_matches_matrix_and_lipschitz_bound() {
        let set = fibonacci(300.0);
        let tree = build_tree(&set, 5, None).unwrap();
        let pair = choice_pair(&tree, 0);
        let d = pb_operator(&tree, Zeta::Log);
        let reference = tree.levels[5][0].deep_witnesses[0];
        let f = |site: usize| ultrametric(&set, reference, site, 5, tree.level_radius).unwrap().value;
        let formula = commutator_norm(&tree, &pair, &f, Zeta::Log);
        let matrix = linalg::spectral_norm(&commutator_matrix(&tree, &pair, &f, &d)).unwrap();
        assert!((formula - matrix).abs() < 1e-12);
        let bound = zeta_constant(&set, &tree, Zeta::Log, 8).unwrap();
        assert!(formula <= bound + 1e-12, "{formula} > {bound}");
        assert_eq!(commutator_norm(&tree, &pair, &|_| 3.0, Zeta::Log), 0.0);
        let p = &tree.levels[2][1].patch;
        let radius = 2.0 * tree.level_radius;
        let indicator = |site: usize| (crate::delone::patch_at(&set, &set.points[site], radius).map(|q| q == *p).unwrap_or(false)) as i64 as f64;
        assert!(commutator_norm(&tree, &pair, &indicator, Zeta::Log) <= (3.0f64).ln() + 1e-12);
    }

    #[test]
    fn pairing_is_additive_and_detects_engineered_pairs() {
        let set = fibonacci(300.0);
        let tree = build_tree(&set, 4, None).unwrap();
        let pair = choice_pair(&tree, 0);
        let total: i64 = tree.levels[3].iter().map(|v| quasi_hom_pairing(&set, &tree, &pair, &v.patch, 3).unwrap()).sum();
        assert_eq!(total, 0);
        let mut engineered = pair.clone();
        for n in 0..engineered.tau_minus.len() {
            engineered.tau_minus[n] = engineered.tau_plus[n].clone();
        }
        // A level-1 vertex with two children; move tau_- into the second child.
        let (parent, kids) = (0..tree.levels[1].len())
            .map(|i| (i, tree.edges.iter().filter(|e| e.0 == 1 && e.1 == i).map(|e| e.2).collect::<Vec<_>>()))
            .find(|(_, k)| k.len() >= 2)
            .unwrap();
        let plus_child = tree.levels[2].iter().position(|v| v.witnesses.contains(&engineered.tau_plus[1][parent])).unwrap();
        let other = *kids.iter().find(|&&k| k != plus_child).unwrap();
        engineered.tau_minus[1][parent] = tree.levels[2][other].deep_witnesses[0];
        let p = &tree.levels[2][plus_child].patch;
        assert_eq!(quasi_hom_pairing(&set, &tree, &engineered, p, 2).unwrap(), 1);
        assert_eq!(quasi_hom_pairing(&set, &tree, &engineered, &tree.levels[2][other].patch, 2).unwrap(), -1);
        let foreign = Patch::new(0.0, vec![vec![0.0], vec![0.3]], set.tol_patch);
        assert!(quasi_hom_pairing(&set, &tree, &pair, &foreign, 1).is_err());
    }

    #[test]
    fn exports_list_every_vertex() {
        let set = fibonacci(100.0);
        let tree = build_tree(&set, 3, None).unwrap();
        let json: serde_json::Value = serde_json::from_str(&tree_to_json(&set, &tree).unwrap()).unwrap();
        assert_eq!(json["vertices"].as_array().unwrap().len(), tree.n_vertices());
        assert_eq!(json["edges"].as_array().unwrap().len(), tree.n_vertices() - 1);
        let dot = tree_to_dot(&tree);
        assert_eq!(dot.matches("->").count(), tree.n_vertices() - 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn strong_triangle_inequality(a in 0usize..1000, b in 0usize..1000, c in 0usize..1000) {
            let set = fibonacci(200.0);
            let depth = 4;
            let step = set.big_r;
            let ex = PatchExtractor::new(&set, depth as f64 * step);
            let deep: Vec<usize> = (0..set.len()).filter(|&i| ex.eligible(i, depth as f64 * step)).collect();
            let pick = |k: usize| deep[k % deep.len()];
            let (x, y, z) = (pick(a), pick(b), pick(c));
            let rho = |p, q| ultrametric(&set, p, q, depth, step).unwrap().value;
            prop_assert!(rho(x, z) <= rho(x, y).max(rho(y, z)) + 1e-15);
            prop_assert_eq!(rho(x, y), rho(y, x));
        }
    }
}
