use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{min_pairwise_distance, norm, verify_delone, DeloneSet, Provenance, SpatialIndex, Window};
use crate::error::{Error, Result};

const GOLDEN: f64 = 1.618_033_988_749_895;

/// Scaled integer lattice `spacing * Z^d` clipped to `window`.
pub fn generate_periodic(d: usize, spacing: f64, window: &Window) -> Result<DeloneSet> {
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidParameter(format!("dimension {d} not in 1..=3")));
    }
    if spacing <= 0.0 || !spacing.is_finite() {
        return Err(Error::InvalidParameter(format!("spacing {spacing} must be positive")));
    }
    if window.dim() != d {
        return Err(Error::DimensionMismatch(format!("window of dimension {} for d={d}", window.dim())));
    }
    let ranges: Vec<(i64, i64)> = window
        .bounds
        .iter()
        .map(|b| ((b[0] / spacing - 1e-9).ceil() as i64, (b[1] / spacing + 1e-9).floor() as i64))
        .collect();
    if ranges.iter().any(|(lo, hi)| lo > hi) {
        return Err(Error::WindowTooSmall(format!("no lattice point of spacing {spacing} in {window:?}")));
    }
    let mut points = Vec::new();
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    'outer: loop {
        points.push(idx.iter().map(|&n| n as f64 * spacing).collect());
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] <= ranges[k].1 {
                continue 'outer;
            }
            idx[k] = ranges[k].0;
        }
        break;
    }
    let integer = (spacing - spacing.round()).abs() < 1e-15;
    Ok(DeloneSet {
        dimension: d,
        points,
        r: spacing / 2.0,
        big_r: spacing * (d as f64).sqrt() / 2.0,
        window: window.clone(),
        provenance: Provenance { generator: "periodic".into(), seed: 0, params: json!({ "spacing": spacing }) },
        periods: vec![None; d],
        density: spacing.powi(-(d as i32)),
        tol_patch: if integer { 1e-12 } else { 1e-9 * window.diameter() },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutProjectScheme {
    Fibonacci,
    AmmannBeenker,
}

impl CutProjectScheme {
    pub fn dimension(self) -> usize {
        match self {
            CutProjectScheme::Fibonacci => 1,
            CutProjectScheme::AmmannBeenker => 2,
        }
    }
}

/// Quasicrystal vertex sets obtained by cut and project.
///
/// Fibonacci: `x_n = n + (phi - 1) floor(n / phi)`, gaps `{1, phi}`, with `x_0 = 0`.
/// Ammann-Beenker: projection of `Z^4` with an octagonal acceptance window, unit edges.
pub fn generate_cut_and_project(scheme: CutProjectScheme, window: &Window) -> Result<DeloneSet> {
    if window.dim() != scheme.dimension() {
        return Err(Error::InvalidParameter(format!(
            "{scheme:?} requires d={}, window has d={}",
            scheme.dimension(),
            window.dim()
        )));
    }
    let (points, density, name) = match scheme {
        CutProjectScheme::Fibonacci => (fibonacci_points(window), 1.0 / (2.0 - 1.0 / GOLDEN), "fibonacci"),
        CutProjectScheme::AmmannBeenker => {
            let (pts, dens) = ammann_beenker_points(window);
            (pts, dens, "ammann_beenker")
        }
    };
    if points.len() < 2 {
        return Err(Error::WindowTooSmall(format!("{name} sample has {} points", points.len())));
    }
    let r = min_pairwise_distance(&points, 1.0) / 2.0;
    let big_r = match scheme {
        CutProjectScheme::Fibonacci => {
            let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
            xs.sort_by(f64::total_cmp);
            xs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max) / 2.0
        }
        CutProjectScheme::AmmannBeenker => estimate_covering_radius(&points, window, r)?,
    };
    let set = DeloneSet {
        dimension: window.dim(),
        points,
        r,
        big_r,
        window: window.clone(),
        provenance: Provenance { generator: name.into(), seed: 0, params: json!({}) },
        periods: vec![None; window.dim()],
        density,
        tol_patch: 1e-9 * window.diameter(),
    };
    let rep = verify_delone(&set)?;
    if !rep.passed() {
        return Err(Error::Infeasible(format!("{name} sample failed certification: {rep:?}")));
    }
    Ok(set)
}

fn fibonacci_points(window: &Window) -> Vec<Vec<f64>> {
    let [lo, hi] = window.bounds[0];
    let mean = 2.0 - 1.0 / GOLDEN;
    let n_lo = (lo / mean).floor() as i64 - 3;
    let n_hi = (hi / mean).ceil() as i64 + 3;
    (n_lo..=n_hi)
        .map(|n| n as f64 + (GOLDEN - 1.0) * (n as f64 / GOLDEN).floor())
        .filter(|&x| x >= lo && x <= hi)
        .map(|x| vec![x])
        .collect()
}

fn ammann_beenker_points(window: &Window) -> (Vec<Vec<f64>>, f64) {
    use std::f64::consts::FRAC_PI_4;
    let par: Vec<[f64; 2]> =
        (0..4).map(|k| [(k as f64 * FRAC_PI_4).cos(), (k as f64 * FRAC_PI_4).sin()]).collect();
    let perp: Vec<[f64; 2]> = (0..4)
        .map(|k| [(3.0 * k as f64 * FRAC_PI_4).cos(), (3.0 * k as f64 * FRAC_PI_4).sin()])
        .collect();
    // Octagon = projection of [-1/2, 1/2]^4, shifted off any lattice plane.
    let offset = [0.123_456_7, 0.076_543_2];
    let normals: Vec<[f64; 2]> = perp.iter().map(|e| [-e[1], e[0]]).collect();
    let support: Vec<f64> = normals
        .iter()
        .map(|u| perp.iter().map(|e| (e[0] * u[0] + e[1] * u[1]).abs()).sum::<f64>() / 2.0)
        .collect();
    let inside = |p: [f64; 2]| {
        normals.iter().zip(&support).all(|(u, h)| ((p[0] - offset[0]) * u[0] + (p[1] - offset[1]) * u[1]).abs() <= *h)
    };
    let area: f64 = {
        let mut a = 0.0;
        for j in 0..4 {
            for k in j + 1..4 {
                a += (perp[j][0] * perp[k][1] - perp[j][1] * perp[k][0]).abs();
            }
        }
        a
    };
    let corner = window.bounds.iter().map(|b| b[0].abs().max(b[1].abs())).fold(0.0, f64::max);
    let perp_radius = support.iter().cloned().fold(0.0, f64::max) * 1.1 + norm(&offset);
    let bound = (((2.0f64).sqrt() * corner).powi(2) + perp_radius.powi(2)) / 2.0;
    let m = bound.sqrt().ceil() as i64;
    let mut pts = Vec::new();
    for a in -m..=m {
        for b in -m..=m {
            for c in -m..=m {
                for d in -m..=m {
                    let n = [a as f64, b as f64, c as f64, d as f64];
                    let mut x = [0.0; 2];
                    let mut y = [0.0; 2];
                    for k in 0..4 {
                        x[0] += n[k] * par[k][0];
                        x[1] += n[k] * par[k][1];
                        y[0] += n[k] * perp[k][0];
                        y[1] += n[k] * perp[k][1];
                    }
                    if window.contains(&x) && inside(y) {
                        pts.push(vec![x[0], x[1]]);
                    }
                }
            }
        }
    }
    pts.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
    (pts, area / 4.0)
}

/// Grid points of pitch `pitch` filling the window eroded by `margin`.
pub(crate) fn covering_grid(window: &Window, margin: f64, pitch: f64) -> Vec<Vec<f64>> {
    let Some(inner) = window.eroded(margin) else { return Vec::new() };
    let d = window.dim();
    let counts: Vec<usize> = (0..d).map(|k| (inner.extent(k) / pitch).floor() as usize + 1).collect();
    let total: usize = counts.iter().product();
    (0..total)
        .map(|flat| {
            let mut rem = flat;
            (0..d)
                .map(|k| {
                    let i = rem % counts[k];
                    rem /= counts[k];
                    inner.bounds[k][0] + i as f64 * pitch
                })
                .collect()
        })
        .collect()
}

/// Largest empty-ball radius seen from a fine interior grid, plus the grid slack.
fn estimate_covering_radius(points: &[Vec<f64>], window: &Window, r: f64) -> Result<f64> {
    let pitch = r / 4.0;
    let probe = 4.0 * r;
    let idx = SpatialIndex::new(points, probe);
    let margin = probe;
    let grid = covering_grid(window, margin, pitch);
    if grid.is_empty() {
        return Err(Error::WindowTooSmall("window too small to estimate the covering radius".into()));
    }
    let mut worst = 0.0f64;
    for g in &grid {
        let d = idx
            .nearest_distance(points, g, probe)
            .ok_or_else(|| Error::Infeasible("empty region larger than the probe radius".into()))?;
        worst = worst.max(d);
    }
    Ok(worst + pitch * (window.dim() as f64).sqrt() / 2.0)
}

/// Random sequential insertion at minimum distance `2r`, then hole filling.
pub fn generate_amorphous(d: usize, r: f64, target_r: f64, window: &Window, seed: u64) -> Result<DeloneSet> {
    if !(1..=3).contains(&d) || window.dim() != d {
        return Err(Error::InvalidParameter(format!("dimension {d} with window dimension {}", window.dim())));
    }
    if r <= 0.0 {
        return Err(Error::InvalidParameter("r must be positive".into()));
    }
    if target_r <= 2.0 * r {
        return Err(Error::Infeasible(format!(
            "target R = {target_r} must exceed 2r = {}; no insertion can fill an R-hole without violating 2r",
            2.0 * r
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_dist = 2.0 * r;
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut idx = SpatialIndex::new(&points, min_dist);
    let attempts = (20.0 * window.volume() / min_dist.powi(d as i32)).ceil() as usize;
    for _ in 0..attempts {
        let x: Vec<f64> = window.bounds.iter().map(|b| rng.random_range(b[0]..=b[1])).collect();
        if idx.within(&points, &x, min_dist * (1.0 - 1e-12)).is_empty() {
            idx.insert(points.len(), &x);
            points.push(x);
        }
    }
    let grid = covering_grid(window, target_r, r / 2.0);
    let mut filled = 0usize;
    for g in grid {
        if idx.within(&points, &g, target_r).is_empty() {
            if !idx.within(&points, &g, min_dist).is_empty() {
                return Err(Error::Infeasible(format!("hole at {g:?} cannot be filled")));
            }
            idx.insert(points.len(), &g);
            points.push(g);
            filled += 1;
        }
    }
    if points.is_empty() {
        return Err(Error::WindowTooSmall("no point could be placed".into()));
    }
    let density = match window.eroded(target_r) {
        Some(inner) if inner.volume() > 0.0 => {
            points.iter().filter(|p| inner.contains(p)).count() as f64 / inner.volume()
        }
        _ => points.len() as f64 / window.volume(),
    };
    let set = DeloneSet {
        dimension: d,
        points,
        r,
        big_r: target_r,
        window: window.clone(),
        provenance: Provenance {
            generator: "amorphous".into(),
            seed,
            params: json!({ "r": r, "R": target_r, "hole_fills": filled }),
        },
        periods: vec![None; d],
        density,
        tol_patch: 1e-9 * window.diameter(),
    };
    let rep = verify_delone(&set)?;
    if !rep.passed() {
        return Err(Error::Infeasible(format!("amorphous sample failed certification: {rep:?}")));
    }
    Ok(set)
}

/// Displaces each point uniformly inside a ball of radius `amplitude`.
///
/// The output carries `(r - amplitude, R + amplitude)` and a window grown by `amplitude`.
pub fn perturb(set: &DeloneSet, amplitude: f64, seed: u64) -> Result<DeloneSet> {
    if !(0.0..set.r / 2.0).contains(&amplitude) {
        return Err(Error::InvalidParameter(format!(
            "amplitude {amplitude} must lie in [0, r/2) = [0, {})",
            set.r / 2.0
        )));
    }
    if amplitude == 0.0 {
        return Ok(set.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let new_r = set.r - amplitude;
    let mut points = set.points.clone();
    let idx = SpatialIndex::new(&set.points, 2.0 * set.r + 2.0 * amplitude);
    for i in 0..points.len() {
        let step = loop {
            let v: Vec<f64> = (0..set.dimension).map(|_| rng.random_range(-1.0..=1.0)).collect();
            if norm(&v) <= 1.0 {
                break v;
            }
        };
        let candidate: Vec<f64> = set.points[i].iter().zip(&step).map(|(x, s)| x + amplitude * s).collect();
        let ok = idx
            .within(&set.points, &set.points[i], 2.0 * set.r + 2.0 * amplitude)
            .into_iter()
            .filter(|&j| j != i)
            .all(|j| set.distance(&points[j], &candidate) >= 2.0 * new_r);
        if ok {
            points[i] = candidate;
        }
    }
    let window = set.window.expanded(amplitude);
    let mut params = json!({ "base": set.provenance.generator, "amplitude": amplitude });
    if let Some(s) = set.provenance.params.get("spacing") {
        params["spacing"] = s.clone();
    }
    Ok(DeloneSet {
        dimension: set.dimension,
        points,
        r: new_r,
        big_r: set.big_r + amplitude,
        tol_patch: 1e-9 * window.diameter(),
        window,
        provenance: Provenance { generator: "perturbed".into(), seed, params },
        periods: set.periods.clone(),
        density: set.density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn periodic_examples() {
        let s = generate_periodic(2, 1.0, &Window::centered(2, 2.0)).unwrap();
        assert_eq!(s.len(), 25);
        assert_eq!(s.r, 0.5);
        assert!((s.big_r - 0.5f64.sqrt()).abs() < 1e-15);
        let s = generate_periodic(1, 1.0, &Window::cube(1, 0.0, 4.0)).unwrap();
        let xs: Vec<f64> = s.points.iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let s = generate_periodic(2, 2.0, &Window::centered(2, 4.0)).unwrap();
        assert_eq!(s.len(), 25);
        assert!((min_pairwise_distance(&s.points, 1.0) - 2.0).abs() < 1e-12);
        assert!(generate_periodic(1, 1.0, &Window::cube(1, 0.2, 0.8)).is_err());
    }

    #[test]
    fn fibonacci_has_two_gaps() {
        let s = generate_cut_and_project(CutProjectScheme::Fibonacci, &Window::cube(1, 0.0, 100.0)).unwrap();
        let mut xs: Vec<f64> = s.points.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        for w in xs.windows(2) {
            let g = w[1] - w[0];
            assert!((g - 1.0).abs() < 1e-9 || (g - GOLDEN).abs() < 1e-9, "gap {g}");
        }
        assert_eq!(xs[0], 0.0);
    }

    #[test]
    fn fibonacci_long_short_ratio_tends_to_golden() {
        let s = generate_cut_and_project(CutProjectScheme::Fibonacci, &Window::cube(1, 0.0, 1e4)).unwrap();
        let mut xs: Vec<f64> = s.points.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        let long = xs.windows(2).filter(|w| w[1] - w[0] > 1.3).count() as f64;
        let short = (xs.len() - 1) as f64 - long;
        assert!((long / short - GOLDEN).abs() < 1e-3);
    }

    #[test]
    fn ammann_beenker_certifies() {
        let s = generate_cut_and_project(CutProjectScheme::AmmannBeenker, &Window::centered(2, 20.0)).unwrap();
        assert!(verify_delone(&s).unwrap().passed());
        // Unit edges and the short rhombus diagonal 2 sin(pi/8).
        assert!((2.0 * s.r - 2.0 * (std::f64::consts::PI / 8.0).sin()).abs() < 1e-9);
        let expected = s.density * 1600.0;
        assert!((s.len() as f64 - expected).abs() / expected < 0.05);
    }

    #[test]
    fn scheme_dimension_mismatch() {
        assert!(generate_cut_and_project(CutProjectScheme::Fibonacci, &Window::centered(2, 3.0)).is_err());
    }

    #[test]
    fn amorphous_example() {
        let w = Window::centered(2, 10.0);
        let a = generate_amorphous(2, 0.4, 1.5, &w, 7).unwrap();
        assert!(verify_delone(&a).unwrap().passed());
        let b = generate_amorphous(2, 0.4, 1.5, &w, 7).unwrap();
        assert_eq!(a.points, b.points);
        assert!(matches!(generate_amorphous(2, 0.4, 0.5, &w, 7), Err(Error::Infeasible(_))));
    }

    #[test]
    fn perturb_examples() {
        let s = generate_periodic(2, 1.0, &Window::centered(2, 6.0)).unwrap();
        assert_eq!(perturb(&s, 0.0, 1).unwrap().points, s.points);
        let p = perturb(&s, 0.1, 3).unwrap();
        let mut m = f64::INFINITY;
        for i in 0..p.len() {
            for j in 0..i {
                m = m.min(norm(&[p.points[i][0] - p.points[j][0], p.points[i][1] - p.points[j][1]]));
            }
        }
        assert!(m >= 0.8);
        assert!(perturb(&s, s.r, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn amorphous_always_certifies(seed in 0u64..1000, r in 0.25f64..0.45) {
            let s = generate_amorphous(2, r, 3.0 * r, &Window::centered(2, 5.0), seed).unwrap();
            prop_assert!(verify_delone(&s).unwrap().passed());
        }

        #[test]
        fn perturbed_sets_certify(seed in 0u64..1000, alpha in 0.0f64..0.24) {
            let s = generate_periodic(2, 1.0, &Window::centered(2, 4.0)).unwrap();
            let p = perturb(&s, alpha, seed).unwrap();
            prop_assert!(verify_delone(&p).unwrap().passed());
        }

        #[test]
        fn perturbed_fibonacci_certifies(seed in 0u64..1000, alpha in 0.0f64..0.24) {
            let s = generate_cut_and_project(CutProjectScheme::Fibonacci, &Window::cube(1, -30.0, 30.0)).unwrap();
            let p = perturb(&s, alpha, seed).unwrap();
            prop_assert!(verify_delone(&p).unwrap().passed());
        }
    }
}
