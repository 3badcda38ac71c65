use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, Knobs, ModelSpec, Source, Task};
use super::stream_seed;
use crate::boundary::{bulk_boundary_even, bulk_boundary_odd, half_space, zero_mode_count, ODD_DICTIONARY};
use crate::cuntz_pimsner::{
    check_degree_additivity, factorization_trace, imprimitivity_defect, order_lattice, step_kernel,
};
use crate::delone::{
    generate_amorphous, generate_cut_and_project, generate_periodic, perturb, read_lattice, translate, verify_delone,
    DeloneSet,
};
use crate::groupoid::{identity_defects, MagneticCocycle, OperatorSample};
use crate::hamiltonians::{
    default_gap_floor, diagonalize, exp_hopping, fermi_unitary, find_gaps, kitaev, nn_hofstadter, projection_below,
    qwz, select_gap, ssh, ssh_stack, SpectralData, SymmetryOperator,
};
use crate::invariants::{
    chern_even, default_cut, fredholm_even, residue_check, sobolev_norm, weak_invariant, winding_odd, z2_index,
};
use crate::kasparov::{
    anticommutator_estimate, build_fiber_space, grading_defects, log_commutator_scan, operator_t, operator_x,
    product_frame, scan_to_csv, ScanConfig,
};
use crate::linalg::{self, c, pauli};
use crate::pattern_tree::{
    build_tree, choice_pair, default_depth, multiplicities, pb_operator, quasi_hom_pairing, tree_to_dot, tree_to_json,
    ultrametric, Zeta,
};
use crate::{Error, Result};

/// One line of the run summary.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct SummaryRow {
    pub task: String,
    pub quantity: String,
    pub raw: f64,
    pub rounded: Option<i64>,
    pub deviation: Option<f64>,
    pub oracle: Option<i64>,
    pub pass: bool,
}

/// Report, side files, summary rows and tolerance breaches of one task.
#[derive(Clone, Debug, Default)]
pub struct TaskOutput {
    pub report: Value,
    pub files: Vec<(String, Vec<u8>)>,
    pub rows: Vec<SummaryRow>,
    pub breaches: Vec<String>,
}

impl TaskOutput {
    fn row(&mut self, task: &str, quantity: impl Into<String>, raw: f64, pass: bool) -> &mut SummaryRow {
        self.rows.push(SummaryRow {
            task: task.into(),
            quantity: quantity.into(),
            raw,
            rounded: None,
            deviation: None,
            oracle: None,
            pass,
        });
        if !pass {
            self.breaches.push(format!("{task}: {} = {raw}", self.rows.last().expect("pushed").quantity));
        }
        self.rows.last_mut().expect("pushed")
    }
}

pub(crate) fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// The generated sample before and after closing directions into rings.
#[derive(Clone, Debug)]
pub struct Sample {
    pub open: DeloneSet,
    pub set: DeloneSet,
}

/// Lattice stream 0 seeds generation, stream 1 the perturbation.
pub fn build_sample(cfg: &ExperimentConfig) -> Result<Sample> {
    let spec = &cfg.lattice;
    let window = || spec.window.clone().ok_or_else(|| Error::Config { key: "lattice.window".into(), message: "missing".into() });
    let base = match &spec.source {
        Source::Periodic { dimension, spacing } => generate_periodic(*dimension, *spacing, &window()?)?,
        Source::CutAndProject { scheme } => generate_cut_and_project(*scheme, &window()?)?,
        Source::Amorphous { dimension, r, target_radius } => {
            generate_amorphous(*dimension, *r, *target_radius, &window()?, stream_seed(cfg.seed, 0))?
        }
        Source::File { path } => read_lattice(path)?,
    };
    let open = match spec.perturb {
        Some(a) if a > 0.0 => perturb(&base, a, stream_seed(cfg.seed, 1))?,
        _ => base,
    };
    let set = if spec.closed.is_empty() { open.clone() } else { open.clone().with_periodic_closure(&spec.closed)? };
    Ok(Sample { open, set })
}

fn cocycle(spec: &ModelSpec, d: usize) -> MagneticCocycle {
    if d == 2 {
        MagneticCocycle::from_flux_quanta(spec.flux())
    } else {
        MagneticCocycle::zero(d)
    }
}

/// Represents the model on `set`; the second value carries construction warnings.
pub fn build_model(spec: &ModelSpec, set: &DeloneSet, knobs: &Knobs) -> Result<(OperatorSample, Option<String>)> {
    let b = cocycle(spec, set.dimension);
    let nn = 1.01 * 2.0 * set.r;
    let (mut h, warning) = match spec {
        ModelSpec::NnHofstadter { t, nn_radius, .. } => (nn_hofstadter(set, *t, &b, nn_radius.unwrap_or(nn))?, None),
        ModelSpec::ExpHopping { beta, cutoff, .. } => exp_hopping(set, *beta, &b, *cutoff)?,
        ModelSpec::Qwz { m, .. } => (qwz(set, *m, &b)?, None),
        ModelSpec::Ssh { v, w } => (ssh(set, *v, *w, nn)?, None),
        ModelSpec::SshStack { v, w } => (ssh_stack(set, *v, *w)?, None),
        ModelSpec::Kitaev { mu, t, delta } => (kitaev(set, *mu, *t, *delta)?, None),
    };
    if let Some(m) = knobs.bulk_margin {
        h.bulk_margin = m;
    }
    Ok((h, warning))
}

/// Internal symmetry the model is built to respect.
pub fn model_symmetry(spec: &ModelSpec) -> Option<SymmetryOperator> {
    match spec {
        ModelSpec::Ssh { .. } | ModelSpec::SshStack { .. } => Some(SymmetryOperator::chiral(pauli(3))),
        ModelSpec::Kitaev { .. } => Some(SymmetryOperator::particle_hole(pauli(1))),
        _ => None,
    }
}

pub(crate) struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub sample: Sample,
    model: Option<(OperatorSample, Option<String>)>,
    spectrum: Option<SpectralData>,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        Ok(Context { cfg, sample: build_sample(cfg)?, model: None, spectrum: None })
    }

    fn spec(&self) -> Result<&'a ModelSpec> {
        self.cfg.model.as_ref().ok_or_else(|| Error::Config { key: "model".into(), message: "missing".into() })
    }

    fn model(&mut self) -> Result<&OperatorSample> {
        if self.model.is_none() {
            self.model = Some(build_model(self.spec()?, &self.sample.set, &self.cfg.knobs)?);
        }
        Ok(&self.model.as_ref().expect("built").0)
    }

    fn warning(&self) -> Option<String> {
        self.model.as_ref().and_then(|m| m.1.clone())
    }

    fn spectral(&mut self) -> Result<(&OperatorSample, &SpectralData)> {
        if self.spectrum.is_none() {
            let sd = diagonalize(self.model()?)?;
            self.spectrum = Some(sd);
        }
        Ok((&self.model.as_ref().expect("built").0, self.spectrum.as_ref().expect("computed")))
    }

    fn symmetry(&self) -> Result<SymmetryOperator> {
        let spec = self.spec()?;
        model_symmetry(spec)
            .ok_or_else(|| Error::Config { key: "model.kind".into(), message: format!("{} carries no symmetry", spec.name()) })
    }

    fn projection(&mut self, e_hint: f64) -> Result<(OperatorSample, crate::hamiltonians::Gap)> {
        let (h, sd) = self.spectral()?;
        let gap = select_gap(&find_gaps(sd, default_gap_floor(sd)), e_hint)
            .ok_or_else(|| Error::Gapless(format!("no gap near {e_hint}")))?;
        Ok((projection_below(h, sd, gap.fermi), gap))
    }
}

pub(crate) fn run_task(ctx: &mut Context, index: usize, task: &Task) -> Result<TaskOutput> {
    let prefix = format!("{index:02}-{}", task.name());
    let tol = ctx.cfg.knobs.tolerances.clone();
    let seed = stream_seed(ctx.cfg.seed, 16 + index as u64);
    let name = task.name();
    let mut out = TaskOutput::default();
    match task {
        Task::Verify => {
            let set = &ctx.sample.open;
            let rep = verify_delone(set)?;
            out.row(name, "min_pairwise", rep.min_pairwise, rep.discrete_ok);
            out.row(name, "worst_gap_distance", rep.worst_gap_distance, rep.dense_ok);
            out.report = json!({ "points": set.len(), "r": set.r, "R": set.big_r, "report": rep });
        }
        Task::Identities => {
            let spec = ctx.spec()?;
            let set = &ctx.sample.open;
            let knobs = &ctx.cfg.knobs;
            let build = |s: &DeloneSet| build_model(spec, s, knobs).map(|m| m.0);
            let h = build(set)?;
            let center = set.window.center();
            let shift = set
                .points
                .iter()
                .min_by(|a, b| set.distance(a, &center).total_cmp(&set.distance(b, &center)))
                .cloned()
                .ok_or_else(|| Error::InsufficientSample("empty sample".into()))?;
            let rep = identity_defects(set, &cocycle(spec, set.dimension), &h, &build, &shift)?;
            out.row(name, "max_defect", rep.max(), rep.max() < tol.identity);
            out.report = json!({ "model": spec.name(), "shift": shift, "defects": rep });
        }
        Task::Spectrum => {
            let (_, sd) = ctx.spectral()?;
            let gaps = find_gaps(sd, default_gap_floor(sd));
            #[derive(Serialize)]
            struct Level {
                index: usize,
                eigenvalue: f64,
            }
            let rows: Vec<Level> = sd.eigenvalues.iter().enumerate().map(|(index, &eigenvalue)| Level { index, eigenvalue }).collect();
            out.files.push((format!("{prefix}-spectrum.csv"), csv_bytes(&rows)?));
            out.row(name, "gaps", gaps.len() as f64, true);
            out.report = json!({
                "size": sd.eigenvalues.len(),
                "eigenvalues": sd.eigenvalues,
                "gap_floor": sd.gap_floor,
                "gaps": gaps,
            });
            if let Some(w) = ctx.warning() {
                out.report["warning"] = json!(w);
            }
        }
        Task::Chern { e_hint } => {
            let set = &ctx.sample.set;
            let origin: Vec<f64> =
                set.window.center().iter().zip([0.26, 0.14]).map(|(x, f)| x + f * set.r).collect();
            let (h, sd) = ctx.spectral()?;
            let all = find_gaps(sd, default_gap_floor(sd));
            let gaps = match e_hint {
                Some(e) => select_gap(&all, *e).into_iter().collect(),
                None => all,
            };
            if gaps.is_empty() {
                return Err(Error::Gapless("no spectral gap in the sample".into()));
            }
            let mut entries = Vec::new();
            for gap in gaps {
                let p = projection_below(h, sd, gap.fermi);
                let chern = chern_even(&p, &[0, 1])?;
                let oracle = fredholm_even(&p, &origin)?;
                let agree = chern.deviation < tol.rounding && chern.rounded == oracle;
                let row = out.row(name, format!("chern@{:.4}", gap.fermi), chern.raw[0], agree);
                row.rounded = Some(chern.rounded);
                row.deviation = Some(chern.deviation);
                row.oracle = Some(oracle);
                entries.push(json!({ "gap": gap, "chern": chern, "fredholm": oracle, "agree": agree }));
            }
            out.report = json!({ "origin": origin, "gaps": entries });
        }
        Task::Winding => {
            let chiral = ctx.symmetry()?;
            let u = fermi_unitary(ctx.model()?, &chiral)?;
            let rep = winding_odd(&u, &[0])?;
            let consistent = match rep.oracle {
                Some(0) => rep.rounded == 0,
                Some(o) => rep.rounded == (ODD_DICTIONARY * o as f64).round() as i64,
                None => false,
            };
            let pass = rep.deviation < tol.rounding && consistent;
            let row = out.row(name, "winding", rep.raw[0], pass);
            row.rounded = Some(rep.rounded);
            row.deviation = Some(rep.deviation);
            row.oracle = rep.oracle;
            out.report = json!({ "winding": rep, "dictionary": ODD_DICTIONARY });
        }
        Task::Weak { dirs, e_hint } => {
            let op = if dirs.len() % 2 == 0 {
                ctx.projection(*e_hint)?.0
            } else {
                let chiral = ctx.symmetry()?;
                fermi_unitary(ctx.model()?, &chiral)?
            };
            let rep = weak_invariant(&op, dirs)?;
            let row = out.row(name, format!("weak{dirs:?}"), rep.raw[0], rep.deviation < tol.rounding);
            row.rounded = Some(rep.rounded);
            row.deviation = Some(rep.deviation);
            row.oracle = rep.oracle;
            out.report = json!({ "weak": rep });
        }
        Task::Z2 { reach } => {
            let sym = ctx.symmetry()?;
            let spec = ctx.spec()?;
            let open = &ctx.sample.open;
            let (h, _) = build_model(spec, open, &ctx.cfg.knobs)?;
            let rep = match reach {
                Some(r) => {
                    let first = open.points.iter().map(|x| x[0]).fold(f64::INFINITY, f64::min);
                    let near = move |x: &[f64]| x[0] - first < *r;
                    z2_index(&h, &sym, Some(&near))?
                }
                None => z2_index(&h, &sym, None)?,
            };
            let row = out.row(name, "z2", rep.index as f64, true);
            row.rounded = Some(rep.index as i64);
            out.report = json!({ "z2": rep, "reach": reach });
        }
        Task::BulkBoundary { e_hint, dir, cut, slab_width } => {
            let h = ctx.model()?;
            if *dir > 1 {
                return Err(Error::Config { key: format!("tasks[{index}].dir"), message: "must be 0 or 1".into() });
            }
            let cut = cut.unwrap_or_else(|| default_cut(h, *dir));
            let (rep, bulk) = bulk_boundary_even(h, *e_hint, *dir, cut, *slab_width, tol.agreement)?;
            let hs = half_space(h, *dir, cut, 0.0)?;
            let edge = zero_mode_count(&hs, (rep.gap.lower, rep.gap.upper), 2.0 * slab_width)?;
            let stable = rep.boundary_report.sensitivity < tol.stability;
            let row = out.row(name, "bulk", rep.bulk, bulk.deviation < tol.rounding);
            row.rounded = Some(bulk.rounded);
            row.deviation = Some(bulk.deviation);
            out.row(name, "boundary", rep.boundary, rep.agree);
            out.row(name, "boundary_doubled", rep.boundary_report.doubled, stable);
            out.report = json!({ "cut": cut, "dir": dir, "report": rep, "bulk_report": bulk, "edge_modes": edge });
        }
        Task::BulkBoundaryOdd => {
            let chiral = ctx.symmetry()?;
            let spec = ctx.spec()?;
            let ring_set = ctx.sample.open.clone().with_periodic_closure(&[0])?;
            let (ring, _) = build_model(spec, &ring_set, &ctx.cfg.knobs)?;
            let (open, _) = build_model(spec, &ctx.sample.open, &ctx.cfg.knobs)?;
            let rep = bulk_boundary_odd(&ring, &open, &chiral)?;
            let row = out.row(name, "zero_modes", rep.zero_modes.count as f64, rep.agree);
            row.rounded = Some(rep.zero_modes.count);
            row.oracle = rep.winding.oracle.map(i64::abs);
            out.report = json!({ "report": rep });
        }
        Task::Tree { depth, zeta, ultrametric_triples } => {
            let set = &ctx.sample.set;
            let depth = depth.unwrap_or_else(|| default_depth(set, set.big_r));
            let tree = build_tree(set, depth, None)?;
            let dirac = pb_operator(&tree, *zeta);
            let vals = linalg::eigvalsh(&dirac.matrix)?;
            let mult = multiplicities(&vals, 1e-9);
            let count = |t: f64| mult.iter().find(|(v, _)| (v - t).abs() < 1e-9).map_or(0, |m| m.1);
            let sizes = tree.level_sizes();
            let multiplicities_match = sizes.iter().enumerate().all(|(n, &size)| {
                let z = zeta.at(n, tree.level_radius);
                if z == 0.0 {
                    count(0.0) == 2 * size
                } else {
                    count(z) == size && count(-z) == size
                }
            });
            let leaves: Vec<usize> = tree.levels[depth].iter().flat_map(|v| v.witnesses.iter().copied()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut violations = 0usize;
            if leaves.len() >= 3 {
                for _ in 0..*ultrametric_triples {
                    let pick: Vec<usize> = leaves.choose_multiple(&mut rng, 3).copied().collect();
                    let u = |a, b| ultrametric(set, a, b, depth, tree.level_radius).map(|v| v.value);
                    let (ab, bc, ac) = (u(pick[0], pick[1])?, u(pick[1], pick[2])?, u(pick[0], pick[2])?);
                    if ac > ab.max(bc) * (1.0 + 1e-12) {
                        violations += 1;
                    }
                }
            }
            #[derive(Serialize)]
            struct Eigen {
                eigenvalue: f64,
                multiplicity: usize,
            }
            let rows: Vec<Eigen> = mult.iter().map(|&(eigenvalue, multiplicity)| Eigen { eigenvalue, multiplicity }).collect();
            out.files.push((format!("{prefix}-tree.json"), tree_to_json(set, &tree)?.into_bytes()));
            out.files.push((format!("{prefix}-tree.dot"), tree_to_dot(&tree).into_bytes()));
            out.files.push((format!("{prefix}-pb-spectrum.csv"), csv_bytes(&rows)?));
            out.row(name, "vertices", tree.n_vertices() as f64, multiplicities_match);
            out.row(name, "ultrametric_violations", violations as f64, violations == 0);
            out.report = json!({
                "depth": depth,
                "level_radius": tree.level_radius,
                "level_sizes": sizes,
                "zeta": zeta,
                "pb_spectrum": mult,
                "multiplicities_match": multiplicities_match,
                "ultrametric": { "triples": if leaves.len() >= 3 { *ultrametric_triples } else { 0 }, "violations": violations },
            });
        }
        Task::Pairing { level, depth } => {
            let set = &ctx.sample.set;
            let depth = depth.unwrap_or_else(|| default_depth(set, set.big_r)).max(*level);
            let tree = build_tree(set, depth, None)?;
            let pair = choice_pair(&tree, 0);
            let mut values = Vec::new();
            for (i, v) in tree.levels[*level].iter().enumerate() {
                let value = quasi_hom_pairing(set, &tree, &pair, &v.patch, *level)?;
                out.row(name, format!("pairing[{level},{i}]"), value as f64, true).rounded = Some(value);
                values.push(json!({ "vertex": i, "pairing": value, "witnesses": v.witnesses.len() }));
            }
            out.report = json!({ "depth": depth, "level": level, "vertices": values, "any_coincident": pair.any_coincident() });
        }
        Task::ProductCheck { depth, half_width, eps, trials, seeds, scan_depths, delta, cylinder_level } => {
            let set = &ctx.sample.set;
            let tree = build_tree(set, *depth, None)?;
            let pair = choice_pair(&tree, 0);
            let fs = build_fiber_space(set, &tree, &pair, *half_width)?;
            let x = operator_x(&fs);
            let mut estimates = Vec::new();
            for (k, &e) in eps.iter().enumerate() {
                let frame = product_frame(set, e)?;
                let t = operator_t(&fs, &frame, Zeta::Log);
                let (x_defect, t_defect) = grading_defects(&fs, &x, &t);
                let mut worst = 0.0f64;
                let (mut evaluated, mut skipped) = (0, 0);
                for s in 0..*seeds {
                    let rep = anticommutator_estimate(&fs, &x, &t, *trials, stream_seed(seed, (k * seeds + s) as u64))?;
                    worst = worst.max(rep.max_ratio);
                    evaluated += rep.evaluated;
                    skipped += rep.skipped;
                }
                out.row(name, format!("ratio@eps={e}"), worst, worst <= 2.0 * e);
                estimates.push(json!({
                    "eps": e, "bound": 2.0 * e, "max_ratio": worst, "evaluated": evaluated, "skipped": skipped,
                    "grading_defects": [x_defect, t_defect],
                }));
            }
            out.report = json!({ "depth": depth, "half_width": half_width, "dimension": fs.total_dim(), "estimates": estimates });
            if !scan_depths.is_empty() {
                let mut cfg = ScanConfig {
                    depths: scan_depths.clone(),
                    delta: *delta,
                    zeta: Zeta::Log,
                    eps: eps[0],
                    seed: 0,
                    cylinder: (*cylinder_level, 0),
                };
                let log = log_commutator_scan(set, &cfg)?;
                cfg.zeta = Zeta::Exp;
                let exp = log_commutator_scan(set, &cfg)?;
                out.files.push((format!("{prefix}-scan-log.csv"), scan_to_csv(&log).into_bytes()));
                out.files.push((format!("{prefix}-scan-exp.csv"), scan_to_csv(&exp).into_bytes()));
                out.row(name, "log_scan_growth", log.growth, log.non_diverging);
                out.row(name, "exp_scan_growth", exp.growth, exp.growth > 3.0);
                out.report["scan"] = json!({ "log": log, "exp": exp });
            }
        }
        Task::Residue { dimension, s_values, radius } => {
            let rep = residue_check(*dimension, s_values, *radius)?;
            let row = out.row(name, "residue", rep.extrapolated, rep.relative_error < tol.residue);
            row.deviation = Some(rep.relative_error);
            out.report = json!({ "residue": rep });
        }
        Task::Sobolev { order, p, e_hint } => {
            let (proj, gap) = ctx.projection(*e_hint)?;
            let value = sobolev_norm(&proj, *order, *p)?;
            out.row(name, format!("sobolev[{order},{p}]"), value, value.is_finite());
            out.report = json!({ "gap": gap, "order": order, "p": p, "norm": value });
        }
        Task::Factorize { targets } => {
            let mut set = ctx.sample.set.clone();
            if set.index_of(&[0.0]).is_none() {
                let center = set.window.center();
                let a = set
                    .points
                    .iter()
                    .min_by(|a, b| (a[0] - center[0]).abs().total_cmp(&(b[0] - center[0]).abs()))
                    .cloned()
                    .ok_or_else(|| Error::InsufficientSample("empty sample".into()))?;
                set = translate(&set, &a)?;
            }
            let ol = order_lattice(&set, None)?;
            let triples = check_degree_additivity(&ol)?;
            let others: Vec<usize> = (0..ol.len()).filter(|&k| k != ol.zero).collect();
            let step = (others.len() / (*targets).max(1)).max(1);
            let mut traces = Vec::new();
            for &k in others.iter().step_by(step).take(*targets) {
                traces.push(factorization_trace(&ol, ol.positions[k])?);
            }
            let unique = traces.iter().all(|t| t.alternatives == 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coef: Vec<Vec<(f64, f64)>> = (0..3)
                .map(|_| (0..ol.len()).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
                .collect();
            let reach = ol.step_bounds.1;
            let kernel = |k: usize| {
                let table = &coef[k];
                step_kernel(
                    &ol,
                    &|a, x| if x > 0.0 { c(table[a].0, table[a].1) * c(x.cos(), x.sin()) } else { c(0.0, 0.0) },
                    reach,
                )
            };
            let defect = imprimitivity_defect(&kernel(0)?, &kernel(1)?, &kernel(2)?);
            out.row(name, "additive_triples", triples as f64, true);
            out.row(name, "unique_factorizations", traces.len() as f64, unique);
            out.row(name, "imprimitivity_defect", defect, defect < tol.identity);
            out.files.push((format!("{prefix}-traces.json"), serde_json::to_vec_pretty(&traces)?));
            out.report = json!({
                "sites": ol.len(),
                "step_bounds": ol.step_bounds,
                "additive_triples": triples,
                "targets": traces.len(),
                "unique": unique,
                "imprimitivity_defect": defect,
            });
        }
    }
    out.report["task"] = json!(name);
    out.report["index"] = json!(index);
    Ok(out)
}
