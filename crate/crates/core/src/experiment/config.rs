use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::delone::{CutProjectScheme, Window};
use crate::pattern_tree::Zeta;
use crate::{Error, Result};

/// A reproducible experiment: one lattice, an optional model, and tasks run in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Top-level seed; every random draw is derived from it.
    #[serde(default)]
    pub seed: u64,
    pub lattice: LatticeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub knobs: Knobs,
    pub tasks: Vec<Task>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub source: Source,
    /// Required for every source except `file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    /// Directions closed into rings (minimum-image displacements).
    #[serde(default)]
    pub closed: Vec<usize>,
    /// Displacement amplitude applied after generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    Periodic {
        dimension: usize,
        #[serde(default = "one")]
        spacing: f64,
    },
    CutAndProject {
        scheme: CutProjectScheme,
    },
    Amorphous {
        dimension: usize,
        r: f64,
        target_radius: f64,
    },
    File {
        path: PathBuf,
    },
}

impl Source {
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Source::Periodic { dimension, .. } | Source::Amorphous { dimension, .. } => Some(*dimension),
            Source::CutAndProject { scheme } => Some(scheme.dimension()),
            Source::File { .. } => None,
        }
    }
}

/// Kernel name and parameters. `flux` is the magnetic flux per unit area in
/// flux quanta, so `flux = 1/4` puts a quarter quantum through each unit square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    NnHofstadter {
        #[serde(default = "one")]
        t: f64,
        #[serde(default)]
        flux: f64,
        /// Defaults to `1.01 * 2r`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nn_radius: Option<f64>,
    },
    ExpHopping {
        beta: f64,
        #[serde(default)]
        flux: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
    Qwz {
        m: f64,
        #[serde(default)]
        flux: f64,
    },
    Ssh {
        v: f64,
        w: f64,
    },
    SshStack {
        v: f64,
        w: f64,
    },
    Kitaev {
        mu: f64,
        t: f64,
        delta: f64,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::NnHofstadter { .. } => "nn_hofstadter",
            ModelSpec::ExpHopping { .. } => "exp_hopping",
            ModelSpec::Qwz { .. } => "qwz",
            ModelSpec::Ssh { .. } => "ssh",
            ModelSpec::SshStack { .. } => "ssh_stack",
            ModelSpec::Kitaev { .. } => "kitaev",
        }
    }

    pub fn flux(&self) -> f64 {
        match self {
            ModelSpec::NnHofstadter { flux, .. } | ModelSpec::ExpHopping { flux, .. } | ModelSpec::Qwz { flux, .. } => *flux,
            _ => 0.0,
        }
    }

    /// Dimension the model requires, if any.
    pub fn required_dimension(&self) -> Option<usize> {
        match self {
            ModelSpec::Qwz { .. } => Some(2),
            ModelSpec::Ssh { .. } | ModelSpec::Kitaev { .. } => Some(1),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knobs {
    /// Overrides the operator's default bulk margin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bulk_margin: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// `|raw - rounded|` below which a pairing counts as integral.
    pub rounding: f64,
    /// Bulk against boundary value.
    pub agreement: f64,
    /// Change of the boundary value when the slab doubles.
    pub stability: f64,
    /// Algebraic identity defects.
    pub identity: f64,
    /// Relative error of the extrapolated residue.
    pub residue: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rounding: 0.05, agreement: 0.1, stability: 0.05, identity: 1e-10, residue: 0.05 }
    }
}

/// One pipeline step. Tags are kebab-case: `{"task": "bulk-boundary", ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    Verify,
    Identities,
    Spectrum,
    Chern {
        /// Energy inside the gap to use; every gap when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        e_hint: Option<f64>,
    },
    Winding,
    Weak {
        dirs: Vec<usize>,
        #[serde(default)]
        e_hint: f64,
    },
    Z2 {
        /// Count kernel weight within this distance of the left end; whole sample when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reach: Option<f64>,
    },
    BulkBoundary {
        #[serde(default)]
        e_hint: f64,
        #[serde(default = "one_usize")]
        dir: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cut: Option<f64>,
        #[serde(default = "two")]
        slab_width: f64,
    },
    BulkBoundaryOdd,
    Tree {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        depth: Option<usize>,
        #[serde(default = "log_zeta")]
        zeta: Zeta,
        #[serde(default = "thousand")]
        ultrametric_triples: usize,
    },
    Pairing {
        level: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        depth: Option<usize>,
    },
    ProductCheck {
        depth: usize,
        half_width: f64,
        eps: Vec<f64>,
        #[serde(default = "hundred")]
        trials: usize,
        #[serde(default = "five")]
        seeds: usize,
        /// Truncation depths of the commutator scan; skipped when empty.
        #[serde(default)]
        scan_depths: Vec<usize>,
        #[serde(default = "quarter")]
        delta: f64,
        #[serde(default = "two_usize")]
        cylinder_level: usize,
    },
    Residue {
        dimension: usize,
        s_values: Vec<f64>,
        radius: f64,
    },
    Sobolev {
        order: usize,
        #[serde(default = "two_u32")]
        p: u32,
        #[serde(default)]
        e_hint: f64,
    },
    Factorize {
        targets: usize,
    },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Verify => "verify",
            Task::Identities => "identities",
            Task::Spectrum => "spectrum",
            Task::Chern { .. } => "chern",
            Task::Winding => "winding",
            Task::Weak { .. } => "weak",
            Task::Z2 { .. } => "z2",
            Task::BulkBoundary { .. } => "bulk-boundary",
            Task::BulkBoundaryOdd => "bulk-boundary-odd",
            Task::Tree { .. } => "tree",
            Task::Pairing { .. } => "pairing",
            Task::ProductCheck { .. } => "product-check",
            Task::Residue { .. } => "residue",
            Task::Sobolev { .. } => "sobolev",
            Task::Factorize { .. } => "factorize",
        }
    }

    pub fn needs_model(&self) -> bool {
        matches!(
            self,
            Task::Identities
                | Task::Spectrum
                | Task::Chern { .. }
                | Task::Winding
                | Task::Weak { .. }
                | Task::Z2 { .. }
                | Task::BulkBoundary { .. }
                | Task::BulkBoundaryOdd
                | Task::Sobolev { .. }
        )
    }

    pub const NAMES: [&'static str; 15] = [
        "verify",
        "identities",
        "spectrum",
        "chern",
        "winding",
        "weak",
        "z2",
        "bulk-boundary",
        "bulk-boundary-odd",
        "tree",
        "pairing",
        "product-check",
        "residue",
        "sobolev",
        "factorize",
    ];
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn quarter() -> f64 {
    0.25
}
fn one_usize() -> usize {
    1
}
fn two_usize() -> usize {
    2
}
fn five() -> usize {
    5
}
fn hundred() -> usize {
    100
}
fn thousand() -> usize {
    1000
}
fn two_u32() -> u32 {
    2
}
fn log_zeta() -> Zeta {
    Zeta::Log
}

fn config_error(key: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { key: key.into(), message: message.into() }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            config_error(if key == "." || key == "?" { "<root>".to_string() } else { key }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks that do not need the lattice: positivity, dimensions and task prerequisites.
    pub fn validate(&self) -> Result<()> {
        let t = &self.knobs.tolerances;
        for (key, v) in [
            ("rounding", t.rounding),
            ("agreement", t.agreement),
            ("stability", t.stability),
            ("identity", t.identity),
            ("residue", t.residue),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_error(format!("knobs.tolerances.{key}"), format!("{v} must be positive")));
            }
        }
        if let Some(m) = self.knobs.bulk_margin {
            if !(m >= 0.0) {
                return Err(config_error("knobs.bulk_margin", format!("{m} must be non-negative")));
            }
        }
        let dim = self.lattice.source.dimension();
        match (&self.lattice.source, &self.lattice.window) {
            (Source::File { .. }, _) => {}
            (_, None) => return Err(config_error("lattice.window", "required for generated lattices")),
            (_, Some(w)) => {
                if Some(w.dim()) != dim {
                    return Err(config_error(
                        "lattice.window",
                        format!("{} intervals for a {}-dimensional generator", w.dim(), dim.unwrap_or(0)),
                    ));
                }
                if w.bounds.iter().any(|b| !(b[0] < b[1])) {
                    return Err(config_error("lattice.window", "every interval needs lo < hi"));
                }
            }
        }
        if let (Some(d), Some(k)) = (dim, self.lattice.closed.iter().find(|&&k| k >= dim.unwrap_or(0))) {
            return Err(config_error("lattice.closed", format!("direction {k} out of range for d = {d}")));
        }
        if let Some(a) = self.lattice.perturb {
            if !(a >= 0.0) {
                return Err(config_error("lattice.perturb", format!("{a} must be non-negative")));
            }
        }
        if let Some(model) = &self.model {
            if let (Some(need), Some(d)) = (model.required_dimension(), dim) {
                if need != d {
                    return Err(config_error("model.kind", format!("{} needs d = {need}, lattice has d = {d}", model.name())));
                }
            }
            if model.flux() != 0.0 && dim.is_some_and(|d| d != 2) {
                return Err(config_error("model.flux", "a magnetic field needs d = 2"));
            }
            if model.flux() != 0.0 && !self.lattice.closed.is_empty() {
                return Err(config_error("lattice.closed", "closed directions need zero flux"));
            }
        }
        for (i, task) in self.tasks.iter().enumerate() {
            let key = |field: &str| format!("tasks[{i}].{field}");
            if task.needs_model() && self.model.is_none() {
                return Err(config_error(format!("tasks[{i}]"), format!("task `{}` needs a model", task.name())));
            }
            match task {
                Task::Weak { dirs, .. } => {
                    if dirs.is_empty() || dim.is_some_and(|d| dirs.iter().any(|&k| k >= d)) {
                        return Err(config_error(key("dirs"), "directions must be nonempty and below d"));
                    }
                }
                Task::BulkBoundary { slab_width, .. } if !(*slab_width > 0.0) => {
                    return Err(config_error(key("slab_width"), "must be positive"));
                }
                Task::ProductCheck { eps, half_width, trials, seeds, delta, .. } => {
                    if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0)) {
                        return Err(config_error(key("eps"), "need positive frame radii"));
                    }
                    if !(*half_width > 0.0) {
                        return Err(config_error(key("half_width"), "must be positive"));
                    }
                    if *trials == 0 || *seeds == 0 {
                        return Err(config_error(key("trials"), "trials and seeds must be positive"));
                    }
                    if !(*delta > 0.0) {
                        return Err(config_error(key("delta"), "must be positive"));
                    }
                }
                Task::Residue { dimension, s_values, radius } => {
                    if !(1..=3).contains(dimension) {
                        return Err(config_error(key("dimension"), "must be 1, 2 or 3"));
                    }
                    if s_values.len() < 2 || s_values.iter().any(|&s| s <= *dimension as f64) {
                        return Err(config_error(key("s_values"), "need >= 2 exponents above the dimension"));
                    }
                    if !(*radius >= 10.0) {
                        return Err(config_error(key("radius"), "must be at least 10"));
                    }
                }
                Task::Sobolev { p, .. } if *p == 0 => return Err(config_error(key("p"), "must be >= 1")),
                Task::Factorize { .. } | Task::Winding | Task::BulkBoundaryOdd if dim.is_some_and(|d| d != 1) => {
                    return Err(config_error(format!("tasks[{i}]"), format!("task `{}` needs d = 1", task.name())));
                }
                Task::Chern { .. } | Task::BulkBoundary { .. } if dim.is_some_and(|d| d != 2) => {
                    return Err(config_error(format!("tasks[{i}]"), format!("task `{}` needs d = 2", task.name())));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Copy with the numeric value at a dotted path (`model.flux`, `tasks.2.e_hint`) replaced.
    pub fn with_value(&self, axis: &str, value: f64) -> Result<Self> {
        let mut root = serde_json::to_value(self)?;
        let mut node = &mut root;
        for part in axis.split('.') {
            node = match node {
                serde_json::Value::Object(map) => map.get_mut(part),
                serde_json::Value::Array(items) => part.parse::<usize>().ok().and_then(|k| items.get_mut(k)),
                _ => None,
            }
            .ok_or_else(|| config_error(axis, "no such key"))?;
        }
        if !node.is_number() {
            return Err(config_error(axis, "sweep axis must address a numeric key"));
        }
        *node = if node.is_u64() && value >= 0.0 && value.fract() == 0.0 {
            serde_json::Value::from(value as u64)
        } else {
            serde_json::Value::from(value)
        };
        Self::from_json(&serde_json::to_string(&root)?)
    }
}
