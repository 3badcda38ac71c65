//! Cocycle, Hermiticity, Leibniz, frame reconstruction and magnetic covariance
//! defects for every model on every generator of matching dimension.

use delone_index::delone::{generate_amorphous, generate_cut_and_project, generate_periodic, CutProjectScheme, DeloneSet, Window};
use delone_index::experiment::{build_model, Knobs, ModelSpec};
use delone_index::groupoid::{identity_defects, MagneticCocycle};

fn main() -> delone_index::Result<()> {
    let square = Window::cube(2, -5.0, 5.0);
    let line = Window::cube(1, -15.0, 15.0);
    let sets = vec![
        ("Z^2", generate_periodic(2, 1.0, &square)?),
        ("ammann_beenker", generate_cut_and_project(CutProjectScheme::AmmannBeenker, &square)?),
        ("amorphous", generate_amorphous(2, 0.5, 1.2, &square, 3)?),
        ("Z", generate_periodic(1, 1.0, &line)?),
        ("fibonacci", generate_cut_and_project(CutProjectScheme::Fibonacci, &line)?),
    ];
    let models: Vec<ModelSpec> = serde_json::from_str(
        r#"[
            { "kind": "nn_hofstadter", "flux": 0.3 },
            { "kind": "exp_hopping", "beta": 2.0, "flux": 0.3 },
            { "kind": "qwz", "m": 1.0, "flux": 0.3 },
            { "kind": "ssh", "v": 0.5, "w": 1.0 },
            { "kind": "kitaev", "mu": 0.5, "t": 1.0, "delta": 0.7 }
        ]"#,
    )?;
    let knobs = Knobs::default();
    println!("{:>15} {:>14} {:>9} {:>9} {:>9} {:>9} {:>9}", "lattice", "model", "cocycle", "hermit.", "leibniz", "frame", "covar.");
    for (name, set) in &sets {
        for m in models.iter().filter(|m| m.required_dimension().is_none_or(|d| d == set.dimension)) {
            let build = |s: &DeloneSet| build_model(m, s, &knobs).map(|x| x.0);
            let h = build(set)?;
            let b = if set.dimension == 2 { MagneticCocycle::from_flux_quanta(m.flux()) } else { MagneticCocycle::zero(1) };
            let center = set.window.center();
            let shift = set.points.iter().min_by(|a, b| set.distance(a, &center).total_cmp(&set.distance(b, &center))).cloned().unwrap_or(center);
            let d = identity_defects(set, &b, &h, &build, &shift)?;
            println!(
                "{name:>15} {:>14} {:>9.1e} {:>9.1e} {:>9.1e} {:>9.1e} {:>9.1e}",
                m.name(),
                d.cocycle,
                d.hermiticity,
                d.leibniz,
                d.frame_reconstruction,
                d.covariance
            );
        }
    }
    Ok(())
}
