//! Ordered Fibonacci chain: degrees, unique factorization into elementary steps,
//! and the imprimitivity identity of the step module.

use delone_index::cuntz_pimsner::{
    check_degree_additivity, factorization_trace, imprimitivity_defect, order_lattice, step_kernel,
};
use delone_index::delone::{generate_cut_and_project, CutProjectScheme, Window};
use delone_index::linalg::c;

fn main() -> delone_index::Result<()> {
    let set = generate_cut_and_project(CutProjectScheme::Fibonacci, &Window::cube(1, -60.0, 60.0))?;
    let ol = order_lattice(&set, None)?;
    println!("{} sites, step bounds ({:.4}, {:.4})", ol.len(), ol.step_bounds.0, ol.step_bounds.1);
    println!("degree additive on {} composable triples", check_degree_additivity(&ol)?);
    for n in [-4, -1, 1, 3, 7] {
        if let Some(y) = ol.y(n) {
            let trace = factorization_trace(&ol, y)?;
            let steps: Vec<String> = trace.steps.iter().map(|s| format!("{s:+.3}")).collect();
            println!("y({n:+}) = {y:+.4}: degree {:+}  steps [{}]  factorizations {}", trace.degree, steps.join(" "), trace.alternatives);
        }
    }
    let kernel = |phase: f64| step_kernel(&ol, &|a, x| if x > 0.0 { c((a as f64 * phase).cos(), x.sin()) } else { c(0.0, 0.0) }, ol.step_bounds.1);
    let defect = imprimitivity_defect(&kernel(0.3)?, &kernel(0.7)?, &kernel(1.1)?);
    println!("imprimitivity defect {defect:.2e}");
    Ok(())
}
