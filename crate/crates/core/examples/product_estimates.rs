//! Unbounded product on the Fibonacci chain: the anticommutator ratio of the
//! position and connection operators, and damped commutator scans for the
//! logarithmic and exponential level weights.

use delone_index::delone::{generate_cut_and_project, CutProjectScheme, Window};
use delone_index::kasparov::{
    anticommutator_estimate, build_fiber_space, log_commutator_scan, operator_t, operator_x, product_frame,
    product_spectrum, ScanConfig,
};
use delone_index::pattern_tree::{build_tree, choice_pair, Zeta};

fn main() -> delone_index::Result<()> {
    let set = generate_cut_and_project(CutProjectScheme::Fibonacci, &Window::cube(1, -120.0, 120.0))?;
    let tree = build_tree(&set, 4, None)?;
    let pair = choice_pair(&tree, 0);
    let fs = build_fiber_space(&set, &tree, &pair, 30.0)?;
    let x = operator_x(&fs);
    println!("fiber space dimension {}", fs.total_dim());
    for eps in [0.1, 0.2] {
        let t = operator_t(&fs, &product_frame(&set, eps)?, Zeta::Log);
        let rep = anticommutator_estimate(&fs, &x, &t, 100, 1)?;
        let spec = product_spectrum(&fs, &x, &t)?;
        println!(
            "eps {eps}: max ratio {:.2e} (bound {})  spectral gap at zero {:.3}  asymmetry {:.1e}",
            rep.max_ratio,
            2.0 * eps,
            spec.gap_at_zero,
            spec.asymmetry
        );
    }
    let scan_set = generate_cut_and_project(CutProjectScheme::Fibonacci, &Window::cube(1, -200.0, 200.0))?;
    for zeta in [Zeta::Log, Zeta::Exp] {
        let cfg = ScanConfig { depths: vec![2, 3, 4, 5], delta: 0.25, zeta, eps: 0.1, seed: 0, cylinder: (2, 0) };
        let scan = log_commutator_scan(&scan_set, &cfg)?;
        let norms: Vec<String> = scan.rows.iter().map(|r| format!("{}:{:.3}", r.depth, r.norm)).collect();
        println!("{zeta:?}: {}  growth {:.2}  non-diverging {}", norms.join("  "), scan.growth, scan.non_diverging);
    }
    Ok(())
}
