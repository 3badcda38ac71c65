//! Bulk Chern number of a Hofstadter gap against the boundary winding of the
//! half-space compression, plus the decay of the boundary unitary away from the cut.

use delone_index::boundary::{boundary_invariant, boundary_unitary, bulk_boundary_even, half_space};
use delone_index::delone::{generate_periodic, Window};
use delone_index::groupoid::MagneticCocycle;
use delone_index::hamiltonians::{nn_hofstadter, smooth_gap_function};

fn main() -> delone_index::Result<()> {
    let flux: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.25);
    let e_hint: f64 = std::env::args().nth(2).and_then(|a| a.parse().ok()).unwrap_or(-2.0);
    let set = generate_periodic(2, 1.0, &Window::new(vec![[0.0, 39.0], [0.0, 55.0]]))?;
    let mut h = nn_hofstadter(&set, 1.0, &MagneticCocycle::from_flux_quanta(flux), 1.01)?;
    h.bulk_margin = 6.0;
    let (report, _) = bulk_boundary_even(&h, e_hint, 1, 15.5, 2.0, 0.1)?;
    println!(
        "gap ({:+.3}, {:+.3}): bulk {:+.5}  boundary {:+.5}  agree {}",
        report.gap.lower, report.gap.upper, report.bulk, report.boundary, report.agree
    );
    println!(
        "  slab width {}: boundary {:+.5}, doubled {:+.5}",
        report.boundary_report.slab_width, report.boundary_report.normalized, report.boundary_report.doubled
    );
    let hs = half_space(&h, 1, 15.5, 0.0)?;
    let f = smooth_gap_function(&report.gap)?;
    let bu = boundary_unitary(&hs, &|e| f.eval(e))?;
    let wide = boundary_invariant(&bu, &hs, &[0], 4.0, 6.0)?;
    println!("  slab width 4: boundary {:+.5}, doubled {:+.5}", wide.normalized, wide.doubled);
    println!("decay of |u - 1| with depth:");
    for (depth, v) in bu.profile.iter().take(12) {
        println!("  {depth:>4}: {v:.3e}");
    }
    Ok(())
}
