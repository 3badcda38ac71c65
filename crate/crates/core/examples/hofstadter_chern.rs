//! Chern numbers of every Hofstadter gap on a 40x40 square sample, checked
//! against the localized Dirac-phase index.

use delone_index::delone::{generate_periodic, Window};
use delone_index::groupoid::MagneticCocycle;
use delone_index::hamiltonians::{default_gap_floor, diagonalize, find_gaps, nn_hofstadter, projection_below};
use delone_index::invariants::{chern_even, fredholm_even};

fn main() -> delone_index::Result<()> {
    let flux: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.25);
    let set = generate_periodic(2, 1.0, &Window::cube(2, 0.0, 39.0))?;
    let mut h = nn_hofstadter(&set, 1.0, &MagneticCocycle::from_flux_quanta(flux), 1.01)?;
    h.bulk_margin = 6.0;
    let sd = diagonalize(&h)?;
    let gaps = find_gaps(&sd, default_gap_floor(&sd));
    println!("flux {flux}: {} gaps", gaps.len());
    for gap in gaps {
        let p = projection_below(&h, &sd, gap.fermi);
        let chern = chern_even(&p, &[0, 1])?;
        let index = fredholm_even(&p, &[19.63, 19.57])?;
        println!(
            "gap ({:+.3}, {:+.3})  ids {:.4}  chern raw {:+.5}  rounded {:+}  dirac index {:+}",
            gap.lower, gap.upper, gap.ids, chern.raw[0], chern.rounded, index
        );
    }
    Ok(())
}
