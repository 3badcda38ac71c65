//! Odd bulk-boundary correspondence for the SSH chain: the winding of the closed
//! ring against the zero modes at the end of the open chain, in both phases.

use delone_index::boundary::bulk_boundary_odd;
use delone_index::delone::{generate_periodic, Window};
use delone_index::hamiltonians::{ssh, SymmetryOperator};
use delone_index::linalg::pauli;

fn main() -> delone_index::Result<()> {
    let open_set = generate_periodic(1, 1.0, &Window::cube(1, 0.0, 39.0))?;
    let ring_set = open_set.clone().with_periodic_closure(&[0])?;
    let chiral = SymmetryOperator::chiral(pauli(3));
    for (v, w) in [(0.5, 1.0), (1.0, 0.5), (0.2, 1.0), (0.9, 1.0)] {
        let rep = bulk_boundary_odd(&ssh(&ring_set, v, w, 1.01)?, &ssh(&open_set, v, w, 1.01)?, &chiral)?;
        println!(
            "v {v} w {w}: winding raw {:+.4} (index {:?})  zero modes {}  agree {}",
            rep.winding.raw[0], rep.winding.oracle, rep.zero_modes.count, rep.agree
        );
        for mode in &rep.zero_modes.modes {
            println!("    energy {:+.2e}  depth {:.2}  localization {:.3}", mode.energy, mode.depth, mode.score);
        }
    }
    Ok(())
}
