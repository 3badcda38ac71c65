//! Z2 kernel parity of the Kitaev chain at one end of an open sample across the
//! topological transition at |mu| = 2t.

use delone_index::delone::{generate_periodic, Window};
use delone_index::hamiltonians::{kitaev, SymmetryOperator};
use delone_index::invariants::z2_index;
use delone_index::linalg::pauli;

fn main() -> delone_index::Result<()> {
    let set = generate_periodic(1, 1.0, &Window::cube(1, 0.0, 59.0))?;
    let symmetry = SymmetryOperator::particle_hole(pauli(1));
    let left = |x: &[f64]| x[0] < 10.0;
    for mu in [-3.0, -1.5, 0.0, 0.5, 1.5, 3.0] {
        match z2_index(&kitaev(&set, mu, 1.0, 0.7)?, &symmetry, Some(&left)) {
            Ok(rep) => println!("mu {mu:+.1}: parity {}  localized kernel weight {:.3}", rep.index, rep.kernel_count),
            Err(e) => println!("mu {mu:+.1}: {e}"),
        }
    }
    Ok(())
}
