//! Residue of the lattice zeta function at s = d against the unit-sphere volume.

use delone_index::invariants::residue_check;

fn main() -> delone_index::Result<()> {
    for (d, s_values, radius) in [(1, vec![1.2, 1.4, 1.6, 1.8], 20000.0), (2, vec![2.2, 2.4, 2.6, 2.8], 200.0), (3, vec![3.3, 3.6, 3.9], 40.0)] {
        let rep = residue_check(d, &s_values, radius)?;
        println!("d = {d}: extrapolated {:.5}  target {:.5}  relative error {:.2e}", rep.extrapolated, rep.target, rep.relative_error);
        for (s, v) in &rep.values {
            println!("    s {s:.2}: (s - d) zeta(s) = {v:.5}");
        }
    }
    Ok(())
}
