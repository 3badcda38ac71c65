//! Pattern tree of the Fibonacci chain: level sizes, Pearson-Bellissard spectrum,
//! ultrametric distances, quasi-homomorphism pairings and a Graphviz rendering.

use delone_index::delone::{generate_cut_and_project, CutProjectScheme, Window};
use delone_index::linalg::eigvalsh;
use delone_index::pattern_tree::{
    build_tree, choice_pair, multiplicities, pb_operator, quasi_hom_pairing, tree_to_dot, ultrametric, Zeta,
};

fn main() -> delone_index::Result<()> {
    let depth: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(6);
    let set = generate_cut_and_project(CutProjectScheme::Fibonacci, &Window::cube(1, -150.0, 150.0))?;
    let tree = build_tree(&set, depth, None)?;
    println!("level radius {:.4}, level sizes {:?}", tree.level_radius, tree.level_sizes());

    let dirac = pb_operator(&tree, Zeta::Log);
    println!("PB spectrum (eigenvalue x multiplicity):");
    for (value, count) in multiplicities(&eigvalsh(&dirac.matrix)?, 1e-9) {
        println!("  {value:+.4} x {count}");
    }

    let leaves: Vec<usize> = tree.levels[depth].iter().map(|v| v.witnesses[0]).collect();
    println!("ultrametric distances between leaf witnesses:");
    for (i, &a) in leaves.iter().enumerate().take(4) {
        let row: Vec<String> = leaves
            .iter()
            .take(4)
            .map(|&b| ultrametric(&set, a, b, depth, tree.level_radius).map(|u| format!("{:.3}", u.value)))
            .collect::<delone_index::Result<_>>()?;
        println!("  leaf {i}: {}", row.join("  "));
    }

    let pair = choice_pair(&tree, 0);
    for (i, v) in tree.levels[2].iter().enumerate() {
        println!("pairing at level-2 vertex {i}: {:+}", quasi_hom_pairing(&set, &tree, &pair, &v.patch, 2)?);
    }
    let path = std::env::temp_dir().join("fibonacci-tree.dot");
    std::fs::write(&path, tree_to_dot(&tree))?;
    println!("tree written to {}", path.display());
    Ok(())
}
