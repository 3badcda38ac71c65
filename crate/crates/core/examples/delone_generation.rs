//! Every generator on a common window: certified Delone constants, patch counts,
//! and a JSON/CSV round trip of one sample.

use delone_index::delone::{
    enumerate_patches, generate_amorphous, generate_cut_and_project, generate_periodic, perturb, read_lattice,
    verify_delone, write_lattice, write_lattice_csv, CutProjectScheme, Window,
};

fn main() -> delone_index::Result<()> {
    let window = Window::cube(2, -10.0, 10.0);
    let square = generate_periodic(2, 1.0, &window)?;
    let samples = vec![
        ("periodic", square.clone()),
        ("perturbed", perturb(&square, 0.1, 1)?),
        ("ammann_beenker", generate_cut_and_project(CutProjectScheme::AmmannBeenker, &window)?),
        ("amorphous", generate_amorphous(2, 0.5, 1.2, &window, 2)?),
        ("fibonacci", generate_cut_and_project(CutProjectScheme::Fibonacci, &Window::cube(1, -100.0, 100.0))?),
    ];
    for (name, set) in &samples {
        let rep = verify_delone(set)?;
        let patches = enumerate_patches(set, 2.0 * set.big_r).len();
        println!(
            "{name:>15}: {:>5} points  r {:.4}  R {:.4}  min distance {:.4}  worst hole {:.4}  passed {}  patch classes at 2R {patches}",
            set.len(),
            set.r,
            set.big_r,
            rep.min_pairwise,
            rep.worst_gap_distance,
            rep.passed()
        );
    }
    let dir = std::env::temp_dir().join("delone-generation");
    std::fs::create_dir_all(&dir)?;
    let (_, ab) = &samples[2];
    write_lattice(ab, &dir.join("ammann_beenker.json"))?;
    write_lattice_csv(ab, &dir.join("ammann_beenker.csv"))?;
    let back = read_lattice(&dir.join("ammann_beenker.json"))?;
    println!("round trip: {} points, identical {}", back.len(), back.points == ab.points);
    println!("written to {}", dir.display());
    Ok(())
}
