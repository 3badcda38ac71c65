//! Index pairings, boundary invariants and pattern-tree spectral triples for
//! finite samples of Delone lattices.

pub mod boundary;
pub mod cuntz_pimsner;
pub mod delone;
pub mod error;
pub mod experiment;
pub mod groupoid;
pub mod hamiltonians;
pub mod invariants;
pub mod kasparov;
pub mod linalg;
pub mod pattern_tree;

pub use error::{Error, Result};
