//! Seeded synthetic complexes and datasets for tests, pilots and demo fixtures.

use std::collections::BTreeSet;

use rand::RngExt;

use crate::ingest::{AminoAcid, Complex, Mutation, MutationSet, Point, ProteinChain, Residue, ResidueId};
use crate::rng::{normal, seeded, Rng};

/// Idealized backbone offsets relative to CA for a strand running along +x.
const N_OFF: Point = [-1.20, 0.80, 0.30];
const C_OFF: Point = [1.25, 0.85, -0.20];
const O_OFF: Point = [1.45, 2.05, -0.45];

fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn jitter(rng: &mut Rng, scale: f64) -> Point {
    [scale * normal(rng), scale * normal(rng), scale * normal(rng)]
}

fn random_aa(rng: &mut Rng) -> AminoAcid {
    AminoAcid::from_zero_based(rng.random_range(0..20usize)).expect("in range")
}

/// A strand of `n` residues starting at `origin`, CA spacing 3.8 A along x.
pub fn strand(chain: char, n: usize, origin: Point, rng: &mut Rng) -> ProteinChain {
    let residues = (0..n)
        .map(|i| {
            let flip = if i % 2 == 0 { 1.0 } else { -1.0 };
            let ca = add(add(origin, [3.8 * i as f64, 0.0, 0.0]), jitter(rng, 0.15));
            let aa = random_aa(rng);
            let mut off = |o: Point| add(add(ca, [o[0], flip * o[1], o[2]]), jitter(rng, 0.05));
            let (n, c, o) = (off(N_OFF), off(C_OFF), off(O_OFF));
            Residue { aa, id: ResidueId::new(chain, i as i32 + 1), backbone: [Some(n), Some(ca), Some(c), Some(o)] }
        })
        .collect();
    ProteinChain { chain_id: chain, residues }
}

/// Binder chain `A` and target chain `B` as parallel strands `separation` A apart.
pub fn two_chain_complex(pdb_id: &str, n_binder: usize, n_target: usize, separation: f64, seed: u64) -> Complex {
    let mut rng = seeded(seed);
    let a = strand('A', n_binder, [0.0, 0.0, 0.0], &mut rng);
    let b = strand('B', n_target, [1.9, 0.0, separation], &mut rng);
    Complex::new(pdb_id, vec![a, b], BTreeSet::from(['A']), BTreeSet::from(['B'])).expect("valid groups")
}

/// Copies of one binder residue and one target residue with fixed internal
/// geometry (CA-CA distance `distance`), each under a random rigid transform.
pub fn rigid_pairs(n: usize, distance: f64, seed: u64) -> Vec<Complex> {
    let mut rng = seeded(seed);
    let a = strand('A', 1, [0.0, 0.0, 0.0], &mut rng);
    let b = strand('B', 1, [0.0, 0.0, distance], &mut rng);
    let mut template = Complex::new("PAIR", vec![a, b], BTreeSet::from(['A']), BTreeSet::from(['B'])).expect("valid groups");
    template.chains[1].residues[0].backbone[1] = Some([0.0, 0.0, distance]);
    (0..n)
        .map(|i| {
            let t = crate::geometry::RigidTransform::random(&mut rng, 5.0);
            let mut c = t.apply_complex(&template);
            c.pdb_id = format!("PAIR{i}");
            c
        })
        .collect()
}

/// A random point mutation at an interface residue of `complex`.
pub fn random_mutations(complex: &Complex, n_sites: usize, rng: &mut Rng) -> MutationSet {
    let all: Vec<&Residue> = complex.residues().filter(|r| r.has_full_backbone()).collect();
    let mut picked = BTreeSet::new();
    while picked.len() < n_sites.min(all.len()) {
        picked.insert(rng.random_range(0..all.len()));
    }
    MutationSet::new(
        picked
            .into_iter()
            .map(|i| {
                let r = all[i];
                let mut mt = random_aa(rng);
                while mt == r.aa {
                    mt = random_aa(rng);
                }
                Mutation::new(r.aa, r.id, mt)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complexes_are_reproducible_and_complete() {
        let a = two_chain_complex("S", 4, 5, 6.0, 1);
        let b = two_chain_complex("S", 4, 5, 6.0, 1);
        assert_eq!(a, b);
        assert_eq!(a.n_residues(), 9);
        assert!(a.residues().all(Residue::has_full_backbone));
        let m = random_mutations(&a, 2, &mut seeded(3));
        assert_eq!(m.len(), 2);
        assert!(crate::ingest::apply_mutation_set(&a, &m).is_ok());
    }
}
