use std::collections::BTreeSet;

use ebmddg::ddg::{ddg_full_form, BaTerms, DegeneracyRatios, EnergyTerms};
use ebmddg::energy::{energy_of, EnergyConfig, EnergyModel};
use ebmddg::eval::{make_folds, pearson, spearman, Role};
use ebmddg::geometry::{select_around, RigidTransform};
use ebmddg::ingest::{apply_mutation_set, parse_pdb, write_backbone_pdb, Point};
use ebmddg::rng::seeded;
use ebmddg::sampler::{langevin, LangevinConfig, SamplerError, Schedule};
use ebmddg::synthetic::{random_mutations, two_chain_complex};
use proptest::prelude::*;

fn chains(s: &str) -> BTreeSet<char> {
    s.chars().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pdb_round_trip_keeps_identity_and_coordinates(seed in 0u64..1000, n in 2usize..9) {
        let c = two_chain_complex("RT00", n, n + 1, 6.0, seed);
        let back = parse_pdb(&write_backbone_pdb(&c), "RT00", &chains("A"), &chains("B")).unwrap();
        prop_assert_eq!(back.n_residues(), c.n_residues());
        for (a, b) in c.residues().zip(back.residues()) {
            prop_assert_eq!(a.id, b.id);
            prop_assert_eq!(a.aa, b.aa);
            for (pa, pb) in a.backbone.iter().zip(&b.backbone) {
                let (pa, pb) = (pa.unwrap(), pb.unwrap());
                prop_assert!((0..3).all(|k| (pa[k] - pb[k]).abs() <= 5e-4));
            }
        }
    }

    #[test]
    fn reversed_mutation_restores_the_wild_type(seed in 0u64..1000, sites in 1usize..4) {
        let c = two_chain_complex("MU00", 6, 6, 5.5, seed);
        let muts = random_mutations(&c, sites, &mut seeded(seed + 1));
        let mutant = apply_mutation_set(&c, &muts).unwrap();
        prop_assert_eq!(apply_mutation_set(&mutant, &muts.reversed()).unwrap(), c);
        prop_assert_eq!(muts.reversed().reversed(), muts);
    }

    #[test]
    fn pearson_is_symmetric_bounded_and_affine_invariant(
        xy in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let Ok(r) = pearson(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert!((pearson(&y, &x).unwrap() - r).abs() < 1e-12);
            let x2: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            prop_assert!((pearson(&x2, &y).unwrap() - r).abs() < 1e-9);
        }
    }

    #[test]
    fn spearman_ignores_monotone_transforms(xy in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 3..25)) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let Ok(r) = spearman(&x, &y) {
            let x2: Vec<f64> = x.iter().map(|v| v.exp() * 3.0 - 1.0).collect();
            prop_assert!((spearman(&x2, &y).unwrap() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_is_invariant_under_rigid_motion(seed in 0u64..500) {
        let model = EnergyModel::init(EnergyConfig::default(), &mut seeded(seed));
        let c = two_chain_complex("EN00", 5, 5, 5.5, seed + 7);
        let neigh = select_around(&c, &[c.chains[0].residues[2].id], 6).unwrap();
        let t = RigidTransform::random(&mut seeded(seed + 13), 20.0);
        let moved = t.apply_all(&neigh.coords);
        let e0 = energy_of(&c, &neigh, None, &model).unwrap();
        let e1 = energy_of(&c, &neigh, Some(&moved), &model).unwrap();
        prop_assert!((e0 - e1).abs() <= 1e-9 * e0.abs().max(1.0));
    }

    #[test]
    fn scaling_one_degeneracy_shifts_by_its_log(
        e in prop::array::uniform4(-5.0f64..5.0),
        ba in prop::array::uniform4(-4.0f64..-0.01),
        kbt in 0.1f64..3.0,
        factor in 0.1f64..10.0,
    ) {
        let ba = BaTerms { bound_mut: ba[0], unbound_mut: ba[1], bound_wt: ba[2], unbound_wt: ba[3] };
        let e = EnergyTerms { bound_mut: e[0], unbound_mut: e[1], bound_wt: e[2], unbound_wt: e[3] };
        let ratios = DegeneracyRatios { omega_b_mut: 2.0, omega_u_mut: 3.0, omega_b_wt: 4.0, omega_u_wt: 6.0 };
        let base = ddg_full_form(&ba, &e, &ratios, kbt).unwrap();
        let scaled = ddg_full_form(&ba, &e, &DegeneracyRatios { omega_u_wt: 6.0 * factor, ..ratios }, kbt).unwrap();
        prop_assert!((scaled - base + kbt * factor.ln()).abs() < 1e-10);
    }

    #[test]
    fn folds_partition_split_keys(n in 3usize..80, seed in 0u64..1000) {
        let keys: Vec<String> = (0..n).map(|i| format!("K{i}")).collect();
        let plan = make_folds(&keys, 3, 0.1, seed).unwrap();
        let mut tested = BTreeSet::new();
        for f in 0..3 {
            let test = plan.keys(f, Role::Test).unwrap();
            let val = plan.keys(f, Role::Val).unwrap();
            let train = plan.keys(f, Role::Train).unwrap();
            prop_assert_eq!(test.len() + val.len() + train.len(), n);
            prop_assert!(!val.is_empty() && !train.is_empty());
            prop_assert!(tested.is_disjoint(&test));
            tested.extend(test);
        }
        prop_assert_eq!(tested.len(), n);
    }

    #[test]
    fn langevin_only_moves_movable_points(mask in prop::collection::vec(any::<bool>(), 1..20), seed in 0u64..1000) {
        let x0: Vec<Point> = (0..mask.len()).map(|i| [i as f64, -(i as f64), 0.5]).collect();
        let cfg = LangevinConfig { steps: 7, seed, schedule: Schedule::Constant, ..Default::default() };
        let grad = |x: &[Point]| Ok::<_, SamplerError>(x.iter().map(|p| [p[0], p[1], p[2]]).collect());
        let out = langevin(&x0, &mask, grad, &cfg).unwrap();
        prop_assert_eq!(out.snapshots.len(), 8);
        for ((a, b), m) in x0.iter().zip(out.last()).zip(&mask) {
            if !m {
                prop_assert!(a.iter().zip(b).all(|(u, v)| u.to_bits() == v.to_bits()));
            } else {
                prop_assert!(a != b);
            }
        }
    }
}
