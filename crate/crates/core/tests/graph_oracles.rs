mod common;

use std::collections::BTreeSet;

use civrep::graph::{connecting_trail, d_separated, d_separated_idx, is_valid_civ, Dag, Witness};
use common::{random_dag, subsets_up_to};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SCHEME: &str = include_str!("../dags/scheme.dag");
const SYNTHETIC: &str = include_str!("../dags/synthetic.dag");

#[test]
fn reachability_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let n = rng.random_range(2..=8);
        let g = random_dag(&mut rng, n, 0.3);
        for a in 0..n {
            for b in a + 1..n {
                let pool: Vec<usize> = (0..n).filter(|&v| v != a && v != b).collect();
                for z in subsets_up_to(&pool, 2) {
                    let lib_z: BTreeSet<usize> = z.iter().map(|&v| g.idx(v)).collect();
                    let fast = d_separated_idx(&g.dag, g.idx(a), g.idx(b), &lib_z);
                    assert_eq!(fast, g.brute_force_separated(a, b, &z), "{} a={a} b={b} z={z:?}", g.dag);
                }
            }
        }
    }
}

#[test]
fn witness_trails_are_open_walks() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0;
    for _ in 0..40 {
        let g = random_dag(&mut rng, 7, 0.35);
        let back: Vec<usize> = (0..7).map(|i| g.idx(i)).collect();
        let to_local = |v: usize| back.iter().position(|&b| b == v).unwrap();
        for a in 0..7 {
            for b in a + 1..7 {
                let z: BTreeSet<usize> = (0..7).filter(|&v| v != a && v != b && rng.random::<f64>() < 0.3).collect();
                let lib_z = z.iter().map(|&v| g.idx(v)).collect();
                if let Some(trail) = connecting_trail(&g.dag, g.idx(a), g.idx(b), &lib_z) {
                    let local: Vec<usize> = trail.into_iter().map(to_local).collect();
                    assert_eq!((local[0], *local.last().unwrap()), (a, b));
                    assert!(g.walk_open(&local, &z), "{} walk {local:?} z {z:?}", g.dag);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn shipped_graphs_verdicts() {
    let scheme = Dag::parse(SCHEME).unwrap();
    assert!(is_valid_civ(&scheme, "S", &["C", "F"], "W", "Y").unwrap().valid);
    let v = is_valid_civ(&scheme, "S", &[], "W", "Y").unwrap();
    assert!(!v.valid);
    assert!(matches!(v.exogeneity_witness, Some(Witness::OpenPath { .. })));

    let synth = Dag::parse(SYNTHETIC).unwrap();
    assert!(is_valid_civ(&synth, "S", &["X1", "X2"], "W", "Y").unwrap().valid);
    // leaving X2 out opens S <- X2 <- U3 -> Y
    assert!(!is_valid_civ(&synth, "S", &["X1"], "W", "Y").unwrap().valid);
    // X3 is a confounder proxy, not an instrument
    assert!(!is_valid_civ(&synth, "X3", &[], "W", "Y").unwrap().valid);
}

#[test]
fn classic_structures() {
    let g = Dag::from_edges(&[("A", "B"), ("B", "C")], &[]).unwrap();
    assert!(!d_separated(&g, "A", "C", &[]).unwrap());
    assert!(d_separated(&g, "A", "C", &["B"]).unwrap());
    let fork = Dag::from_edges(&[("B", "A"), ("B", "C")], &[]).unwrap();
    assert!(d_separated(&fork, "A", "C", &["B"]).unwrap());
    let collider = Dag::from_edges(&[("A", "B"), ("C", "B"), ("B", "D")], &[]).unwrap();
    assert!(d_separated(&collider, "A", "C", &[]).unwrap());
    assert!(!d_separated(&collider, "A", "C", &["B"]).unwrap());
    assert!(!d_separated(&collider, "A", "C", &["D"]).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn separation_is_symmetric(seed in any::<u64>(), n in 3usize..9, mask in any::<u16>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_dag(&mut rng, n, 0.35);
        let z: BTreeSet<usize> = (2..n).filter(|v| mask & (1 << v) != 0).map(|v| g.idx(v)).collect();
        let (a, b) = (g.idx(0), g.idx(1));
        prop_assert_eq!(d_separated_idx(&g.dag, a, b, &z), d_separated_idx(&g.dag, b, a, &z));
    }

    #[test]
    fn adjacent_nodes_never_separated(seed in any::<u64>(), mask in any::<u16>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_dag(&mut rng, 6, 0.5);
        for &(a, b) in &g.edges {
            let z: BTreeSet<usize> = (0..6).filter(|&v| v != a && v != b && mask & (1 << v) != 0).map(|v| g.idx(v)).collect();
            prop_assert!(!d_separated_idx(&g.dag, g.idx(a), g.idx(b), &z));
        }
    }
}
