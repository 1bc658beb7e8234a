//! Relation engine against exhaustive enumeration, and feedback
//! composition against component simulation plus injected faults.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symqsr::composition::{check_prop_5_2, ComposedSystem};
use symqsr::relations::{max_ioas_relation, max_ios_relation, RelationKind};

#[test]
fn maximal_relations_match_exhaustion() {
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let eps_choices = [(0.0, 0.0), (0.25, 0.25), (0.5, 0.25), (0.25, 0.5), (1.0, 1.0)];
    for case in 0..100 {
        let t1 = common::random_system(&mut rng, 4, 2, 0.1);
        let t2 = common::random_system(&mut rng, 4, 2, 0.1);
        let eps = eps_choices[case % eps_choices.len()];
        let ios = max_ios_relation(&t1, &t2, eps.0, eps.1).unwrap();
        assert_eq!(ios.pairs, common::exhaustive_relation(&t1, &t2, eps, RelationKind::Ios), "ios case {case}");
        let ioas = max_ioas_relation(&t1, &t2, eps.0, eps.1).unwrap();
        assert_eq!(ioas.pairs, common::exhaustive_relation(&t1, &t2, eps, RelationKind::Ioas), "ioas case {case}");
    }
}

#[test]
fn relation_json_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t1 = common::random_system(&mut rng, 4, 2, 0.1);
    let rel = max_ios_relation(&t1, &t1, 0.0, 0.0).unwrap();
    let back = symqsr::relations::SimRelation::from_json(&rel.to_json().unwrap()).unwrap();
    assert_eq!(back, rel);
}

#[test]
fn composed_systems_are_simulated_by_both_components() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for pair in common::composable_pairs(&mut rng, 50) {
        assert!(check_prop_5_2(&pair.composed, &pair.t1, &pair.t2).unwrap());
    }
}

fn mutated(c: &ComposedSystem, ts: symqsr::transition::FiniteTransitionSystem) -> ComposedSystem {
    ComposedSystem { ts, ..c.clone() }
}

#[test]
fn injected_faults_break_the_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let (mut injected, mut flipped) = (0usize, 0usize);
    for pair in common::composable_pairs(&mut rng, 50) {
        let c = &pair.composed;
        for (s, i, t) in c.ts.transitions() {
            for faulty in [common::corrupt_output(&c.ts, s, i), common::add_foreign_input(&c.ts, s, i, t)] {
                injected += 1;
                if !check_prop_5_2(&mutated(c, faulty), &pair.t1, &pair.t2).unwrap() {
                    flipped += 1;
                }
            }
        }
    }
    assert!(injected > 100);
    assert!(flipped as f64 >= 0.95 * injected as f64, "{flipped} of {injected}");
}
