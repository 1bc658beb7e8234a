//! Maximal approximate input-output (alternating) simulation relations
//! between finite transition systems.
//!
//! The condition on a pair `(x₁, x₂)`: for every `u₁ ∈ U₁(x₁)` some single
//! `u₂ ∈ U₂(x₂)` is within `ε_u` of `u₁`, has measured output within `ε_y`,
//! and matches successors (every `u₁`-successor of `x₁` is related to some
//! `u₂`-successor of `x₂`; the alternating kind swaps the quantifiers).

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::inf_dist;
use crate::transition::FiniteTransitionSystem;

/// Absolute slack on `ε_u`/`ε_y` comparisons.
pub const METRIC_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Ios,
    Ioas,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRelation {
    pub pairs: BTreeSet<(usize, usize)>,
    pub eps_u: f64,
    pub eps_y: f64,
    pub kind: RelationKind,
}

impl SimRelation {
    pub fn contains(&self, x1: usize, x2: usize) -> bool {
        self.pairs.contains(&(x1, x2))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn same_tau(t1: &FiniteTransitionSystem, t2: &FiniteTransitionSystem) -> Result<()> {
    let (a, b) = (t1.tau(), t2.tau());
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
        return Err(Error::TauMismatch(a, b));
    }
    Ok(())
}

struct Game<'a> {
    t1: &'a FiniteTransitionSystem,
    t2: &'a FiniteTransitionSystem,
    kind: RelationKind,
    /// Per pair and per enabled `u₁`: the `u₂` witnesses passing the
    /// input and output closeness tests.
    candidates: Vec<Vec<Vec<usize>>>,
}

impl<'a> Game<'a> {
    fn new(
        t1: &'a FiniteTransitionSystem,
        t2: &'a FiniteTransitionSystem,
        eps_u: f64,
        eps_y: f64,
        kind: RelationKind,
    ) -> Result<Self> {
        same_tau(t1, t2)?;
        if !(eps_u >= 0.0 && eps_y >= 0.0) {
            return Err(Error::InvalidArgument(format!("precisions must be nonnegative (eps_u = {eps_u}, eps_y = {eps_y})")));
        }
        let n2 = t2.num_states();
        let candidates = (0..t1.num_states() * n2)
            .into_par_iter()
            .map(|pair| {
                let (x1, x2) = (pair / n2, pair % n2);
                t1.enabled_inputs(x1)
                    .map(|u1| {
                        t2.enabled_inputs(x2)
                            .filter(|&u2| {
                                inf_dist(t1.input(u1), t2.input(u2)) <= eps_u + METRIC_TOLERANCE
                                    && inf_dist(t1.measured_output(x1, u1), t2.measured_output(x2, u2))
                                        <= eps_y + METRIC_TOLERANCE
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { t1, t2, kind, candidates })
    }

    fn n2(&self) -> usize {
        self.t2.num_states()
    }

    fn successors_match(&self, x1: usize, u1: usize, x2: usize, u2: usize, rel: &[bool]) -> bool {
        let n2 = self.n2();
        let p1 = self.t1.successors(x1, u1);
        let p2 = self.t2.successors(x2, u2);
        match self.kind {
            RelationKind::Ios => p1.iter().all(|&a| p2.iter().any(|&b| rel[a * n2 + b])),
            RelationKind::Ioas => p2.iter().all(|&b| p1.iter().any(|&a| rel[a * n2 + b])),
        }
    }

    fn pair_survives(&self, pair: usize, rel: &[bool]) -> bool {
        let n2 = self.n2();
        let (x1, x2) = (pair / n2, pair % n2);
        let enabled: Vec<usize> = self.t1.enabled_inputs(x1).collect();
        enabled
            .iter()
            .zip(&self.candidates[pair])
            .all(|(&u1, witnesses)| witnesses.iter().any(|&u2| self.successors_match(x1, u1, x2, u2, rel)))
    }

    /// One synchronous deletion round against the previous relation.
    fn refine(&self, rel: &[bool]) -> Vec<bool> {
        (0..rel.len()).into_par_iter().map(|pair| rel[pair] && self.pair_survives(pair, rel)).collect()
    }

    fn greatest_fixed_point(&self) -> Vec<bool> {
        let mut rel = vec![true; self.t1.num_states() * self.n2()];
        loop {
            let next = self.refine(&rel);
            if next == rel {
                return rel;
            }
            rel = next;
        }
    }

    fn to_relation(&self, rel: &[bool], eps_u: f64, eps_y: f64) -> SimRelation {
        let n2 = self.n2();
        SimRelation {
            pairs: rel.iter().enumerate().filter(|(_, &keep)| keep).map(|(p, _)| (p / n2, p % n2)).collect(),
            eps_u,
            eps_y,
            kind: self.kind,
        }
    }
}

fn max_relation(
    t1: &FiniteTransitionSystem,
    t2: &FiniteTransitionSystem,
    eps_u: f64,
    eps_y: f64,
    kind: RelationKind,
) -> Result<SimRelation> {
    let game = Game::new(t1, t2, eps_u, eps_y, kind)?;
    let rel = game.greatest_fixed_point();
    Ok(game.to_relation(&rel, eps_u, eps_y))
}

/// Largest relation `R ⊆ X₁ × X₂` witnessing that `t2` simulates `t1`.
pub fn max_ios_relation(t1: &FiniteTransitionSystem, t2: &FiniteTransitionSystem, eps_u: f64, eps_y: f64) -> Result<SimRelation> {
    max_relation(t1, t2, eps_u, eps_y, RelationKind::Ios)
}

/// Largest alternating relation: every `u₂`-successor of `x₂` must be
/// related to some `u₁`-successor of `x₁`.
pub fn max_ioas_relation(
    t1: &FiniteTransitionSystem,
    t2: &FiniteTransitionSystem,
    eps_u: f64,
    eps_y: f64,
) -> Result<SimRelation> {
    max_relation(t1, t2, eps_u, eps_y, RelationKind::Ioas)
}

/// Applies one deletion round to `rel` and returns what survives.
pub fn refine_once(t1: &FiniteTransitionSystem, t2: &FiniteTransitionSystem, rel: &SimRelation) -> Result<SimRelation> {
    let game = Game::new(t1, t2, rel.eps_u, rel.eps_y, rel.kind)?;
    let n2 = t2.num_states();
    let mut mask = vec![false; t1.num_states() * n2];
    for &(a, b) in &rel.pairs {
        if a >= t1.num_states() || b >= n2 {
            return Err(Error::IndexOutOfRange(format!("relation pair ({a}, {b})")));
        }
        mask[a * n2 + b] = true;
    }
    Ok(game.to_relation(&game.refine(&mask), rel.eps_u, rel.eps_y))
}

/// Whether `rel` is itself a relation of its kind: every pair survives a
/// deletion round against `rel`. Only the listed pairs are examined, so this
/// stays cheap where the maximal relation would not.
pub fn is_simulation_relation(t1: &FiniteTransitionSystem, t2: &FiniteTransitionSystem, rel: &SimRelation) -> Result<bool> {
    same_tau(t1, t2)?;
    if let Some(&(a, b)) = rel.pairs.iter().find(|&&(a, b)| a >= t1.num_states() || b >= t2.num_states()) {
        return Err(Error::IndexOutOfRange(format!("relation pair ({a}, {b})")));
    }
    let (eps_u, eps_y) = (rel.eps_u + METRIC_TOLERANCE, rel.eps_y + METRIC_TOLERANCE);
    // related states of the quantified side, sorted, for set intersection
    let mut related = vec![Vec::new(); if rel.kind == RelationKind::Ios { t1.num_states() } else { t2.num_states() }];
    for &(a, b) in &rel.pairs {
        match rel.kind {
            RelationKind::Ios => related[a].push(b),
            RelationKind::Ioas => related[b].push(a),
        }
    }
    let pairs: Vec<(usize, usize)> = rel.pairs.iter().copied().collect();
    Ok(pairs.par_iter().all(|&(x1, x2)| {
        t1.enabled_inputs(x1).all(|u1| {
            t2.enabled_inputs(x2).any(|u2| {
                if inf_dist(t1.input(u1), t2.input(u2)) > eps_u
                    || inf_dist(t1.measured_output(x1, u1), t2.measured_output(x2, u2)) > eps_y
                {
                    return false;
                }
                let (p1, p2) = (t1.successors(x1, u1), t2.successors(x2, u2));
                match rel.kind {
                    RelationKind::Ios => p1.iter().all(|&a| meets(&related[a], p2)),
                    RelationKind::Ioas => p2.iter().all(|&b| meets(&related[b], p1)),
                }
            })
        })
    }))
}

/// Whether two sorted index lists share an element.
fn meets(xs: &[usize], ys: &[usize]) -> bool {
    let (short, long) = if xs.len() <= ys.len() { (xs, ys) } else { (ys, xs) };
    short.iter().any(|x| long.binary_search(x).is_ok())
}

/// Every state of `t1` occurs as the first component of some pair.
pub fn check_covering(rel: &SimRelation, t1: &FiniteTransitionSystem) -> bool {
    let covered: BTreeSet<usize> = rel.pairs.iter().map(|&(a, _)| a).collect();
    (0..t1.num_states()).all(|s| covered.contains(&s))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random system with dyadic inputs/outputs so closeness tests are exact.
    pub(crate) fn random_system(rng: &mut impl Rng, max_states: usize, max_inputs: usize, tau: f64) -> FiniteTransitionSystem {
        let ns = rng.gen_range(1..=max_states);
        let ni = rng.gen_range(1..=max_inputs);
        let states: Vec<Vec<f64>> = (0..ns).map(|s| vec![s as f64]).collect();
        let inputs: Vec<Vec<f64>> = (0..ni).map(|_| vec![rng.gen_range(0..4) as f64 * 0.25]).collect();
        let mut post = vec![vec![Vec::new(); ni]; ns];
        let mut outputs = vec![vec![Vec::new(); ni]; ns];
        for s in 0..ns {
            for i in 0..ni {
                for t in 0..ns {
                    if rng.gen_bool(0.4) {
                        post[s][i].push(t);
                    }
                }
                outputs[s][i] = vec![rng.gen_range(0..4) as f64 * 0.25];
            }
        }
        FiniteTransitionSystem::from_parts(states, inputs, post, outputs.clone(), outputs, tau).unwrap()
    }

    fn pair_ok(
        t1: &FiniteTransitionSystem,
        t2: &FiniteTransitionSystem,
        x1: usize,
        x2: usize,
        eps: (f64, f64),
        kind: RelationKind,
        rel: &dyn Fn(usize, usize) -> bool,
    ) -> bool {
        t1.enabled_inputs(x1).all(|u1| {
            t2.enabled_inputs(x2).any(|u2| {
                let close = (t1.input(u1)[0] - t2.input(u2)[0]).abs() <= eps.0
                    && (t1.measured_output(x1, u1)[0] - t2.measured_output(x2, u2)[0]).abs() <= eps.1;
                let p1 = t1.successors(x1, u1);
                let p2 = t2.successors(x2, u2);
                let matched = match kind {
                    RelationKind::Ios => p1.iter().all(|&a| p2.iter().any(|&b| rel(a, b))),
                    RelationKind::Ioas => p2.iter().all(|&b| p1.iter().any(|&a| rel(a, b))),
                };
                close && matched
            })
        })
    }

    /// Union of every self-consistent relation, found by enumerating subsets.
    pub(crate) fn brute_force(
        t1: &FiniteTransitionSystem,
        t2: &FiniteTransitionSystem,
        eps: (f64, f64),
        kind: RelationKind,
    ) -> BTreeSet<(usize, usize)> {
        let (n1, n2) = (t1.num_states(), t2.num_states());
        let npairs = n1 * n2;
        assert!(npairs <= 20);
        let mut union = 0u64;
        for mask in 0u64..(1 << npairs) {
            let member = |a: usize, b: usize| mask >> (a * n2 + b) & 1 == 1;
            let valid = (0..npairs).filter(|p| mask >> p & 1 == 1).all(|p| pair_ok(t1, t2, p / n2, p % n2, eps, kind, &member));
            if valid {
                union |= mask;
            }
        }
        (0..npairs).filter(|p| union >> p & 1 == 1).map(|p| (p / n2, p % n2)).collect()
    }

    fn identity_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..n).map(|s| (s, s))
    }

    #[test]
    fn reflexive_exact_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = random_system(&mut rng, 4, 2, 0.1);
            let r = max_ios_relation(&t, &t, 0.0, 0.0).unwrap();
            assert!(identity_pairs(t.num_states()).all(|(a, b)| r.contains(a, b)));
            assert!(check_covering(&r, &t));
        }
    }

    #[test]
    fn oracle_equivalence_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..60 {
            let t1 = random_system(&mut rng, 3, 2, 0.2);
            let t2 = random_system(&mut rng, 3, 2, 0.2);
            let eps = (rng.gen_range(0..3) as f64 * 0.25, rng.gen_range(0..3) as f64 * 0.25);
            for kind in [RelationKind::Ios, RelationKind::Ioas] {
                let fast = max_relation(&t1, &t2, eps.0, eps.1, kind).unwrap();
                assert_eq!(fast.pairs, brute_force(&t1, &t2, eps, kind), "case {case} {kind:?}");
            }
        }
    }

    #[test]
    fn oracle_equivalence_four_by_four() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut seen = 0;
        while seen < 3 {
            let t1 = random_system(&mut rng, 4, 2, 0.2);
            let t2 = random_system(&mut rng, 4, 2, 0.2);
            if t1.num_states() != 4 || t2.num_states() != 4 {
                continue;
            }
            seen += 1;
            for kind in [RelationKind::Ios, RelationKind::Ioas] {
                let fast = max_relation(&t1, &t2, 0.25, 0.25, kind).unwrap();
                assert_eq!(fast.pairs, brute_force(&t1, &t2, (0.25, 0.25), kind));
            }
        }
    }

    #[test]
    fn alternating_is_stricter_on_extra_successor() {
        // t2 has an extra successor under the only input that leads to a
        // state with no counterpart in t1
        let states = vec![vec![0.0], vec![1.0]];
        let inputs = vec![vec![0.0]];
        let t1 = FiniteTransitionSystem::from_parts(
            states.clone(),
            inputs.clone(),
            vec![vec![vec![0]], vec![vec![1]]],
            vec![vec![vec![0.0]], vec![vec![0.0]]],
            vec![vec![vec![0.0]], vec![vec![0.0]]],
            1.0,
        )
        .unwrap();
        let t2 = FiniteTransitionSystem::from_parts(
            states,
            inputs,
            vec![vec![vec![0, 1]], vec![vec![]]],
            vec![vec![vec![0.0]], vec![vec![0.0]]],
            vec![vec![vec![0.0]], vec![vec![0.0]]],
            1.0,
        )
        .unwrap();
        let ios = max_ios_relation(&t1, &t2, 0.0, 0.0).unwrap();
        let ioas = max_ioas_relation(&t1, &t2, 0.0, 0.0).unwrap();
        assert!(ios.contains(0, 0));
        assert!(!ioas.contains(0, 0));
        assert!(ioas.pairs.is_subset(&ios.pairs));
        assert!(ioas.len() < ios.len());
        // x₂ = 1 has no enabled input, so pairs (x₁, 1) with U₁(x₁) ≠ ∅ fail
        assert!(!ios.contains(0, 1) && !ios.contains(1, 1));
    }

    #[test]
    fn deterministic_kinds_coincide() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut checked = 0;
        while checked < 30 {
            let t = random_system(&mut rng, 4, 2, 0.1);
            if !t.is_deterministic() {
                continue;
            }
            checked += 1;
            let a = max_ios_relation(&t, &t, 0.0, 0.0).unwrap();
            let b = max_ioas_relation(&t, &t, 0.0, 0.0).unwrap();
            assert_eq!(a.pairs, b.pairs);
        }
    }

    #[test]
    fn tau_mismatch_and_covering() {
        let t1 = FiniteTransitionSystem::new(vec![vec![0.0]], vec![vec![0.0]], 0.1).unwrap();
        let t2 = FiniteTransitionSystem::new(vec![vec![0.0]], vec![vec![0.0]], 0.2).unwrap();
        assert!(matches!(max_ios_relation(&t1, &t2, 0.0, 0.0), Err(Error::TauMismatch(..))));
        let empty = SimRelation { pairs: BTreeSet::new(), eps_u: 0.0, eps_y: 0.0, kind: RelationKind::Ios };
        assert!(!check_covering(&empty, &t1));
        let json = empty.to_json().unwrap();
        assert_eq!(SimRelation::from_json(&json).unwrap(), empty);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn monotone_in_precision_and_stable(seed in any::<u64>(), kind_bit in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t1 = random_system(&mut rng, 4, 2, 0.1);
            let t2 = random_system(&mut rng, 4, 2, 0.1);
            let kind = if kind_bit { RelationKind::Ios } else { RelationKind::Ioas };
            let small = max_relation(&t1, &t2, 0.25, 0.0, kind).unwrap();
            let large = max_relation(&t1, &t2, 0.5, 0.25, kind).unwrap();
            prop_assert!(small.pairs.is_subset(&large.pairs));
            let again = refine_once(&t1, &t2, &large).unwrap();
            prop_assert_eq!(again.pairs, large.pairs);
        }

        #[test]
        fn sparse_check_agrees_with_a_deletion_round(seed in any::<u64>(), kind_bit in any::<bool>(), drop_mask in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t1 = random_system(&mut rng, 4, 2, 0.1);
            let t2 = random_system(&mut rng, 4, 2, 0.1);
            let kind = if kind_bit { RelationKind::Ios } else { RelationKind::Ioas };
            let mut rel = max_relation(&t1, &t2, 0.5, 0.25, kind).unwrap();
            prop_assert!(is_simulation_relation(&t1, &t2, &rel).unwrap());
            // arbitrary subsets, including ones that are not relations
            let all: Vec<(usize, usize)> = (0..t1.num_states()).flat_map(|a| (0..t2.num_states()).map(move |b| (a, b))).collect();
            rel.pairs = all.into_iter().enumerate().filter(|(k, _)| drop_mask >> (k % 64) & 1 == 1).map(|(_, p)| p).collect();
            let stable = refine_once(&t1, &t2, &rel).unwrap().pairs == rel.pairs;
            prop_assert_eq!(is_simulation_relation(&t1, &t2, &rel).unwrap(), stable);
        }
    }
}
