#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use serde::Deserialize;
use symqsr::composition::{build_feedback_relation, compose, ComposedSystem, Composition, OutputMode};
use symqsr::relations::{max_ioas_relation, RelationKind};
use symqsr::transition::FiniteTransitionSystem;

/// Scalar system with quarter-step inputs and outputs so every distance
/// comparison is exact in binary floating point.
pub fn random_system(rng: &mut impl Rng, max_states: usize, max_inputs: usize, tau: f64) -> FiniteTransitionSystem {
    let ns = rng.gen_range(1..=max_states);
    let ni = rng.gen_range(1..=max_inputs);
    let states: Vec<Vec<f64>> = (0..ns).map(|s| vec![s as f64]).collect();
    let inputs: Vec<Vec<f64>> = (0..ni).map(|_| vec![rng.gen_range(0..4) as f64 * 0.25]).collect();
    let mut post = vec![vec![Vec::new(); ni]; ns];
    let mut outputs = vec![vec![Vec::new(); ni]; ns];
    for s in 0..ns {
        for i in 0..ni {
            for t in 0..ns {
                if rng.gen_bool(0.45) {
                    post[s][i].push(t);
                }
            }
            outputs[s][i] = vec![rng.gen_range(0..4) as f64 * 0.25];
        }
    }
    FiniteTransitionSystem::from_parts(states, inputs, post, outputs.clone(), outputs, tau).unwrap()
}

fn consistent_pair(
    t1: &FiniteTransitionSystem,
    t2: &FiniteTransitionSystem,
    x1: usize,
    x2: usize,
    eps: (f64, f64),
    kind: RelationKind,
    member: &dyn Fn(usize, usize) -> bool,
) -> bool {
    let enabled = |t: &FiniteTransitionSystem, x: usize| -> Vec<usize> {
        (0..t.num_inputs()).filter(|&i| !t.successors(x, i).is_empty()).collect()
    };
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    enabled(t1, x1).into_iter().all(|u1| {
        enabled(t2, x2).into_iter().any(|u2| {
            if dist(t1.input(u1), t2.input(u2)) > eps.0 || dist(t1.measured_output(x1, u1), t2.measured_output(x2, u2)) > eps.1 {
                return false;
            }
            let (p1, p2) = (t1.successors(x1, u1), t2.successors(x2, u2));
            match kind {
                RelationKind::Ios => p1.iter().all(|&a| p2.iter().any(|&b| member(a, b))),
                RelationKind::Ioas => p2.iter().all(|&b| p1.iter().any(|&a| member(a, b))),
            }
        })
    })
}

/// Largest relation by exhaustion: the union of every subset of pairs that
/// is closed under the simulation condition.
pub fn exhaustive_relation(
    t1: &FiniteTransitionSystem,
    t2: &FiniteTransitionSystem,
    eps: (f64, f64),
    kind: RelationKind,
) -> BTreeSet<(usize, usize)> {
    let (n1, n2) = (t1.num_states(), t2.num_states());
    let npairs = n1 * n2;
    assert!(npairs <= 20, "too many pairs for exhaustion");
    let mut union = 0u64;
    for mask in 0u64..(1u64 << npairs) {
        let member = |a: usize, b: usize| mask >> (a * n2 + b) & 1 == 1;
        let closed =
            (0..npairs).filter(|p| mask >> p & 1 == 1).all(|p| consistent_pair(t1, t2, p / n2, p % n2, eps, kind, &member));
        if closed {
            union |= mask;
        }
    }
    (0..npairs).filter(|p| union >> p & 1 == 1).map(|p| (p / n2, p % n2)).collect()
}

#[derive(Deserialize)]
struct FixtureEdge {
    from: f64,
    input: f64,
    to: f64,
}

#[derive(Deserialize)]
struct Fixture {
    states: Vec<f64>,
    inputs: Vec<f64>,
    edges: Vec<FixtureEdge>,
}

fn tenths(v: f64) -> i64 {
    (v * 10.0).round() as i64
}

/// `(states, inputs, edges)` of the checked-in first-order figure, in
/// integer multiples of 0.1.
pub fn figure_fixture() -> (Vec<i64>, Vec<i64>, BTreeSet<(i64, i64, i64)>) {
    let text = include_str!("../fixtures/example1_figure_edges.json");
    let f: Fixture = serde_json::from_str(text).unwrap();
    (
        f.states.iter().map(|&v| tenths(v)).collect(),
        f.inputs.iter().map(|&v| tenths(v)).collect(),
        f.edges.iter().map(|e| (tenths(e.from), tenths(e.input), tenths(e.to))).collect(),
    )
}

pub fn edges_in_tenths(ts: &FiniteTransitionSystem) -> BTreeSet<(i64, i64, i64)> {
    ts.transitions().map(|(s, i, t)| (tenths(ts.state(s)[0]), tenths(ts.input(i)[0]), tenths(ts.state(t)[0]))).collect()
}

pub struct ComposablePair {
    pub t1: FiniteTransitionSystem,
    pub t2: FiniteTransitionSystem,
    pub composed: ComposedSystem,
}

pub const TOY_EPS_U: f64 = 0.25;
pub const TOY_EPS_Y: f64 = 0.5;

/// Random pairs whose feedback composition exists and has a transition.
pub fn composable_pairs(rng: &mut impl Rng, count: usize) -> Vec<ComposablePair> {
    let modes = [OutputMode::Average, OutputMode::Left, OutputMode::Right];
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        assert!(attempts < 100 * count, "could not find enough composable pairs");
        let t1 = random_system(rng, 3, 2, 0.2);
        let t2 = random_system(rng, 3, 2, 0.2);
        let rel = max_ioas_relation(&t2, &t1, TOY_EPS_U, TOY_EPS_Y).unwrap();
        let f = build_feedback_relation(&t1, &t2, &rel, TOY_EPS_U, TOY_EPS_Y).unwrap();
        let mode = modes[out.len() % modes.len()];
        if let Composition::Composed(c) = compose(&t1, &t2, &f, mode, TOY_EPS_U, TOY_EPS_Y).unwrap() {
            if c.ts.num_transitions() > 0 {
                out.push(ComposablePair { t1, t2, composed: c });
            }
        }
    }
    out
}

/// Per-cell tables indexed `[state][input]`.
type Cells<T> = Vec<Vec<Vec<T>>>;

fn parts(ts: &FiniteTransitionSystem) -> (Cells<usize>, Cells<f64>, Cells<f64>) {
    let (ns, ni) = (ts.num_states(), ts.num_inputs());
    let post = (0..ns).map(|s| (0..ni).map(|i| ts.successors(s, i).to_vec()).collect()).collect();
    let measured = (0..ns).map(|s| (0..ni).map(|i| ts.measured_output(s, i).to_vec()).collect()).collect();
    let system = (0..ns).map(|s| (0..ni).map(|i| ts.system_output(s, i).to_vec()).collect()).collect();
    (post, measured, system)
}

/// Output of the transition's cell moved far from every output either
/// component can produce.
pub fn corrupt_output(ts: &FiniteTransitionSystem, s: usize, i: usize) -> FiniteTransitionSystem {
    let mut out = ts.clone();
    let far = vec![1.0e3; ts.measured_output(s, i).len()];
    out.set_outputs(s, i, far.clone(), far).unwrap();
    out
}

/// Copy of the transition under a new input far from every component input.
pub fn add_foreign_input(ts: &FiniteTransitionSystem, s: usize, i: usize, t: usize) -> FiniteTransitionSystem {
    let (mut post, mut measured, mut system) = parts(ts);
    let mut inputs = ts.inputs().to_vec();
    inputs.push(vec![-1.0e3; ts.input(i).len()]);
    for k in 0..ts.num_states() {
        post[k].push(if k == s { vec![t] } else { Vec::new() });
        measured[k].push(ts.measured_output(k, i).to_vec());
        system[k].push(ts.system_output(k, i).to_vec());
    }
    FiniteTransitionSystem::from_parts(ts.states().to_vec(), inputs, post, measured, system, ts.tau()).unwrap()
}

/// Transition redirected to another state, when one exists.
pub fn retarget(ts: &FiniteTransitionSystem, s: usize, i: usize, t: usize) -> Option<FiniteTransitionSystem> {
    let other = (0..ts.num_states()).find(|&k| k != t && !ts.successors(s, i).contains(&k))?;
    let (mut post, measured, system) = parts(ts);
    post[s][i].retain(|&k| k != t);
    post[s][i].push(other);
    Some(
        FiniteTransitionSystem::from_parts(ts.states().to_vec(), ts.inputs().to_vec(), post, measured, system, ts.tau()).unwrap(),
    )
}
