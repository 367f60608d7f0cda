//! Shared oracles and fixtures for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use hhar::diffcore::{seed_rng, Rng, Tape, Tensor, Var};
use hhar::{Dataset, LabelHierarchy, SyntheticSpec};
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|, 1e-3)`. The floor keeps gradients that are
/// numerically zero from dividing round-off by round-off.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

pub fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Scalar readout `Σ (out + c)²` with a fixed random `c`. Unlike a plain sum
/// it has a non-trivial gradient through every op, including row softmax.
pub fn readout(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let shape = tape.value(out).shape().to_vec();
    let c = random_tensor(&shape, &mut seed_rng(seed));
    let c = tape.constant(c);
    let shifted = tape.add(out, c).unwrap();
    tape.sum_squares(shifted)
}

/// Largest relative error between reverse-mode and central-difference
/// gradients of `f` with respect to every entry of every input.
pub fn max_grad_error<F>(inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> hhar::Result<Var>,
{
    let eval = |values: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars).unwrap();
        let s = readout(&mut tape, out, 99);
        tape.value(s).data()[0]
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars).unwrap();
    let s = readout(&mut tape, out, 99);
    let grads = tape.backward(s).unwrap();

    let mut worst = 0.0f64;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for e in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[e] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[e] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic.data()[e], numeric));
        }
    }
    worst
}

/// Random tree with `n` real nodes under a virtual root `r`. Each node's
/// parent is the root or an earlier node.
pub fn random_tree(n: usize, rng: &mut Rng) -> LabelHierarchy {
    let edges: Vec<(String, String)> = (0..n)
        .map(|i| {
            let p = rng.random_range(0..=i);
            let parent = if p == i { "r".to_string() } else { format!("v{p}") };
            (parent, format!("v{i}"))
        })
        .collect();
    LabelHierarchy::from_edges(&edges).unwrap()
}

/// Ancestor sets by walking parent links, with the virtual root as `None`.
fn ancestor_set(h: &LabelHierarchy, v: usize) -> BTreeSet<Option<usize>> {
    let mut set = BTreeSet::from([None]);
    let mut cur = h.parent(v);
    while let Some(p) = cur {
        set.insert(Some(p));
        cur = h.parent(p);
    }
    set
}

/// `A[i][j] = |H(i) ∩ H(j)| / |H(i)|` by explicit set intersection.
pub fn brute_force_adjacency(h: &LabelHierarchy) -> Vec<Vec<f64>> {
    let sets: Vec<_> = (0..h.len()).map(|v| ancestor_set(h, v)).collect();
    (0..h.len())
        .map(|i| {
            (0..h.len())
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        sets[i].intersection(&sets[j]).count() as f64 / sets[i].len() as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// k-NN by sorting every distance; ties by train row, then by node index.
pub fn brute_force_knn(train: &[Vec<f64>], terminals: &[usize], nodes: usize, query: &[f64], k: usize) -> usize {
    let mut all: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, row)| (row.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum(), i))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; nodes];
    for &(_, i) in &all[..k] {
        votes[terminals[i]] += 1;
    }
    let top = *votes.iter().max().unwrap();
    votes.iter().position(|&v| v == top).unwrap()
}

/// still/walking at the top, sitting/standing under still.
pub fn four_node() -> LabelHierarchy {
    LabelHierarchy::from_edges(&[("r", "still"), ("r", "walking"), ("still", "sitting"), ("still", "standing")])
        .unwrap()
}

/// Dataset used for the learning and trend checks: depth 2, branching 3,
/// d = 16, ρ = 0.6, σ = 0.1, 100 samples per leaf, split 80/10/10.
pub fn reference_data(seed: u64) -> Dataset {
    let spec = SyntheticSpec { depth: 2, branching: 3, dim: 16, rho: 0.6, sigma: 0.1, per_leaf: 100, seed };
    hhar::generate_synthetic(&spec).unwrap().split([0.8, 0.1, 0.1], seed).unwrap()
}

/// A small, quick dataset for harness plumbing tests.
pub fn small_data(seed: u64) -> Dataset {
    let spec = SyntheticSpec { depth: 2, branching: 2, dim: 6, rho: 0.5, sigma: 0.1, per_leaf: 12, seed };
    hhar::generate_synthetic(&spec).unwrap().split([0.5, 0.25, 0.25], seed).unwrap()
}
