//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use pulltrack::BeliefMdp;
use rand::Rng;

/// Bit of source `k` (0-based, source 0 most significant) in configuration `x`.
pub fn bit(k: usize, x: usize, source: usize) -> usize {
    (x >> (k - 1 - source)) & 1
}

/// Independent-source transition entry: product of per-source stay/flip.
pub fn independent_entry(k: usize, p: f64, x: usize, y: usize) -> f64 {
    (0..k)
        .map(|s| if bit(k, x, s) == bit(k, y, s) { p } else { 1.0 - p })
        .product()
}

/// Fully coupled transition entry, case by case.
pub fn coupled_entry(k: usize, p: f64, theta: f64, x: usize, y: usize) -> f64 {
    let ones = (1usize << k) - 1;
    let q = 1.0 - p;
    match (x, y) {
        (0, 0) => p,
        (0, b) if b == ones => q,
        (a, b) if a == ones && b == ones => p,
        (a, 0) if a == ones => q,
        (a, 0) if a != 0 && a != ones => theta,
        (a, b) if a != 0 && a != ones && b == ones => 1.0 - theta,
        _ => 0.0,
    }
}

pub fn partial_entry(k: usize, p: f64, theta: f64, lambda: f64, x: usize, y: usize) -> f64 {
    lambda * coupled_entry(k, p, theta, x, y) + (1.0 - lambda) * independent_entry(k, p, x, y)
}

/// Posterior over the next joint configuration given that source `u` had
/// value `m`, by enumerating all (X, X') pairs.
pub fn bayes_posterior(k: usize, belief: &[f64], kernel: &dyn Fn(usize, usize) -> f64, u: usize, m: usize) -> Vec<f64> {
    let n = 1 << k;
    let mut joint = vec![vec![0.0; n]; n];
    for x in 0..n {
        for y in 0..n {
            joint[x][y] = belief[x] * kernel(x, y);
        }
    }
    let evidence: f64 = (0..n)
        .filter(|&x| bit(k, x, u) == m)
        .map(|x| joint[x].iter().sum::<f64>())
        .sum();
    (0..n)
        .map(|y| {
            (0..n)
                .filter(|&x| bit(k, x, u) == m)
                .map(|x| joint[x][y])
                .sum::<f64>()
                / evidence
        })
        .collect()
}

/// Per-source marginal update written as the double sum over the restricted
/// previous configurations and the next configurations with `X'_k = i`.
pub fn marginal_update(
    k: usize,
    belief: &[f64],
    kernel: &dyn Fn(usize, usize) -> f64,
    observed: Option<(usize, usize)>,
) -> Vec<[f64; 2]> {
    let n = 1 << k;
    let allowed = |x: usize| observed.is_none_or(|(u, m)| bit(k, x, u) == m);
    let norm: f64 = (0..n).filter(|&x| allowed(x)).map(|x| belief[x]).sum();
    (0..k)
        .map(|src| {
            let mut out = [0.0; 2];
            for (i, slot) in out.iter_mut().enumerate() {
                for x in (0..n).filter(|&x| allowed(x)) {
                    for y in (0..n).filter(|&y| bit(k, y, src) == i) {
                        *slot += belief[x] / norm * kernel(x, y);
                    }
                }
            }
            out
        })
        .collect()
}

pub fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Random MDP whose every row reaches state 0 with positive probability,
/// so every stationary policy is unichain and aperiodic.
pub fn random_mdp<R: Rng>(rng: &mut R, states: usize, actions: usize) -> BeliefMdp {
    let mut rows = Vec::with_capacity(states * actions);
    let mut cost = Vec::with_capacity(states * actions);
    for _ in 0..states * actions {
        let mut w: Vec<f64> = (0..states)
            .map(|_| if rng.random_bool(0.6) { rng.random::<f64>() } else { 0.0 })
            .collect();
        w[0] += 0.02 + 0.3 * rng.random::<f64>();
        let total: f64 = w.iter().sum();
        rows.push(
            w.iter()
                .enumerate()
                .filter(|(_, v)| **v > 0.0)
                .map(|(s, v)| (s, v / total))
                .collect(),
        );
        cost.push(rng.random::<f64>());
    }
    let root = rng.random_range(0..states);
    BeliefMdp::new(states, actions, root, rows, cost).unwrap()
}

/// Average cost of a policy on a unichain MDP from its stationary
/// distribution, solved directly by Gaussian elimination.
pub fn exact_average_cost(mdp: &BeliefMdp, policy: &[usize]) -> f64 {
    let n = mdp.states();
    // rows: (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    let mut a = vec![vec![0.0; n + 1]; n];
    for s in 0..n {
        for (t, p) in mdp.transitions(s, policy[s]) {
            a[t][s] += p;
        }
        a[s][s] -= 1.0;
    }
    for j in 0..n {
        a[n - 1][j] = 1.0;
    }
    a[n - 1][n] = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[row][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    (0..n).map(|s| a[s][n] * mdp.cost(s, policy[s])).sum()
}

/// Minimum of [`exact_average_cost`] over every deterministic policy.
pub fn exhaustive_optimum(mdp: &BeliefMdp) -> f64 {
    let (n, a) = (mdp.states(), mdp.actions());
    let mut policy = vec![0; n];
    let mut best = exact_average_cost(mdp, &policy);
    for _ in 1..a.pow(n as u32) {
        for slot in policy.iter_mut() {
            *slot += 1;
            if *slot < a {
                break;
            }
            *slot = 0;
        }
        best = best.min(exact_average_cost(mdp, &policy));
    }
    best
}
