//! Average-cost relative value iteration on a finite MDP.
//!
//! Each sweep applies the Bellman operator `T h(z) = min_a [c(z,a) + sum P h]`
//! and re-centres at the reference state. The difference `T h - h` brackets
//! the optimal average cost: `min(Th - h) <= rho <= max(Th - h)`, so the
//! iteration stops once that span falls under `epsilon`.
//!
//! [`policy_evaluate`] and [`brute_force_best`] do not share code with the
//! solver and serve as oracles for it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::BeliefMdp;

const PARALLEL_THRESHOLD: usize = 8192;
/// Relative gap under which two Q-values count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once `span(T h - h) < epsilon`.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// State whose relative value is pinned to 0; `None` uses the MDP root.
    pub reference_state: Option<usize>,
    /// Self-loop weight `tau` of the aperiodicity transform
    /// `P -> tau P + (1 - tau) I`. `1.0` leaves the MDP unchanged; smaller
    /// values keep the optimal policy and gain but damp periodic oscillation.
    pub aperiodicity: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-7,
            max_iterations: 100_000,
            reference_state: None,
            aperiodicity: 1.0,
        }
    }
}

/// Solved stationary deterministic policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub actions: Vec<usize>,
    /// Average-cost estimate, midpoint of `[rho_lower, rho_upper]`.
    pub rho: f64,
    pub rho_lower: f64,
    pub rho_upper: f64,
    /// Relative values, zero at `reference_state`.
    pub h: Vec<f64>,
    pub reference_state: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Final `span(T h - h)`.
    pub span: f64,
}

impl PolicyTable {
    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }
}

#[inline]
fn damped_q(mdp: &BeliefMdp, state: usize, action: usize, h: &[f64], tau: f64) -> f64 {
    let expect: f64 = mdp.transitions(state, action).map(|(s, p)| p * h[s]).sum();
    mdp.cost(state, action) + tau * expect + (1.0 - tau) * h[state]
}

fn bellman(mdp: &BeliefMdp, h: &[f64], tau: f64, out: &mut [f64]) {
    let sweep = |(s, o): (usize, &mut f64)| {
        *o = (0..mdp.actions())
            .map(|a| damped_q(mdp, s, a, h, tau))
            .fold(f64::INFINITY, f64::min);
    };
    if mdp.states() >= PARALLEL_THRESHOLD {
        out.par_iter_mut().enumerate().for_each(sweep);
    } else {
        out.iter_mut().enumerate().for_each(sweep);
    }
}

/// Greedy action with the lowest index among (near-)minimal Q-values.
fn greedy(mdp: &BeliefMdp, state: usize, h: &[f64], tau: f64) -> usize {
    let q: Vec<f64> = (0..mdp.actions())
        .map(|a| damped_q(mdp, state, a, h, tau))
        .collect();
    let best = q.iter().copied().fold(f64::INFINITY, f64::min);
    q.iter()
        .position(|&v| v - best <= TIE_TOLERANCE * best.abs().max(v.abs()))
        .unwrap_or(0)
}

pub fn solve(mdp: &BeliefMdp, cfg: &SolverConfig) -> Result<PolicyTable> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            value: cfg.epsilon,
            reason: "must be positive",
        });
    }
    if !(cfg.aperiodicity > 0.0 && cfg.aperiodicity <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "aperiodicity",
            value: cfg.aperiodicity,
            reason: "must lie in (0, 1]",
        });
    }
    let reference = cfg.reference_state.unwrap_or(mdp.root());
    if reference >= mdp.states() {
        return Err(Error::PolicyMismatch(format!(
            "reference state {reference} out of range"
        )));
    }
    let tau = cfg.aperiodicity;
    let n = mdp.states();
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iterations {
        iterations += 1;
        bellman(mdp, &h, tau, &mut next);
        let (dlo, dhi) = next
            .iter()
            .zip(&h)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), d| (l.min(d), u.max(d)));
        lo = dlo;
        hi = dhi;
        let offset = next[reference];
        for (dst, src) in h.iter_mut().zip(&next) {
            *dst = src - offset;
        }
        if hi - lo < cfg.epsilon {
            converged = true;
            break;
        }
    }

    let actions = (0..n).map(|s| greedy(mdp, s, &h, tau)).collect();
    Ok(PolicyTable {
        actions,
        rho: 0.5 * (lo + hi),
        rho_lower: lo,
        rho_upper: hi,
        // relative values of the untransformed problem
        h: h.iter().map(|v| v * tau).collect(),
        reference_state: reference,
        iterations,
        converged,
        span: hi - lo,
    })
}

/// Long-run average cost of a fixed policy started from the MDP root.
///
/// Power iteration on the policy-induced chain, made lazy so periodic chains
/// converge. From a transient root the limit is the mixture of the recurrent
/// classes the root reaches.
pub fn policy_evaluate(mdp: &BeliefMdp, policy: &[usize]) -> f64 {
    assert_eq!(policy.len(), mdp.states());
    const LAZY: f64 = 0.1;
    let n = mdp.states();
    let mut mu = vec![0.0; n];
    mu[mdp.root()] = 1.0;
    let mut next = vec![0.0; n];
    for _ in 0..1_000_000 {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (s, &w) in mu.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (t, p) in mdp.transitions(s, policy[s]) {
                next[t] += w * p;
            }
        }
        let residual: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        for (m, x) in mu.iter_mut().zip(&next) {
            *m = LAZY * *m + (1.0 - LAZY) * x;
        }
        if residual < 1e-12 {
            break;
        }
    }
    mu.iter()
        .enumerate()
        .map(|(s, w)| w * mdp.cost(s, policy[s]))
        .sum()
}

/// Best deterministic stationary policy by exhaustive enumeration.
pub fn brute_force_best(mdp: &BeliefMdp, max_states: usize) -> Result<(Vec<usize>, f64)> {
    let (n, a) = (mdp.states(), mdp.actions());
    let too_large = Error::TooLarge {
        states: n,
        actions: a,
    };
    if n > max_states {
        return Err(too_large);
    }
    let count = (a as u64).checked_pow(n as u32).ok_or(too_large)?;
    if count > 20_000_000 {
        return Err(Error::TooLarge {
            states: n,
            actions: a,
        });
    }
    let mut policy = vec![0usize; n];
    let mut best = (policy.clone(), policy_evaluate(mdp, &policy));
    for _ in 1..count {
        for slot in policy.iter_mut() {
            *slot += 1;
            if *slot < a {
                break;
            }
            *slot = 0;
        }
        let cost = policy_evaluate(mdp, &policy);
        if cost < best.1 {
            best = (policy.clone(), cost);
        }
    }
    Ok(best)
}

/// JSON layout of a solved policy together with what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub graph_hash: String,
    pub graph: crate::space::GraphSpec,
    pub cost: crate::space::CostModel,
    pub solver: SolverConfig,
    pub table: PolicyTable,
}
