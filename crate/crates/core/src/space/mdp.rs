use serde::{Deserialize, Serialize};

use super::BeliefGraph;
use crate::belief::{expected_cost, predict_n, DistortionKind};
use crate::error::{Error, Result};

const STOCHASTIC_TOLERANCE: f64 = 1e-10;

/// How the immediate cost of a belief state is charged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Weight of one transmission attempt.
    pub gamma: f64,
    pub kind: DistortionKind,
    /// Slots between the source value carried by an update and the slot in
    /// which the estimate built from it is scored. The tracked belief
    /// describes `X(t - update_lag)`; estimates use it propagated forward
    /// `update_lag` times.
    pub update_lag: usize,
}

impl CostModel {
    pub fn new(gamma: f64, kind: DistortionKind, update_lag: usize) -> Self {
        Self {
            gamma,
            kind,
            update_lag,
        }
    }
}

/// Finite average-cost MDP in sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMdp {
    states: usize,
    actions: usize,
    root: usize,
    offsets: Vec<usize>,
    succ: Vec<usize>,
    prob: Vec<f64>,
    cost: Vec<f64>,
}

impl BeliefMdp {
    /// `transitions[s * actions + a]` lists `(successor, probability)`;
    /// `cost[s * actions + a]` is the immediate cost.
    pub fn new(
        states: usize,
        actions: usize,
        root: usize,
        transitions: Vec<Vec<(usize, f64)>>,
        cost: Vec<f64>,
    ) -> Result<Self> {
        assert_eq!(transitions.len(), states * actions);
        assert_eq!(cost.len(), states * actions);
        let mut offsets = Vec::with_capacity(states * actions + 1);
        let mut succ = Vec::new();
        let mut prob = Vec::new();
        offsets.push(0);
        for (slot, list) in transitions.into_iter().enumerate() {
            let (state, action) = (slot / actions, slot % actions);
            let total: f64 = list.iter().map(|(_, p)| p).sum();
            if (total - 1.0).abs() > STOCHASTIC_TOLERANCE
                || list.iter().any(|&(s, p)| s >= states || !(0.0..=1.0).contains(&p))
            {
                return Err(Error::MdpNotStochastic {
                    state,
                    action,
                    sum: total,
                });
            }
            for (s, p) in list {
                succ.push(s);
                prob.push(p);
            }
            offsets.push(succ.len());
        }
        if root >= states {
            return Err(Error::PolicyMismatch(format!("root {root} out of range")));
        }
        Ok(Self {
            states,
            actions,
            root,
            offsets,
            succ,
            prob,
            cost,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn root(&self) -> usize {
        self.root
    }

    #[inline]
    pub fn cost(&self, state: usize, action: usize) -> f64 {
        self.cost[state * self.actions + action]
    }

    #[inline]
    pub fn transitions(&self, state: usize, action: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let slot = state * self.actions + action;
        let range = self.offsets[slot]..self.offsets[slot + 1];
        self.succ[range.clone()]
            .iter()
            .copied()
            .zip(self.prob[range].iter().copied())
    }

    /// `c(s, a) + sum_s' P(s' | s, a) h(s')`.
    #[inline]
    pub fn q_value(&self, state: usize, action: usize, h: &[f64]) -> f64 {
        self.cost(state, action)
            + self
                .transitions(state, action)
                .map(|(s, p)| p * h[s])
                .sum::<f64>()
    }

    pub fn scale_costs(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.cost.iter_mut().for_each(|c| *c *= factor);
        out
    }
}

/// Belief-MDP of a closed graph: transitions copied from the edges, cost of
/// `(z, a)` the expected cost under the node's belief.
pub fn build_mdp(graph: &BeliefGraph, model: &CostModel) -> Result<BeliefMdp> {
    graph.check_closed()?;
    let actions = graph.actions();
    let mut transitions = Vec::with_capacity(graph.len() * actions);
    let mut cost = Vec::with_capacity(graph.len() * actions);
    for node in graph.nodes() {
        let scored = predict_n(&node.belief, graph.kernel(), model.update_lag);
        for action in 0..actions {
            transitions.push(
                graph
                    .edges(node.id, action)
                    .iter()
                    .map(|e| (e.succ, e.prob))
                    .collect(),
            );
            cost.push(expected_cost(&scored, action, model.gamma, model.kind));
        }
    }
    BeliefMdp::new(graph.len(), actions, graph.root(), transitions, cost)
}
