//! Scheduling policies: the belief-MDP table, max-age-first, and diagnostic baselines.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{JointBelief, ReceptionTag};
use crate::error::{Error, Result};
use crate::solver::PolicyTable;
use crate::space::BeliefGraph;

/// What the sink knows when it picks an action.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkState {
    pub belief: JointBelief,
    pub last_reception: ReceptionTag,
    /// Slots since the last delivery from each source; starts at 1.
    pub aoi: Vec<u64>,
}

impl SinkState {
    pub fn new(belief: JointBelief) -> Self {
        let k = belief.sources();
        Self {
            belief,
            last_reception: ReceptionTag::None,
            aoi: vec![1; k],
        }
    }

    /// Advances every age by one slot, resetting `delivered` (0-based) to 1.
    pub fn age(&mut self, delivered: Option<usize>) {
        for (s, a) in self.aoi.iter_mut().enumerate() {
            *a = if Some(s) == delivered { 1 } else { *a + 1 };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Pomdp,
    Maf,
    Idle,
    RoundRobin,
    Random,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pomdp => "pomdp",
            Self::Maf => "maf",
            Self::Idle => "idle",
            Self::RoundRobin => "roundrobin",
            Self::Random => "random",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pomdp" => Ok(Self::Pomdp),
            "maf" => Ok(Self::Maf),
            "idle" => Ok(Self::Idle),
            "roundrobin" | "round-robin" => Ok(Self::RoundRobin),
            "random" => Ok(Self::Random),
            _ => Err(Error::Unknown {
                what: "policy",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    AlwaysIdle,
    RoundRobin,
    UniformRandom,
}

/// Tabulated action at the graph node nearest to the sink's belief.
pub fn pomdp_action(state: &SinkState, table: &PolicyTable, graph: &BeliefGraph) -> usize {
    table.action(graph.project(&state.belief, state.last_reception))
}

/// Requests the source with the largest age (lowest index on ties). Never idles.
pub fn maf_action(state: &SinkState) -> usize {
    let mut best = 0;
    for (s, &a) in state.aoi.iter().enumerate() {
        if a > state.aoi[best] {
            best = s;
        }
    }
    best + 1
}

/// `slot` drives the round-robin cycle; the random baseline draws one value from `rng`.
pub fn baseline_action<R: Rng + ?Sized>(
    kind: Baseline,
    state: &SinkState,
    slot: u64,
    rng: &mut R,
) -> usize {
    let k = state.aoi.len();
    match kind {
        Baseline::AlwaysIdle => 0,
        Baseline::RoundRobin => (slot % k as u64) as usize + 1,
        Baseline::UniformRandom => rng.random_range(1..=k),
    }
}

/// A policy bound to whatever artifacts it needs at run time.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Pomdp {
        table: &'a PolicyTable,
        graph: &'a BeliefGraph,
    },
    Maf,
    Baseline(Baseline),
}

impl<'a> Policy<'a> {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Self::Pomdp { .. } => PolicyKind::Pomdp,
            Self::Maf => PolicyKind::Maf,
            Self::Baseline(Baseline::AlwaysIdle) => PolicyKind::Idle,
            Self::Baseline(Baseline::RoundRobin) => PolicyKind::RoundRobin,
            Self::Baseline(Baseline::UniformRandom) => PolicyKind::Random,
        }
    }

    /// Builds a table-free policy; the POMDP policy needs [`Policy::Pomdp`].
    pub fn simple(kind: PolicyKind) -> Result<Self> {
        Ok(match kind {
            PolicyKind::Maf => Self::Maf,
            PolicyKind::Idle => Self::Baseline(Baseline::AlwaysIdle),
            PolicyKind::RoundRobin => Self::Baseline(Baseline::RoundRobin),
            PolicyKind::Random => Self::Baseline(Baseline::UniformRandom),
            PolicyKind::Pomdp => {
                return Err(Error::PolicyMismatch(
                    "the pomdp policy needs a solved table and its graph".into(),
                ))
            }
        })
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &SinkState, slot: u64, rng: &mut R) -> usize {
        match *self {
            Self::Pomdp { table, graph } => pomdp_action(state, table, graph),
            Self::Maf => maf_action(state),
            Self::Baseline(kind) => baseline_action(kind, state, slot, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::DistortionKind;
    use crate::solver::{solve, SolverConfig};
    use crate::source::SourceParams;
    use crate::space::{build_mdp, CostModel, GraphSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state_with_aoi(aoi: &[u64]) -> SinkState {
        let mut s = SinkState::new(JointBelief::uniform(aoi.len()));
        s.aoi = aoi.to_vec();
        s
    }

    #[test]
    fn maf_argmax_and_ties() {
        assert_eq!(maf_action(&state_with_aoi(&[3, 7])), 2);
        assert_eq!(maf_action(&state_with_aoi(&[4, 4])), 1);
        assert_eq!(maf_action(&state_with_aoi(&[1, 9, 9])), 2);
    }

    #[test]
    fn maf_shift_invariant_and_never_idle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let k = rng.random_range(1..=4);
            let aoi: Vec<u64> = (0..k).map(|_| rng.random_range(1..20)).collect();
            let shift = rng.random_range(0..100);
            let shifted: Vec<u64> = aoi.iter().map(|a| a + shift).collect();
            let a = maf_action(&state_with_aoi(&aoi));
            assert_ne!(a, 0);
            assert_eq!(a, maf_action(&state_with_aoi(&shifted)));
        }
    }

    #[test]
    fn aoi_bookkeeping() {
        let mut s = state_with_aoi(&[1, 1]);
        s.age(None);
        assert_eq!(s.aoi, vec![2, 2]);
        s.age(Some(1));
        assert_eq!(s.aoi, vec![3, 1]);
    }

    #[test]
    fn baselines() {
        let s = state_with_aoi(&[1, 1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for slot in 0..10 {
            assert_eq!(baseline_action(Baseline::AlwaysIdle, &s, slot, &mut rng), 0);
        }
        let rr: Vec<usize> = (0..5)
            .map(|slot| baseline_action(Baseline::RoundRobin, &s, slot, &mut rng))
            .collect();
        assert_eq!(rr, vec![1, 2, 3, 1, 2]);

        let slots = 100_000;
        let mut counts = [0usize; 4];
        for slot in 0..slots {
            counts[baseline_action(Baseline::UniformRandom, &s, slot, &mut rng)] += 1;
        }
        assert_eq!(counts[0], 0);
        for c in &counts[1..] {
            assert!((*c as f64 / slots as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn pomdp_reads_table_at_nodes() {
        let g = GraphSpec::new(SourceParams::new(2, 0.8, 0.5, 0.4), 0.8, 3)
            .build()
            .unwrap();
        let mdp = build_mdp(&g, &CostModel::new(0.05, DistortionKind::Absolute, 0)).unwrap();
        let table = solve(&mdp, &SolverConfig::default()).unwrap();
        for node in g.nodes() {
            let state = SinkState {
                belief: node.belief.clone(),
                last_reception: node.tag,
                aoi: vec![1, 1],
            };
            let a = pomdp_action(&state, &table, &g);
            assert_eq!(a, table.action(g.project(&node.belief, node.tag)));
            assert_eq!(a, pomdp_action(&state, &table, &g));
        }
        assert!(table.actions.iter().any(|&a| a != 0));
    }

    #[test]
    fn expensive_transmissions_mean_idle() {
        let g = GraphSpec::new(SourceParams::new(2, 0.8, 0.5, 0.4), 0.8, 3)
            .build()
            .unwrap();
        let mdp = build_mdp(&g, &CostModel::new(10.0, DistortionKind::Absolute, 0)).unwrap();
        let table = solve(&mdp, &SolverConfig::default()).unwrap();
        // The stationary root idles into itself at distortion 0.5, while every
        // depth-N node idles into itself at lower cost, so one paid attempt
        // from the root can still be worth it.
        assert!(table.actions.iter().skip(1).all(|&a| a == 0));
    }

    #[test]
    fn parse_kinds() {
        for kind in ["pomdp", "maf", "idle", "roundrobin", "random"] {
            assert_eq!(kind.parse::<PolicyKind>().unwrap().as_str(), kind);
        }
        assert!("whittle".parse::<PolicyKind>().is_err());
        assert!(Policy::simple(PolicyKind::Pomdp).is_err());
    }
}
