//! Pull-based remote tracking of correlated binary Markov sources.
//!
//! A sink polls one of `K` binary sources per slot over an unreliable
//! channel and keeps a Bayesian belief over their joint state. This crate
//! enumerates a truncated belief space, solves the resulting average-cost
//! MDP with relative value iteration, and simulates the solved policy
//! against max-age-first and simple baselines.
//!
//! ```
//! use pulltrack::{SimConfig, SourceParams, Policy, PolicyKind, run_replications};
//!
//! let cfg = SimConfig { horizon: 2_000, ..SimConfig::new(SourceParams::new(2, 0.8, 0.5, 0.4), 0.8, 0.05) };
//! let maf = Policy::simple(PolicyKind::Maf).unwrap();
//! let agg = run_replications(&cfg, &maf, &[1, 2]).unwrap();
//! assert_eq!(agg.mean_transmissions, 1.0);
//! ```

pub mod belief;
pub mod error;
pub mod experiment;
pub mod policy;
pub mod sim;
pub mod solver;
pub mod source;
pub mod space;

pub use belief::{
    condition_and_predict, expected_cost, marginalize, ml_estimate, predict, DistortionKind,
    JointBelief, MarginalBelief, ReceptionTag,
};
pub use error::{Error, Result};
pub use experiment::{run_experiment, run_figure, run_point, ExperimentSpec, Figure, FigureOptions, PointRow};
pub use policy::{maf_action, Policy, PolicyKind, SinkState};
pub use sim::{run_episode, run_replications, Aggregate, SimConfig, SimResult, DEFAULT_UPDATE_LAG};
pub use solver::{brute_force_best, policy_evaluate, solve, PolicyTable, SolverConfig};
pub use source::{
    coupled_kernel, independent_kernel, partial_kernel, stationary_distribution, JointConfig,
    SourceParams, TransitionKernel,
};
pub use space::{build_mdp, BeliefGraph, BeliefMdp, CostModel, GraphSpec, RootBelief};
