//! Seeded Monte-Carlo evaluation of a policy on the true system.
//!
//! Each slot runs, in order:
//! 1. estimate `X^(t)` by ML on the sink belief propagated `update_lag` slots;
//! 2. pick `a(t)`;
//! 3. charge `C(t)` against the true `X(t)`;
//! 4. if `a(t) = k`, deliver `X_k(t - update_lag)` with probability `p_s`;
//! 5. draw `X(t + 1)` from the kernel row of `X(t)`;
//! 6. update the belief (condition-then-predict on delivery, predict otherwise);
//! 7. update ages.
//!
//! One ChaCha8 stream per episode feeds, per slot: the policy (random
//! baseline only), one channel uniform, one source-transition uniform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::belief::{
    condition_and_predict, marginalize, mean_distortion, ml_estimate, predict, predict_n,
    DistortionKind, ReceptionTag,
};
use crate::error::{check_probability, Error, Result};
use crate::policy::{Policy, SinkState};
use crate::source::{partial_kernel, sample_index, sample_next, JointConfig, SourceParams};
use crate::space::RootBelief;

/// Update lag that reproduces the published figures; see [`SimConfig::update_lag`].
pub const DEFAULT_UPDATE_LAG: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub source: SourceParams,
    pub p_s: f64,
    pub gamma: f64,
    #[serde(default)]
    pub kind: DistortionKind,
    pub horizon: u64,
    pub seed: u64,
    #[serde(default)]
    pub warmup: u64,
    /// Age, in slots, of the source value an update carries when it arrives.
    /// `0`: an update delivered in slot `t` reports `X_k(t)` and first
    /// informs the estimate of slot `t + 1`.
    #[serde(default = "default_lag")]
    pub update_lag: usize,
    #[serde(default)]
    pub root: RootBelief,
}

fn default_lag() -> usize {
    DEFAULT_UPDATE_LAG
}

impl SimConfig {
    pub fn new(source: SourceParams, p_s: f64, gamma: f64) -> Self {
        Self {
            source,
            p_s,
            gamma,
            kind: DistortionKind::Absolute,
            horizon: 100_000,
            seed: 0,
            warmup: 0,
            update_lag: DEFAULT_UPDATE_LAG,
            root: RootBelief::Stationary,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        check_probability("p_s", self.p_s)?;
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: self.gamma,
                reason: "must be non-negative",
            });
        }
        if self.horizon <= self.warmup {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: self.horizon as f64,
                reason: "must exceed the warmup",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub avg_cost: f64,
    pub avg_distortion: f64,
    /// Fraction of scored slots with a request.
    pub avg_transmissions: f64,
    /// Time-average age per source.
    pub mean_aoi: Vec<f64>,
    pub seed: u64,
    pub horizon: u64,
}

pub fn run_episode(cfg: &SimConfig, policy: &Policy<'_>) -> Result<SimResult> {
    cfg.validate()?;
    if let Policy::Pomdp { graph, table } = policy {
        let spec = graph.spec();
        if spec.source != cfg.source || spec.p_s != cfg.p_s {
            return Err(Error::PolicyMismatch(
                "graph was built for different source or channel parameters".into(),
            ));
        }
        if table.actions.len() != graph.len() {
            return Err(Error::PolicyMismatch(format!(
                "{} actions for {} nodes",
                table.actions.len(),
                graph.len()
            )));
        }
    }

    let k = cfg.source.k;
    let kernel = partial_kernel(&cfg.source)?;
    let root = cfg.root.resolve(&kernel)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // history[0] = X(t - lag), back = X(t)
    let mut history = VecDeque::with_capacity(cfg.update_lag + 1);
    history.push_back(JointConfig::from_index(k, sample_index(root.probs(), &mut rng)));
    for _ in 0..cfg.update_lag {
        let last = *history.back().expect("history is never empty");
        history.push_back(sample_next(last, &kernel, &mut rng));
    }

    let mut state = SinkState::new(root);
    let mut distortion_sum = 0.0;
    let mut transmissions = 0u64;
    let mut aoi_sum = vec![0.0; k];

    for t in 0..cfg.horizon {
        let xhat = if cfg.update_lag == 0 {
            ml_estimate(&marginalize(&state.belief))
        } else {
            ml_estimate(&marginalize(&predict_n(&state.belief, &kernel, cfg.update_lag)))
        };
        let action = policy.act(&state, t, &mut rng);
        let x_now = *history.back().expect("history is never empty");

        if t >= cfg.warmup {
            distortion_sum += mean_distortion(x_now, &xhat, cfg.kind);
            transmissions += u64::from(action != 0);
            for (acc, &a) in aoi_sum.iter_mut().zip(&state.aoi) {
                *acc += a as f64;
            }
        }

        let channel: f64 = rng.random();
        let delivered = (action != 0 && channel < cfg.p_s).then(|| {
            let source = action - 1;
            (source, history[0].bit(source))
        });

        let next = sample_next(x_now, &kernel, &mut rng);
        history.push_back(next);
        history.pop_front();

        state.belief = match delivered {
            Some((source, bit)) => condition_and_predict(&state.belief, source, bit, &kernel)?,
            None => predict(&state.belief, &kernel),
        };
        state.last_reception = delivered.map_or(ReceptionTag::None, |(_, bit)| ReceptionTag::from_bit(bit));
        state.age(delivered.map(|(source, _)| source));
        debug_assert!(state.belief.is_valid());
    }

    let scored = (cfg.horizon - cfg.warmup) as f64;
    let avg_distortion = distortion_sum / scored;
    let avg_transmissions = transmissions as f64 / scored;
    Ok(SimResult {
        avg_cost: avg_distortion + cfg.gamma * avg_transmissions,
        avg_distortion,
        avg_transmissions,
        mean_aoi: aoi_sum.into_iter().map(|s| s / scored).collect(),
        seed: cfg.seed,
        horizon: cfg.horizon,
    })
}

/// Mean and standard error across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_cost: f64,
    pub stderr_cost: f64,
    pub mean_distortion: f64,
    pub stderr_distortion: f64,
    pub mean_transmissions: f64,
    pub runs: Vec<SimResult>,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs one episode per seed (in parallel) and aggregates in seed-list order.
pub fn run_replications(cfg: &SimConfig, policy: &Policy<'_>, seeds: &[u64]) -> Result<Aggregate> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter {
            name: "seeds",
            value: 0.0,
            reason: "need at least one seed",
        });
    }
    let runs = seeds
        .par_iter()
        .map(|&seed| run_episode(&SimConfig { seed, ..*cfg }, policy))
        .collect::<Result<Vec<_>>>()?;
    let costs: Vec<f64> = runs.iter().map(|r| r.avg_cost).collect();
    let dist: Vec<f64> = runs.iter().map(|r| r.avg_distortion).collect();
    let trans: Vec<f64> = runs.iter().map(|r| r.avg_transmissions).collect();
    let (mean_cost, stderr_cost) = mean_stderr(&costs);
    let (mean_distortion, stderr_distortion) = mean_stderr(&dist);
    Ok(Aggregate {
        mean_cost,
        stderr_cost,
        mean_distortion,
        stderr_distortion,
        mean_transmissions: mean_stderr(&trans).0,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Baseline, PolicyKind};

    fn cfg(k: usize, p: f64, lambda: f64, p_s: f64, gamma: f64) -> SimConfig {
        SimConfig {
            horizon: 20_000,
            seed: 3,
            ..SimConfig::new(SourceParams::new(k, p, 0.5, lambda), p_s, gamma)
        }
    }

    #[test]
    fn frozen_source_perfect_channel() {
        for lag in [0, 1] {
            let mut c = cfg(1, 1.0, 0.0, 1.0, 0.2);
            c.update_lag = lag;
            c.root = RootBelief::Uniform;
            let r = run_episode(&c, &Policy::Maf).unwrap();
            // at most the first slot or two are wrong
            assert!(r.avg_distortion <= 2.0 / c.horizon as f64);
            assert!((r.avg_cost - 0.2).abs() < 1e-3);
        }
    }

    #[test]
    fn idle_policy_never_transmits() {
        let c = cfg(2, 0.8, 0.4, 0.8, 0.3);
        let r = run_episode(&c, &Policy::Baseline(Baseline::AlwaysIdle)).unwrap();
        assert_eq!(r.avg_transmissions, 0.0);
        assert_eq!(r.avg_cost, r.avg_distortion);
    }

    #[test]
    fn cost_decomposition() {
        for kind in [PolicyKind::Maf, PolicyKind::RoundRobin, PolicyKind::Random] {
            let c = cfg(3, 0.7, 0.6, 0.6, 0.17);
            let r = run_episode(&c, &Policy::simple(kind).unwrap()).unwrap();
            assert!((r.avg_cost - (r.avg_distortion + c.gamma * r.avg_transmissions)).abs() < 1e-12);
        }
    }

    #[test]
    fn always_transmit_error_rate() {
        // K = 1, perfect channel, independent source: the estimate is the
        // last reported value, which is lag + 1 transitions old.
        let q: f64 = 0.2;
        for (lag, want) in [(0usize, q), (1, 2.0 * q * (1.0 - q))] {
            let mut c = cfg(1, 0.8, 0.0, 1.0, 0.0);
            c.update_lag = lag;
            c.horizon = 400_000;
            let r = run_episode(&c, &Policy::Maf).unwrap();
            assert!((r.avg_distortion - want).abs() < 0.005, "lag {lag}: {}", r.avg_distortion);
        }
    }

    #[test]
    fn maf_gamma_shift_is_exact() {
        let a = run_episode(&cfg(2, 0.8, 0.4, 0.8, 0.0), &Policy::Maf).unwrap();
        let b = run_episode(&cfg(2, 0.8, 0.4, 0.8, 0.5), &Policy::Maf).unwrap();
        assert_eq!(a.avg_distortion, b.avg_distortion);
        assert_eq!(a.avg_transmissions, 1.0);
        assert!((b.avg_cost - a.avg_cost - 0.5).abs() < 1e-15);
    }

    #[test]
    fn replications_deterministic() {
        let c = cfg(2, 0.8, 0.4, 0.8, 0.05);
        let seeds = [1, 2, 3, 4];
        let a = run_replications(&c, &Policy::Maf, &seeds).unwrap();
        let b = run_replications(&c, &Policy::Maf, &seeds).unwrap();
        assert_eq!(a, b);
        let one = run_replications(&c, &Policy::Maf, &[9]).unwrap();
        assert_eq!(one.stderr_cost, 0.0);
        assert_eq!(one.mean_cost, run_episode(&SimConfig { seed: 9, ..c }, &Policy::Maf).unwrap().avg_cost);
        assert!(run_replications(&c, &Policy::Maf, &[]).is_err());
    }

    #[test]
    fn warmup_must_be_shorter_than_horizon() {
        let mut c = cfg(2, 0.8, 0.4, 0.8, 0.05);
        c.warmup = c.horizon;
        assert!(run_episode(&c, &Policy::Maf).is_err());
    }
}
