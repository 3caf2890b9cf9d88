//! Parameter sweeps, figure grids, artifact caching and CSV output.
//!
//! CSV columns, in order:
//!
//! ```text
//! policy,K,p,theta,lambda,p_s,gamma,N,seeds,T,mean_cost,stderr_cost,mean_distortion,mean_transmissions
//! ```
//!
//! `seeds` is the replication count and `T` the horizon per replication.
//! Reals are written with six decimals.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::policy::{Policy, PolicyKind};
use crate::sim::{run_replications, SimConfig};
use crate::solver::{solve, PolicyFile, PolicyTable, SolverConfig};
use crate::space::{build_mdp, BeliefGraph, CostModel, GraphSpec};

pub const CSV_HEADER: [&str; 14] = [
    "policy",
    "K",
    "p",
    "theta",
    "lambda",
    "p_s",
    "gamma",
    "N",
    "seeds",
    "T",
    "mean_cost",
    "stderr_cost",
    "mean_distortion",
    "mean_transmissions",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Lambda,
    Gamma,
    #[serde(rename = "p_s")]
    Ps,
    P,
}

impl SweepVariable {
    pub fn apply(&self, cfg: &mut SimConfig, value: f64) {
        match self {
            Self::Lambda => cfg.source.lambda = value,
            Self::Gamma => cfg.gamma = value,
            Self::Ps => cfg.p_s = value,
            Self::P => cfg.source.p = value,
        }
    }
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(Self::Lambda),
            "gamma" => Ok(Self::Gamma),
            "p_s" | "ps" => Ok(Self::Ps),
            "p" => Ok(Self::P),
            _ => Err(Error::Unknown {
                what: "sweep variable",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// One experiment: a base configuration, a policy, and an optional sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub base: SimConfig,
    /// Truncation depth N of the belief graph.
    pub depth: usize,
    pub policy: PolicyKind,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.depth == 0 {
            return Err(Error::InvalidParameter {
                name: "N",
                value: 0.0,
                reason: "truncation depth must be at least 1",
            });
        }
        if let Some(sweep) = &self.sweep {
            for &v in &sweep.values {
                let mut probe = self.base;
                sweep.variable.apply(&mut probe, v);
                probe.validate()?;
            }
        }
        Ok(())
    }

    /// Configuration of one grid point.
    pub fn point_config(&self, value: Option<f64>) -> SimConfig {
        let mut cfg = self.base;
        if let (Some(sweep), Some(v)) = (&self.sweep, value) {
            sweep.variable.apply(&mut cfg, v);
        }
        cfg
    }

    pub fn graph_spec(&self, cfg: &SimConfig) -> GraphSpec {
        let mut spec = GraphSpec::new(cfg.source, cfg.p_s, self.depth);
        spec.root = cfg.root;
        spec
    }
}

/// Result of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub policy: PolicyKind,
    pub k: usize,
    pub p: f64,
    pub theta: f64,
    pub lambda: f64,
    pub p_s: f64,
    pub gamma: f64,
    pub n: usize,
    pub seeds: usize,
    pub t: u64,
    pub warmup: u64,
    pub update_lag: usize,
    pub mean_cost: f64,
    pub stderr_cost: f64,
    pub mean_distortion: f64,
    pub mean_transmissions: f64,
    /// Solver diagnostics for POMDP rows; not part of the CSV.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub converged: Option<bool>,
    #[serde(default)]
    pub error: Option<String>,
}

impl PointRow {
    fn from_config(policy: PolicyKind, cfg: &SimConfig, depth: usize, seeds: usize) -> Self {
        Self {
            policy,
            k: cfg.source.k,
            p: cfg.source.p,
            theta: cfg.source.theta,
            lambda: cfg.source.lambda,
            p_s: cfg.p_s,
            gamma: cfg.gamma,
            n: depth,
            seeds,
            t: cfg.horizon,
            warmup: cfg.warmup,
            update_lag: cfg.update_lag,
            mean_cost: f64::NAN,
            stderr_cost: f64::NAN,
            mean_distortion: f64::NAN,
            mean_transmissions: f64::NAN,
            rho: None,
            converged: None,
            error: None,
        }
    }

    pub fn csv_record(&self) -> [String; 14] {
        let f = |v: f64| format!("{v:.6}");
        [
            self.policy.to_string(),
            self.k.to_string(),
            f(self.p),
            f(self.theta),
            f(self.lambda),
            f(self.p_s),
            f(self.gamma),
            self.n.to_string(),
            self.seeds.to_string(),
            self.t.to_string(),
            f(self.mean_cost),
            f(self.stderr_cost),
            f(self.mean_distortion),
            f(self.mean_transmissions),
        ]
    }
}

pub fn write_csv<W: Write>(rows: &[PointRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[PointRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArtifactKind {
    Graph,
    Policy,
}

impl ArtifactKind {
    fn prefix(&self) -> &'static str {
        match self {
            Self::Graph => "graph",
            Self::Policy => "policy",
        }
    }
}

/// Location of a cached artifact; the key is a hash of everything that
/// produced it.
pub fn cache(dir: &Path, kind: ArtifactKind, key: &str) -> PathBuf {
    dir.join(format!("{}-{key}.json", kind.prefix()))
}

pub fn policy_key(graph: &GraphSpec, cost: &CostModel, solver: &SolverConfig) -> String {
    let canonical = serde_json::to_vec(&(graph.key(), cost, solver)).expect("key serializes");
    hex::encode(Sha256::digest(&canonical))
}

type Slot<T> = Arc<OnceLock<std::result::Result<Arc<T>, String>>>;

/// Builds graphs and policies once per key, optionally persisting them.
#[derive(Default)]
pub struct ArtifactStore {
    cache_dir: Option<PathBuf>,
    graphs: Mutex<HashMap<String, Slot<BeliefGraph>>>,
    policies: Mutex<HashMap<String, Slot<PolicyTable>>>,
}

impl ArtifactStore {
    pub fn new(cache_dir: Option<PathBuf>) -> Self {
        Self {
            cache_dir,
            ..Self::default()
        }
    }

    fn slot<T>(map: &Mutex<HashMap<String, Slot<T>>>, key: &str) -> Slot<T> {
        map.lock()
            .expect("artifact map poisoned")
            .entry(key.to_string())
            .or_default()
            .clone()
    }

    pub fn graph(&self, spec: &GraphSpec) -> Result<Arc<BeliefGraph>> {
        let key = spec.key();
        let slot = Self::slot(&self.graphs, &key);
        slot.get_or_init(|| self.load_or_build_graph(spec, &key).map(Arc::new).map_err(|e| e.to_string()))
            .clone()
            .map_err(|e| Error::PolicyMismatch(format!("graph build failed: {e}")))
    }

    fn load_or_build_graph(&self, spec: &GraphSpec, key: &str) -> Result<BeliefGraph> {
        let path = self.cache_dir.as_ref().map(|d| cache(d, ArtifactKind::Graph, key));
        if let Some(path) = path.as_ref().filter(|p| p.exists()) {
            match BeliefGraph::load_json(path) {
                Ok(g) if g.spec() == spec => return Ok(g),
                Ok(_) => warn!("cached graph {} has mismatched parameters; rebuilding", path.display()),
                Err(e) => warn!("cached graph {} unreadable ({e}); rebuilding", path.display()),
            }
        }
        let graph = spec.build()?;
        if let Some(path) = path {
            std::fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
            graph.save_json(&path)?;
        }
        Ok(graph)
    }

    pub fn policy(
        &self,
        graph_spec: &GraphSpec,
        cost: &CostModel,
        solver: &SolverConfig,
    ) -> Result<(Arc<BeliefGraph>, Arc<PolicyTable>)> {
        let graph = self.graph(graph_spec)?;
        let key = policy_key(graph_spec, cost, solver);
        let slot = Self::slot(&self.policies, &key);
        let table = slot
            .get_or_init(|| {
                self.load_or_solve(&graph, graph_spec, cost, solver, &key)
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            })
            .clone()
            .map_err(|e| Error::PolicyMismatch(format!("solve failed: {e}")))?;
        Ok((graph, table))
    }

    fn load_or_solve(
        &self,
        graph: &BeliefGraph,
        graph_spec: &GraphSpec,
        cost: &CostModel,
        solver: &SolverConfig,
        key: &str,
    ) -> Result<PolicyTable> {
        let path = self.cache_dir.as_ref().map(|d| cache(d, ArtifactKind::Policy, key));
        if let Some(path) = path.as_ref().filter(|p| p.exists()) {
            match load_policy(path) {
                Ok(file)
                    if file.graph_hash == graph_spec.key()
                        && file.cost == *cost
                        && file.solver == *solver
                        && file.table.actions.len() == graph.len() =>
                {
                    return Ok(file.table)
                }
                Ok(_) => warn!("cached policy {} does not match; re-solving", path.display()),
                Err(e) => warn!("cached policy {} unreadable ({e}); re-solving", path.display()),
            }
        }
        let mdp = build_mdp(graph, cost)?;
        let table = solve(&mdp, solver)?;
        if !table.converged {
            warn!(
                "relative value iteration stopped after {} iterations with span {:e}",
                table.iterations, table.span
            );
        }
        if let Some(path) = path {
            std::fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
            save_policy(
                &path,
                &PolicyFile {
                    graph_hash: graph_spec.key(),
                    graph: *graph_spec,
                    cost: *cost,
                    solver: *solver,
                    table: table.clone(),
                },
            )?;
        }
        Ok(table)
    }
}

pub fn save_policy(path: &Path, file: &PolicyFile) -> Result<()> {
    let out = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(out), file)?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<PolicyFile> {
    let input = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(input))?)
}

fn evaluate(
    store: &ArtifactStore,
    policy: PolicyKind,
    cfg: &SimConfig,
    depth: usize,
    seeds: &[u64],
    solver: &SolverConfig,
) -> PointRow {
    let mut row = PointRow::from_config(policy, cfg, depth, seeds.len());
    let outcome = (|| -> Result<()> {
        let agg = if policy == PolicyKind::Pomdp {
            let mut gspec = GraphSpec::new(cfg.source, cfg.p_s, depth);
            gspec.root = cfg.root;
            let cost = CostModel::new(cfg.gamma, cfg.kind, cfg.update_lag);
            let (graph, table) = store.policy(&gspec, &cost, solver)?;
            row.rho = Some(table.rho);
            row.converged = Some(table.converged);
            run_replications(
                cfg,
                &Policy::Pomdp {
                    table: &table,
                    graph: &graph,
                },
                seeds,
            )?
        } else {
            run_replications(cfg, &Policy::simple(policy)?, seeds)?
        };
        row.mean_cost = agg.mean_cost;
        row.stderr_cost = agg.stderr_cost;
        row.mean_distortion = agg.mean_distortion;
        row.mean_transmissions = agg.mean_transmissions;
        Ok(())
    })();
    if let Err(e) = outcome {
        warn!("point {policy} K={} failed: {e}", cfg.source.k);
        row.error = Some(e.to_string());
    }
    row
}

/// Evaluates one grid point of `spec`; `value` is the sweep value, if any.
pub fn run_point(spec: &ExperimentSpec, value: Option<f64>) -> Result<PointRow> {
    run_point_with(&ArtifactStore::new(spec.cache_dir.clone()), spec, value)
}

pub fn run_point_with(store: &ArtifactStore, spec: &ExperimentSpec, value: Option<f64>) -> Result<PointRow> {
    spec.validate()?;
    let cfg = spec.point_config(value);
    Ok(evaluate(store, spec.policy, &cfg, spec.depth, &spec.seeds, &spec.solver))
}

/// Every point of the sweep (or the single base point), in sweep order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<PointRow>> {
    spec.validate()?;
    let store = ArtifactStore::new(spec.cache_dir.clone());
    let values: Vec<Option<f64>> = match &spec.sweep {
        Some(s) => s.values.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    values
        .par_iter()
        .map(|&v| run_point_with(&store, spec, v))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fig2" | "2" => Ok(Self::Fig2),
            "fig3" | "3" => Ok(Self::Fig3),
            "fig4" | "4" => Ok(Self::Fig4),
            "fig5" | "5" => Ok(Self::Fig5),
            _ => Err(Error::Unknown {
                what: "figure",
                value: s.to_string(),
            }),
        }
    }
}

/// Settings shared by every point of a figure run.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureOptions {
    pub theta: f64,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub depth: usize,
    pub update_lag: usize,
    pub solver: SolverConfig,
    pub cache_dir: Option<PathBuf>,
    pub policies: Vec<PolicyKind>,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            theta: 0.5,
            horizon: 100_000,
            seeds: (1..=10).collect(),
            depth: 6,
            update_lag: crate::sim::DEFAULT_UPDATE_LAG,
            solver: SolverConfig::default(),
            cache_dir: None,
            policies: vec![PolicyKind::Maf, PolicyKind::Pomdp],
        }
    }
}

/// One grid point of a figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub policy: PolicyKind,
    pub k: usize,
    pub p: f64,
    pub lambda: f64,
    pub p_s: f64,
    pub gamma: f64,
}

impl Figure {
    pub fn grid(&self, policies: &[PolicyKind]) -> Vec<GridPoint> {
        let mut out = Vec::new();
        let mut push = |k, p, lambda, p_s, gamma| {
            for &policy in policies {
                out.push(GridPoint {
                    policy,
                    k,
                    p,
                    lambda,
                    p_s,
                    gamma,
                });
            }
        };
        match self {
            Self::Fig2 => {
                for k in [2, 3] {
                    for lambda in [0.1, 0.3, 0.5, 0.7, 0.9] {
                        push(k, 0.8, lambda, 0.8, 0.15);
                    }
                }
            }
            Self::Fig3 => {
                for lambda in [0.4, 0.8] {
                    for step in 0..=10 {
                        push(2, 0.8, lambda, 0.8, step as f64 * 0.05);
                    }
                }
            }
            Self::Fig4 => {
                for k in [2, 3] {
                    for p_s in [0.2, 0.4, 0.6, 0.8, 1.0] {
                        push(k, 0.8, 0.6, p_s, 0.05);
                    }
                }
            }
            Self::Fig5 => {
                for p_s in [0.2, 0.8] {
                    for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
                        push(2, p, 0.4, p_s, 0.05);
                    }
                }
            }
        }
        out
    }
}

pub fn point_config(point: &GridPoint, opts: &FigureOptions) -> SimConfig {
    use crate::source::SourceParams;
    SimConfig {
        horizon: opts.horizon,
        update_lag: opts.update_lag,
        ..SimConfig::new(
            SourceParams::new(point.k, point.p, opts.theta, point.lambda),
            point.p_s,
            point.gamma,
        )
    }
}

/// Runs every grid point of a figure; rows come back in grid order.
pub fn run_figure(figure: Figure, opts: &FigureOptions) -> Vec<PointRow> {
    let store = ArtifactStore::new(opts.cache_dir.clone());
    run_grid(&store, &figure.grid(&opts.policies), opts)
}

pub fn run_grid(store: &ArtifactStore, grid: &[GridPoint], opts: &FigureOptions) -> Vec<PointRow> {
    grid.par_iter()
        .map(|pt| {
            let cfg = point_config(pt, opts);
            evaluate(store, pt.policy, &cfg, opts.depth, &opts.seeds, &opts.solver)
        })
        .collect()
}
