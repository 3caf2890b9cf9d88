//! C ABI over the pulltrack solver and simulator.
//!
//! Every function returns a [`PtStatus`]. On failure, [`pt_last_error`]
//! describes the most recent error raised on the calling thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pulltrack::{
    build_mdp, solve, BeliefGraph, CostModel, DistortionKind, Error, GraphSpec, JointBelief,
    Policy, PolicyKind, PolicyTable, ReceptionTag, SimConfig, SolverConfig, SourceParams,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The model has no solved policy yet.
    NotSolved = 3,
    /// The belief graph or MDP exceeds a size limit.
    TooLarge = 4,
    /// The solver stopped before reaching its span threshold.
    NotConverged = 5,
    Internal = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtDistortion {
    Indicator = 0,
    Absolute = 1,
    Squared = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtPolicy {
    Pomdp = 0,
    Maf = 1,
    Idle = 2,
    RoundRobin = 3,
    Random = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtModelParams {
    pub k: usize,
    pub p: f64,
    pub theta: f64,
    pub lambda: f64,
    pub p_s: f64,
    pub gamma: f64,
    /// Truncation depth of the belief graph.
    pub depth: usize,
    pub update_lag: usize,
    pub distortion: PtDistortion,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtSolverParams {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub aperiodicity: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PtSolveResult {
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PtSimResult {
    pub mean_cost: f64,
    pub stderr_cost: f64,
    pub mean_distortion: f64,
    pub stderr_distortion: f64,
    pub mean_transmissions: f64,
    pub runs: usize,
}

/// Opaque model: a belief graph plus, once solved, its policy table.
pub struct PtModel {
    graph: BeliefGraph,
    cost: CostModel,
    table: Option<PolicyTable>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> PtStatus {
    match err {
        Error::InvalidParameter { .. }
        | Error::SourceCount(_)
        | Error::InvalidBelief(_)
        | Error::Unknown { .. }
        | Error::NotStochastic { .. }
        | Error::Reducible
        | Error::ImpossibleObservation { .. } => PtStatus::InvalidArgument,
        Error::NodeCapExceeded { .. } | Error::TooLarge { .. } => PtStatus::TooLarge,
        _ => PtStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), PtStatus>) -> PtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PtStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("panic inside pulltrack");
            PtStatus::Panic
        }
    }
}

fn fail(err: Error) -> PtStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn null(what: &str) -> PtStatus {
    set_error(format!("{what} is null"));
    PtStatus::NullPointer
}

impl From<PtDistortion> for DistortionKind {
    fn from(d: PtDistortion) -> Self {
        match d {
            PtDistortion::Indicator => DistortionKind::Indicator,
            PtDistortion::Absolute => DistortionKind::Absolute,
            PtDistortion::Squared => DistortionKind::Squared,
        }
    }
}

impl From<PtPolicy> for PolicyKind {
    fn from(p: PtPolicy) -> Self {
        match p {
            PtPolicy::Pomdp => PolicyKind::Pomdp,
            PtPolicy::Maf => PolicyKind::Maf,
            PtPolicy::Idle => PolicyKind::Idle,
            PtPolicy::RoundRobin => PolicyKind::RoundRobin,
            PtPolicy::Random => PolicyKind::Random,
        }
    }
}

/// Message of the last error on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fills `out` with the default parameters (K=2, p=0.8, theta=0.5,
/// lambda=0.4, p_s=0.8, gamma=0.05, depth 6, lag 1, absolute distortion).
///
/// # Safety
/// `out` must be null or point to writable memory for one `PtModelParams`.
#[no_mangle]
pub unsafe extern "C" fn pt_default_params(out: *mut PtModelParams) -> PtStatus {
    if out.is_null() {
        return null("out");
    }
    let src = SourceParams::default();
    *out = PtModelParams {
        k: src.k,
        p: src.p,
        theta: src.theta,
        lambda: src.lambda,
        p_s: 0.8,
        gamma: 0.05,
        depth: 6,
        update_lag: pulltrack::DEFAULT_UPDATE_LAG,
        distortion: PtDistortion::Absolute,
    };
    PtStatus::Ok
}

/// Solver defaults: epsilon 1e-7, 100000 iterations, aperiodicity 1.
///
/// # Safety
/// `out` must be null or point to writable memory for one `PtSolverParams`.
#[no_mangle]
pub unsafe extern "C" fn pt_default_solver(out: *mut PtSolverParams) -> PtStatus {
    if out.is_null() {
        return null("out");
    }
    let d = SolverConfig::default();
    *out = PtSolverParams {
        epsilon: d.epsilon,
        max_iterations: d.max_iterations,
        aperiodicity: d.aperiodicity,
    };
    PtStatus::Ok
}

/// Builds the belief graph for `params` and stores a new handle in `*out`.
///
/// # Safety
/// `params` must point to a valid `PtModelParams`; `out` to writable storage
/// for one pointer.
#[no_mangle]
pub unsafe extern "C" fn pt_model_new(
    params: *const PtModelParams,
    out: *mut *mut PtModel,
) -> PtStatus {
    if params.is_null() {
        return null("params");
    }
    if out.is_null() {
        return null("out");
    }
    let params = *params;
    guard(|| {
        let source = SourceParams::new(params.k, params.p, params.theta, params.lambda);
        let graph = GraphSpec::new(source, params.p_s, params.depth)
            .build()
            .map_err(fail)?;
        if !(params.gamma >= 0.0 && params.gamma.is_finite()) {
            set_error(format!("gamma must be finite and nonnegative, got {}", params.gamma));
            return Err(PtStatus::InvalidArgument);
        }
        let model = PtModel {
            graph,
            cost: CostModel::new(params.gamma, params.distortion.into(), params.update_lag),
            table: None,
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must be null or a handle from `pt_model_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pt_model_free(model: *mut PtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of nodes in the model's belief graph.
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_model_node_count(model: *const PtModel, out: *mut usize) -> PtStatus {
    if model.is_null() {
        return null("model");
    }
    if out.is_null() {
        return null("out");
    }
    *out = (*model).graph.len();
    PtStatus::Ok
}

/// Solves the belief MDP with relative value iteration. `solver` may be null
/// for defaults. Returns `NotConverged` (with `out` filled and the table kept)
/// when the iteration budget runs out.
///
/// # Safety
/// `model` must be a live handle; `solver` null or valid; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn pt_model_solve(
    model: *mut PtModel,
    solver: *const PtSolverParams,
    out: *mut PtSolveResult,
) -> PtStatus {
    if model.is_null() {
        return null("model");
    }
    let cfg = if solver.is_null() {
        SolverConfig::default()
    } else {
        let s = *solver;
        SolverConfig {
            epsilon: s.epsilon,
            max_iterations: s.max_iterations,
            aperiodicity: s.aperiodicity,
            ..SolverConfig::default()
        }
    };
    let model = &mut *model;
    guard(|| {
        let mdp = build_mdp(&model.graph, &model.cost).map_err(fail)?;
        let table = solve(&mdp, &cfg).map_err(fail)?;
        let result = PtSolveResult {
            rho: table.rho,
            iterations: table.iterations,
            converged: table.converged,
        };
        model.table = Some(table);
        if !out.is_null() {
            *out = result;
        }
        if !result.converged {
            set_error(format!("span above {} after {} iterations", cfg.epsilon, result.iterations));
            return Err(PtStatus::NotConverged);
        }
        Ok(())
    })
}

/// Action of the solved policy for a joint belief of length `2^K`
/// (0 = idle, k = request source k).
///
/// # Safety
/// `model` must be a live handle; `belief` must point to `len` doubles;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_model_action(
    model: *const PtModel,
    belief: *const f64,
    len: usize,
    out: *mut usize,
) -> PtStatus {
    if model.is_null() {
        return null("model");
    }
    if belief.is_null() {
        return null("belief");
    }
    if out.is_null() {
        return null("out");
    }
    let model = &*model;
    let probs = std::slice::from_raw_parts(belief, len).to_vec();
    guard(|| {
        let table = model.table.as_ref().ok_or_else(|| {
            set_error("model has not been solved");
            PtStatus::NotSolved
        })?;
        let b = JointBelief::new(model.graph.sources(), probs).map_err(fail)?;
        *out = table.action(model.graph.project(&b, ReceptionTag::None));
        Ok(())
    })
}

/// Simulates `policy` on the model's parameters for each seed and averages.
/// The POMDP policy requires a solved model.
///
/// # Safety
/// `model` must be a live handle; `seeds` must point to `n_seeds` values;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_simulate(
    model: *const PtModel,
    policy: PtPolicy,
    horizon: u64,
    seeds: *const u64,
    n_seeds: usize,
    out: *mut PtSimResult,
) -> PtStatus {
    if model.is_null() {
        return null("model");
    }
    if seeds.is_null() || n_seeds == 0 {
        set_error("at least one seed is required");
        return PtStatus::InvalidArgument;
    }
    if out.is_null() {
        return null("out");
    }
    let model = &*model;
    let seeds = std::slice::from_raw_parts(seeds, n_seeds).to_vec();
    guard(|| {
        let spec = model.graph.spec();
        let cfg = SimConfig {
            horizon,
            kind: model.cost.kind,
            update_lag: model.cost.update_lag,
            root: spec.root,
            ..SimConfig::new(spec.source, spec.p_s, model.cost.gamma)
        };
        let policy = match PolicyKind::from(policy) {
            PolicyKind::Pomdp => {
                let table = model.table.as_ref().ok_or_else(|| {
                    set_error("model has not been solved");
                    PtStatus::NotSolved
                })?;
                Policy::Pomdp {
                    table,
                    graph: &model.graph,
                }
            }
            other => Policy::simple(other).map_err(fail)?,
        };
        let agg = pulltrack::run_replications(&cfg, &policy, &seeds).map_err(fail)?;
        *out = PtSimResult {
            mean_cost: agg.mean_cost,
            stderr_cost: agg.stderr_cost,
            mean_distortion: agg.mean_distortion,
            stderr_distortion: agg.stderr_distortion,
            mean_transmissions: agg.mean_transmissions,
            runs: agg.runs.len(),
        };
        Ok(())
    })
}
