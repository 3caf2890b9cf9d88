use thiserror::Error;

/// Errors produced while building, solving or simulating a tracking model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("source count {0} outside supported range 1..={max}", max = crate::source::MAX_SOURCES)]
    SourceCount(usize),

    #[error("transition kernel is not row-stochastic (row {row} sums to {sum})")]
    NotStochastic { row: usize, sum: f64 },

    #[error("transition kernel is reducible; no unique stationary distribution")]
    Reducible,

    #[error("stationary distribution did not converge (residual {0:e})")]
    StationaryNotConverged(f64),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("observation X_{index} = {bit} has zero probability under the current belief")]
    ImpossibleObservation { index: usize, bit: u8 },

    #[error("belief graph exceeded {cap} nodes; use a smaller truncation depth")]
    NodeCapExceeded { cap: usize },

    #[error("belief graph is not closed: node {node} action {action} has no resolved successors")]
    GraphNotClosed { node: usize, action: usize },

    #[error("mdp is not stochastic at state {state} action {action} (sum {sum})")]
    MdpNotStochastic { state: usize, action: usize, sum: f64 },

    #[error("instance too large for exhaustive search: {states} states, {actions} actions")]
    TooLarge { states: usize, actions: usize },

    #[error("policy table does not match the belief graph ({0})")]
    PolicyMismatch(String),

    #[error("unknown {what}: {value}")]
    Unknown { what: &'static str, value: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}
