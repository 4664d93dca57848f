use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("item {item} is not in the LRU stack (virtual space size {size})")]
    UnknownItem { item: u32, size: usize },

    #[error("capacity {capacity} out of range [{min}, {max}]")]
    CapacityOutOfRange {
        capacity: usize,
        min: usize,
        max: usize,
    },

    #[error("invalid KL parameters K={k}, L={l} for C={c} and V={v}: need 1 <= K < C <= L <= V")]
    InvalidKl {
        k: usize,
        l: usize,
        c: usize,
        v: usize,
    },

    #[error("state space too large: V={v} exceeds the cap of {cap}")]
    StateSpaceTooLarge { v: usize, cap: usize },

    #[error("value iteration did not converge after {iterations} iterations (span {span:e})")]
    NoConvergence { iterations: usize, span: f64 },

    #[error("infeasible budget {budget}: minimal total occupancy is {minimum}")]
    InfeasibleBudget { budget: f64, minimum: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
