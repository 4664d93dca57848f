//! Optimal eviction under the LRU Stack Model.
//!
//! The crate is organized bottom-up:
//!
//! - [`dist`]: stack-depth distributions, LRU stacks, trace generation and
//!   the text/binary file formats.
//! - [`segments`]: the linear-time segmentation that yields the Least Profit
//!   Rate (LPR) priorities and the optimal `K(C)`/`L(C)` pair for every
//!   capacity, together with brute-force checks.
//! - [`policies`]: per-capacity reference simulators (LRU, MRU, FIFO, KL, LPR,
//!   Belady-OPT) and the closed-form KL miss rate.
//! - [`faststack`]: LPR stack distances for all capacities at once in
//!   `O(log V)` per access, plus the `O(V)` reference engine it is checked
//!   against.
//! - [`control`]: finite-horizon dynamic programming and relative value
//!   iteration over the buffer-occupancy MDP, the `C = 2` Bellman closed form
//!   and the non-stack counterexample.
//! - [`allocation`]: single-item average-occupancy frontiers, greedy
//!   allocation across items and buffer partitioning.
//! - [`bounds`]: OPT lower bounds, the quasi-uniform reduction and
//!   competitive-ratio bounds.

// NaN must fail validation, so checks are written as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod bounds;
pub mod control;
pub mod dist;
pub mod error;
pub mod faststack;
pub mod policies;
pub mod segments;

pub use dist::{LruStack, Rng, StackDistribution, Trace};
pub use error::{Error, Result};
pub use faststack::{LprSimulator, MissCurve, NaiveLpr};
pub use policies::{Policy, SimResult};
pub use segments::{KlParams, Segmentation};
