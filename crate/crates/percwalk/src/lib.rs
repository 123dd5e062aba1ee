//! Monte Carlo laboratory for biased random walk on supercritical bond
//! percolation on `Z^d`.
//!
//! The crate provides:
//!
//! - lazy, deterministic percolation environments of unbounded extent
//!   ([`env`]), keyed by `(seed, p, d)` through a counter-based PRF;
//! - the conductance-biased walk kernel and trajectory simulation ([`walk`]);
//! - the regeneration-time construction and its derived counting sequences
//!   ([`regen`]);
//! - trap geometry: backtrack depth, one-headed traps, slabs and deep-trap
//!   excursions ([`traps`]);
//! - a heavy-tailed i.i.d. sums toolkit with exact prescribed tails and
//!   fluctuation diagnostics ([`nearstable`]);
//! - estimators gluing simulation output to scaling exponents ([`stats`]).
//!
//! Everything is pure over immutable inputs and deterministic given seeds, so
//! replicas parallelise without shared state.

pub mod env;
pub mod lattice;
pub mod nearstable;
pub mod prf;
pub mod regen;
pub mod stats;
pub mod traps;
pub mod walk;

pub use env::{Environment, Percolation};
pub use lattice::{Direction, EdgeId, Point};
pub use walk::Trajectory;
