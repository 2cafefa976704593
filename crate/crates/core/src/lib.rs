//! Approximate marginal inference on discrete factor graphs by global
//! minimization of convex free energies.
//!
//! The crate provides:
//!
//! - [`graph`]: the factor-graph data model, validation, Ising-style model
//!   generators, and a plain-text model format.
//! - [`counting`]: counting numbers `(c_i, c_iα, c_α)` controlling the
//!   entropy approximation, admissibility checks, and fitting heuristics
//!   (least-squares uniformity, maximum entropy, tree-reweighted).
//! - [`engine`]: a generic block dual-ascent solver for problems of the
//!   form `min_b f(b) + Σ_i h_i(b)` with sequential and parallel schedules.
//! - [`energy`]: the free-energy instantiation of the engine, closed-form
//!   message-passing sweeps, belief extraction, and the high-level solver.
//! - [`exact`]: ground-truth oracles (brute-force enumeration, variable
//!   elimination, projected gradient on the free-energy polytope).
//! - [`bp`]: plain sum-product belief propagation as a baseline.
//! - [`harness`]: benchmark suites (grid / random-graph / timing) with
//!   deterministic seeding and CSV output.

pub mod beliefs;
pub mod bp;
pub mod counting;
pub mod energy;
pub mod engine;
pub mod exact;
pub mod graph;
pub mod harness;
pub mod numeric;

mod projection;
mod textio;

pub use beliefs::BeliefSet;
pub use counting::{CountingNumbers, DerivedConstants};
pub use energy::FreeEnergySpec;
pub use graph::{Factor, FactorGraph, PotentialTable, Variable};
