//! Convex free-energy minimization on a factor graph.
//!
//! The free energy of beliefs `(b_α, b_i)` under counting numbers
//! `(c_i, c_iα, c_α)` is
//!
//! ```text
//! F(b) = Σ_α ⟨E_α, b_α⟩ − Σ_α c_α H(b_α) − Σ_i c_i H(b_i)
//!        + Σ_{i, α∈N(i)} c_iα (H(b_i) − H(b_α))
//! ```
//!
//! minimized subject to per-factor normalization, marginalization
//! consistency, and nonnegativity. With admissible counting numbers the
//! problem is strictly convex over the constraints, and the block
//! dual-ascent schedules in [`crate::engine`] converge to its global
//! minimum. This module maps the problem onto that engine
//! ([`build_block_problem`]) and also implements the equivalent closed-form
//! message-passing updates ([`sequential_sweep`], [`parallel_step`]), which
//! are the fast path used by [`run`].

mod messages;
mod problem;

pub use messages::{beliefs_from_messages, parallel_step, sequential_sweep, MessageSet};
pub use problem::{build_block_problem, FreeEnergyProblem};

use std::time::Instant;

use thiserror::Error;

use crate::beliefs::BeliefSet;
use crate::counting::{check_admissible, derive_constants, CountingNumbers, DerivedConstants};
use crate::graph::FactorGraph;
use crate::numeric::xlogx_sum;

/// Stopping tolerance on the primal free-energy change, 1e-5 by default.
pub const DEFAULT_STOP_TOL: f64 = 1e-5;
/// Default sweep/round cap.
pub const DEFAULT_MAX_ITERS: usize = 10_000;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("counting numbers do not match the graph")]
    DimensionMismatch,
    #[error("belief tables do not match the graph")]
    BeliefShapeMismatch,
    #[error("free energy evaluated to a non-finite value")]
    NonFiniteEnergy,
    #[error("message table for incidence {incidence} became non-finite")]
    NonFiniteMessage { incidence: usize },
    #[error("did not converge within the iteration cap")]
    DidNotConverge(Box<RunResult>),
}

/// A factor graph together with counting numbers and everything derived
/// from them that the solvers need.
#[derive(Debug, Clone)]
pub struct FreeEnergySpec {
    graph: FactorGraph,
    counting: CountingNumbers,
    derived: DerivedConstants,
    log_psi: Vec<Vec<f64>>,
    energies: Vec<Vec<f64>>,
    admissible: bool,
}

impl FreeEnergySpec {
    /// Builds a spec, accepting non-admissible counting numbers with the
    /// `is_admissible` flag cleared (convexity is then not guaranteed).
    pub fn new(graph: FactorGraph, counting: CountingNumbers) -> Result<Self, EnergyError> {
        let derived =
            derive_constants(&graph, &counting).map_err(|_| EnergyError::DimensionMismatch)?;
        let admissible = check_admissible(&graph, &counting, 1e-8).passes();
        // ĉ_i > 0 is structural: every variable sits in some factor and all
        // c_α are positive for any usable counting assignment.
        assert!(
            derived.chat_var.iter().all(|&v| v > 0.0),
            "ĉ_i must be positive"
        );
        let log_psi: Vec<Vec<f64>> = graph
            .factors()
            .iter()
            .map(|f| f.table.values().iter().map(|v| v.ln()).collect())
            .collect();
        let energies = graph.factors().iter().map(|f| f.table.energies()).collect();
        Ok(FreeEnergySpec {
            graph,
            counting,
            derived,
            log_psi,
            energies,
            admissible,
        })
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn counting(&self) -> &CountingNumbers {
        &self.counting
    }

    pub fn derived(&self) -> &DerivedConstants {
        &self.derived
    }

    pub fn is_admissible(&self) -> bool {
        self.admissible
    }

    pub fn log_psi(&self, factor: usize) -> &[f64] {
        &self.log_psi[factor]
    }

    pub fn energies(&self, factor: usize) -> &[f64] {
        &self.energies[factor]
    }
}

/// Evaluates the free energy of a belief set (`0·ln 0 = 0`).
pub fn free_energy(spec: &FreeEnergySpec, beliefs: &BeliefSet) -> Result<f64, EnergyError> {
    let g = spec.graph();
    if beliefs.var.len() != g.num_variables() || beliefs.fac.len() != g.num_factors() {
        return Err(EnergyError::BeliefShapeMismatch);
    }
    let mut value = 0.0;
    let mut fac_xlogx = Vec::with_capacity(g.num_factors());
    for (a, table) in beliefs.fac.iter().enumerate() {
        if table.len() != g.factor(a).table.len() {
            return Err(EnergyError::BeliefShapeMismatch);
        }
        let energy = spec.energies(a);
        value += table.iter().zip(energy).map(|(&b, &e)| b * e).sum::<f64>();
        let s = xlogx_sum(table);
        fac_xlogx.push(s);
        value += spec.counting.c_fac[a] * s;
    }
    let mut var_xlogx = Vec::with_capacity(g.num_variables());
    for (i, table) in beliefs.var.iter().enumerate() {
        if table.len() != g.cardinality(i) {
            return Err(EnergyError::BeliefShapeMismatch);
        }
        let s = xlogx_sum(table);
        var_xlogx.push(s);
        value += spec.counting.c_var[i] * s;
    }
    for (e, &(i, a)) in g.incidences().iter().enumerate() {
        // c_iα (H(b_i) − H(b_α)) = c_iα (Σ b_α ln b_α − Σ b_i ln b_i)
        value += spec.counting.c_inc[e] * (fac_xlogx[a] - var_xlogx[i]);
    }
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EnergyError::NonFiniteEnergy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Sequential,
    Parallel,
}

impl std::str::FromStr for Schedule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seq" | "sequential" => Ok(Schedule::Sequential),
            "par" | "parallel" => Ok(Schedule::Parallel),
            other => Err(format!("unknown schedule `{other}`")),
        }
    }
}

/// Per-iteration diagnostics of [`run`].
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub free_energy: Vec<f64>,
    pub consistency: Vec<f64>,
    pub seconds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub beliefs: BeliefSet,
    pub iterations: usize,
    pub converged: bool,
    pub final_free_energy: f64,
    pub trace: RunTrace,
}

/// Iterates the chosen message-passing schedule until the free energy of
/// the extracted beliefs changes by at most `stop_tol` between iterations.
/// Non-convergence is an error carrying the last beliefs and the trace.
pub fn run(
    spec: &FreeEnergySpec,
    schedule: Schedule,
    stop_tol: f64,
    max_iters: usize,
) -> Result<RunResult, EnergyError> {
    let start = Instant::now();
    let mut msgs = MessageSet::uniform(spec.graph());
    let mut trace = RunTrace::default();
    let beliefs = beliefs_from_messages(spec, &msgs);
    let mut previous = free_energy(spec, &beliefs)?;
    trace.free_energy.push(previous);
    trace.consistency.push(beliefs.consistency_error(spec.graph()));
    trace.seconds.push(start.elapsed().as_secs_f64());

    let mut last_beliefs = beliefs;
    for iteration in 1..=max_iters {
        msgs = match schedule {
            Schedule::Sequential => sequential_sweep(spec, &msgs)?,
            Schedule::Parallel => parallel_step(spec, &msgs)?,
        };
        let beliefs = beliefs_from_messages(spec, &msgs);
        let value = free_energy(spec, &beliefs)?;
        trace.free_energy.push(value);
        trace.consistency.push(beliefs.consistency_error(spec.graph()));
        trace.seconds.push(start.elapsed().as_secs_f64());
        last_beliefs = beliefs;
        let change = (value - previous).abs();
        previous = value;
        if change <= stop_tol {
            return Ok(RunResult {
                beliefs: last_beliefs,
                iterations: iteration,
                converged: true,
                final_free_energy: value,
                trace,
            });
        }
    }
    Err(EnergyError::DidNotConverge(Box::new(RunResult {
        beliefs: last_beliefs,
        iterations: max_iters,
        converged: false,
        final_free_energy: previous,
        trace,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::test_graphs::{chain3, single_unary};
    use approx::assert_relative_eq;

    #[test]
    fn free_energy_of_uniform_single_unary() {
        // ψ = (1,1), c_α = 1, everything else 0, uniform beliefs → −ln 2.
        let g = single_unary([1.0, 1.0]);
        let counting = CountingNumbers {
            c_var: vec![0.0],
            c_fac: vec![1.0],
            c_inc: vec![0.0],
        };
        let spec = FreeEnergySpec::new(g, counting).unwrap();
        let b = BeliefSet::uniform(spec.graph());
        let f = free_energy(&spec, &b).unwrap();
        assert_relative_eq!(f, -(2f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn free_energy_of_uniform_bethe_chain_is_minus_ln_z() {
        // 3-node chain, ψ ≡ 1, Bethe realization: c̄_α = 1, c̄_i = (0,−1,0).
        let g = chain3();
        let counting = CountingNumbers {
            c_var: vec![0.0, 0.0, 0.0],
            c_fac: vec![0.5, 0.5],
            c_inc: vec![0.0, 0.5, 0.5, 0.0],
        };
        let spec = FreeEnergySpec::new(g, counting).unwrap();
        assert!(spec.is_admissible());
        let b = BeliefSet::uniform(spec.graph());
        let f = free_energy(&spec, &b).unwrap();
        assert_relative_eq!(f, -3.0 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn pure_factor_counting_reduces_to_f_of_eq3() {
        // Only c_α nonzero: F = ⟨E,b⟩ − Σ c_α H(b_α).
        let g = chain3();
        let counting = CountingNumbers {
            c_var: vec![0.0; 3],
            c_fac: vec![0.7, 1.3],
            c_inc: vec![0.0; 4],
        };
        let spec = FreeEnergySpec::new(g, counting).unwrap();
        let b = BeliefSet::uniform(spec.graph());
        let f = free_energy(&spec, &b).unwrap();
        // ψ ≡ 1 so ⟨E,b⟩ = 0; H(b_α) = ln 4 for both factors.
        assert_relative_eq!(f, -(0.7 + 1.3) * 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn non_admissible_counting_is_accepted_with_flag() {
        let g = single_unary([1.0, 1.0]);
        let counting = CountingNumbers {
            c_var: vec![0.0],
            c_fac: vec![0.5],
            c_inc: vec![0.0],
        };
        let spec = FreeEnergySpec::new(g, counting).unwrap();
        assert!(!spec.is_admissible());
    }
}
