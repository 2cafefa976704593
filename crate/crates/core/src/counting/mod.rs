//! Counting numbers `(c_i, c_iα, c_α)` parameterizing the convex free
//! energy, their derived aggregates, admissibility checks, and fitting.
//!
//! A counting assignment is *admissible* when for every variable `i`
//!
//! ```text
//! c_i + Σ_{α∈N(i)} (c_α + Σ_{j∈N(α)\i} c_jα) = 1
//! ```
//!
//! together with `c_i, c_iα ≥ 0` and `c_α > 0`. Admissible assignments make
//! the free energy strictly convex over the marginalization constraints.

mod fit;
mod io;
mod trw;

pub use fit::{fit_convex_l2, fit_convex_maxent, solve_admissible};
pub use io::{parse_counts, serialize_counts, CountsIoError};
pub use trw::trw_pairwise_counting;

use thiserror::Error;

use crate::graph::FactorGraph;

/// Numerical lower bound standing in for the strict inequality `c_α > 0`.
pub const EPS_POS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CountingError {
    #[error("counting-number index sets do not match the graph")]
    DimensionMismatch,
    #[error("factor {0} is neither singleton nor pairwise")]
    NotPairwise(usize),
    #[error("pairwise variable graph is disconnected")]
    Disconnected,
    #[error("no admissible counting numbers satisfy the requested targets")]
    Infeasible,
    #[error("fitting solver hit its iteration cap before reaching tolerance")]
    SolverDidNotConverge,
}

/// One counting number per variable (`c_i`), factor (`c_α`) and incidence
/// (`c_iα`, indexed like [`FactorGraph::incidences`]).
#[derive(Debug, Clone, PartialEq)]
pub struct CountingNumbers {
    pub c_var: Vec<f64>,
    pub c_fac: Vec<f64>,
    pub c_inc: Vec<f64>,
}

impl CountingNumbers {
    pub fn matches(&self, graph: &FactorGraph) -> bool {
        self.c_var.len() == graph.num_variables()
            && self.c_fac.len() == graph.num_factors()
            && self.c_inc.len() == graph.num_incidences()
    }

    /// A simple admissible assignment available on every valid graph:
    /// `c_iα = 0`, `c_α = 1 / (1 + max degree in N(α))`, and `c_i` fixed by
    /// the admissibility equality. Useful as a well-conditioned reference
    /// point (`ĉ_i = 1` everywhere).
    pub fn default_admissible(graph: &FactorGraph) -> Self {
        let mut c_fac = Vec::with_capacity(graph.num_factors());
        for f in graph.factors() {
            let max_deg = f
                .scope
                .iter()
                .map(|&v| graph.degree(v))
                .max()
                .unwrap_or(1);
            c_fac.push(1.0 / (1.0 + max_deg as f64));
        }
        let c_var = (0..graph.num_variables())
            .map(|i| {
                let s: f64 = graph.factors_of(i).iter().map(|&(a, _)| c_fac[a]).sum();
                1.0 - s
            })
            .collect();
        CountingNumbers {
            c_var,
            c_fac,
            c_inc: vec![0.0; graph.num_incidences()],
        }
    }
}

/// Aggregates derived from counting numbers:
/// `c̄_α = c_α + Σ_{i∈N(α)} c_iα`, `c̄_i = c_i − Σ_{α∈N(i)} c_iα`,
/// `ĉ_i = c_i + Σ_{α∈N(i)} c_α`, `ĉ_iα = c_α + c_iα`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedConstants {
    pub cbar_fac: Vec<f64>,
    pub cbar_var: Vec<f64>,
    pub chat_var: Vec<f64>,
    pub chat_inc: Vec<f64>,
}

/// Computes all four derived constant families.
pub fn derive_constants(
    graph: &FactorGraph,
    counting: &CountingNumbers,
) -> Result<DerivedConstants, CountingError> {
    if !counting.matches(graph) {
        return Err(CountingError::DimensionMismatch);
    }
    let mut cbar_fac = counting.c_fac.clone();
    for (e, &(_, a)) in graph.incidences().iter().enumerate() {
        cbar_fac[a] += counting.c_inc[e];
    }
    let mut cbar_var = counting.c_var.clone();
    for (e, &(i, _)) in graph.incidences().iter().enumerate() {
        cbar_var[i] -= counting.c_inc[e];
    }
    let chat_var = (0..graph.num_variables())
        .map(|i| {
            counting.c_var[i]
                + graph
                    .factors_of(i)
                    .iter()
                    .map(|&(a, _)| counting.c_fac[a])
                    .sum::<f64>()
        })
        .collect();
    let chat_inc = graph
        .incidences()
        .iter()
        .enumerate()
        .map(|(e, &(_, a))| counting.c_fac[a] + counting.c_inc[e])
        .collect();
    Ok(DerivedConstants {
        cbar_fac,
        cbar_var,
        chat_var,
        chat_inc,
    })
}

/// One sign-constraint violation found by [`check_admissible`].
#[derive(Debug, Clone, PartialEq)]
pub enum SignViolation {
    VarNegative { var: usize, value: f64 },
    IncNegative { incidence: usize, value: f64 },
    FacNonPositive { factor: usize, value: f64 },
}

/// Outcome of the admissibility check: per-variable equality residuals plus
/// any sign violations.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub residuals: Vec<f64>,
    pub violations: Vec<SignViolation>,
    pub tol: f64,
}

impl AdmissibilityReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn passes(&self) -> bool {
        self.violations.is_empty() && self.max_residual() <= self.tol
    }
}

/// Evaluates the per-variable admissibility equalities and sign constraints.
pub fn check_admissible(
    graph: &FactorGraph,
    counting: &CountingNumbers,
    tol: f64,
) -> AdmissibilityReport {
    const SIGN_SLACK: f64 = 1e-12;
    let mut residuals = Vec::with_capacity(graph.num_variables());
    for i in 0..graph.num_variables() {
        let mut lhs = counting.c_var[i];
        for &(a, _) in graph.factors_of(i) {
            lhs += counting.c_fac[a];
            for &e in graph.factor_incidences(a) {
                let (j, _) = graph.incidences()[e];
                if j != i {
                    lhs += counting.c_inc[e];
                }
            }
        }
        residuals.push(lhs - 1.0);
    }
    let mut violations = Vec::new();
    for (i, &v) in counting.c_var.iter().enumerate() {
        if v < -SIGN_SLACK {
            violations.push(SignViolation::VarNegative { var: i, value: v });
        }
    }
    for (e, &v) in counting.c_inc.iter().enumerate() {
        if v < -SIGN_SLACK {
            violations.push(SignViolation::IncNegative { incidence: e, value: v });
        }
    }
    for (a, &v) in counting.c_fac.iter().enumerate() {
        if v <= 0.0 {
            violations.push(SignViolation::FacNonPositive { factor: a, value: v });
        }
    }
    AdmissibilityReport {
        residuals,
        violations,
        tol,
    }
}

/// Bethe target values: `c̄_α = 1` for every factor and `c̄_i = 1 − |N(i)|`.
/// These targets may not be representable by admissible counting numbers on
/// loopy graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct BetheTargets {
    pub cbar_fac: Vec<f64>,
    pub cbar_var: Vec<f64>,
}

pub fn bethe_counting(graph: &FactorGraph) -> BetheTargets {
    BetheTargets {
        cbar_fac: vec![1.0; graph.num_factors()],
        cbar_var: (0..graph.num_variables())
            .map(|i| 1.0 - graph.degree(i) as f64)
            .collect(),
    }
}


#[cfg(test)]
mod tests {
    use super::test_graphs::*;
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derived_constants_single_edge() {
        // One variable, one unary factor, c_i = 0.2, c_α = 0.5, c_iα = 0.3.
        let g = single_unary([1.0, 1.0]);
        let c = CountingNumbers {
            c_var: vec![0.2],
            c_fac: vec![0.5],
            c_inc: vec![0.3],
        };
        let d = derive_constants(&g, &c).unwrap();
        assert_relative_eq!(d.cbar_fac[0], 0.8);
        assert_relative_eq!(d.cbar_var[0], -0.1);
        assert_relative_eq!(d.chat_var[0], 0.7);
        assert_relative_eq!(d.chat_inc[0], 0.8);
    }

    #[test]
    fn zero_edge_counts_collapse_bars() {
        let g = chain3();
        let c = CountingNumbers {
            c_var: vec![0.3, 0.1, 0.2],
            c_fac: vec![0.5, 0.7],
            c_inc: vec![0.0; 4],
        };
        let d = derive_constants(&g, &c).unwrap();
        assert_eq!(d.cbar_fac, c.c_fac);
        assert_eq!(d.cbar_var, c.c_var);
    }

    #[test]
    fn bethe_chain_decomposition_realizes_unit_cbar() {
        // Hand decomposition on the 3-chain: c_α = 0.5 per factor, middle
        // variable edge counts 0.5 each side, rest zero.
        let g = chain3();
        // Incidences in factor-major order: (0,f0), (1,f0), (1,f1), (2,f1).
        let c = CountingNumbers {
            c_var: vec![0.0, 0.0, 0.0],
            c_fac: vec![0.5, 0.5],
            c_inc: vec![0.0, 0.5, 0.5, 0.0],
        };
        let d = derive_constants(&g, &c).unwrap();
        assert_relative_eq!(d.cbar_fac[0], 1.0);
        assert_relative_eq!(d.cbar_fac[1], 1.0);
        let rep = check_admissible(&g, &c, 1e-12);
        assert!(rep.passes(), "residuals {:?}", rep.residuals);
    }

    #[test]
    fn admissibility_residual_reports_deficit() {
        let g = single_unary([1.0, 1.0]);
        let ok = CountingNumbers {
            c_var: vec![0.0],
            c_fac: vec![1.0],
            c_inc: vec![0.0],
        };
        assert!(check_admissible(&g, &ok, 1e-12).passes());
        let off = CountingNumbers {
            c_var: vec![0.0],
            c_fac: vec![0.5],
            c_inc: vec![0.0],
        };
        let rep = check_admissible(&g, &off, 1e-12);
        assert!(!rep.passes());
        assert_relative_eq!(rep.residuals[0], -0.5);
    }

    #[test]
    fn sign_violations_are_reported() {
        let g = single_unary([1.0, 1.0]);
        let c = CountingNumbers {
            c_var: vec![-0.1],
            c_fac: vec![0.0],
            c_inc: vec![1.1],
        };
        let rep = check_admissible(&g, &c, 1e-12);
        assert_eq!(rep.violations.len(), 2);
    }

    #[test]
    fn bethe_targets_on_cycle_and_tree() {
        let tri = triangle();
        let t = bethe_counting(&tri);
        assert!(t.cbar_var.iter().all(|&v| v == -1.0));
        assert!(t.cbar_fac.iter().all(|&v| v == 1.0));

        let g = single_unary([1.0, 1.0]);
        let t = bethe_counting(&g);
        assert_eq!(t.cbar_var, vec![0.0]);
        assert_eq!(t.cbar_fac, vec![1.0]);
    }

    #[test]
    fn default_admissible_is_admissible_everywhere() {
        for g in [triangle(), k4(), chain3(), single_unary([2.0, 1.0])] {
            let c = CountingNumbers::default_admissible(&g);
            let rep = check_admissible(&g, &c, 1e-12);
            assert!(rep.passes());
            let d = derive_constants(&g, &c).unwrap();
            // This construction keeps ĉ_i = 1 exactly.
            for &h in &d.chat_var {
                assert_relative_eq!(h, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = chain3();
        let c = CountingNumbers {
            c_var: vec![0.0; 2],
            c_fac: vec![0.5; 2],
            c_inc: vec![0.0; 4],
        };
        assert_eq!(
            derive_constants(&g, &c).unwrap_err(),
            CountingError::DimensionMismatch
        );
    }
}
