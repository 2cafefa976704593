//! Projected gradient descent on the free energy over the belief polytope
//! (per-factor normalization, marginalization consistency, nonnegativity).
//!
//! An algorithm-agnostic optimum finder for the same objective the message
//! passing minimizes: no block structure, no duality, just Armijo
//! backtracking and Dykstra projections onto the constraint set. Used both
//! as a correctness oracle and as the general-solver side of the timing
//! comparison.

use nalgebra::{DMatrix, DVector};

use super::ExactError;
use crate::beliefs::BeliefSet;
use crate::energy::{free_energy, FreeEnergySpec};
use crate::graph::FactorGraph;
use crate::numeric::ln_clamped;
use crate::projection::{AffineBoxProjector, DykstraState};

/// Stopping rule: `GradientMapping` certifies near-optimality through the
/// fixed-point residual of the projection (unit probe step);
/// `PrimalChange` mirrors the message-passing stopping protocol for timing
/// comparisons.
#[derive(Debug, Clone, Copy)]
pub enum ProjectedStop {
    GradientMapping(f64),
    PrimalChange(f64),
}

#[derive(Debug, Clone)]
pub struct ProjectedOptions {
    pub stop: ProjectedStop,
    pub max_iters: usize,
}

impl Default for ProjectedOptions {
    fn default() -> Self {
        ProjectedOptions {
            stop: ProjectedStop::GradientMapping(1e-7),
            max_iters: 200_000,
        }
    }
}

struct FlatLayout {
    fac_offsets: Vec<usize>,
    var_offsets: Vec<usize>,
    dim: usize,
}

impl FlatLayout {
    fn of(graph: &FactorGraph) -> Self {
        let mut dim = 0;
        let fac_offsets = graph
            .factors()
            .iter()
            .map(|f| {
                let o = dim;
                dim += f.table.len();
                o
            })
            .collect();
        let var_offsets = graph
            .variables()
            .iter()
            .map(|v| {
                let o = dim;
                dim += v.cardinality;
                o
            })
            .collect();
        FlatLayout {
            fac_offsets,
            var_offsets,
            dim,
        }
    }

    fn pack(&self, beliefs: &BeliefSet) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim);
        for (a, t) in beliefs.fac.iter().enumerate() {
            for (k, &v) in t.iter().enumerate() {
                x[self.fac_offsets[a] + k] = v;
            }
        }
        for (i, t) in beliefs.var.iter().enumerate() {
            for (k, &v) in t.iter().enumerate() {
                x[self.var_offsets[i] + k] = v;
            }
        }
        x
    }

    fn unpack(&self, graph: &FactorGraph, x: &DVector<f64>) -> BeliefSet {
        let fac = graph
            .factors()
            .iter()
            .enumerate()
            .map(|(a, f)| (0..f.table.len()).map(|k| x[self.fac_offsets[a] + k]).collect())
            .collect();
        let var = graph
            .variables()
            .iter()
            .enumerate()
            .map(|(i, v)| (0..v.cardinality).map(|k| x[self.var_offsets[i] + k]).collect())
            .collect();
        BeliefSet { var, fac }
    }
}

/// Builds the affine rows: factor normalization plus consistency. For a
/// variable's second and later incidences the last-state row is implied by
/// the others together with the normalization rows, so it is dropped to
/// keep the system full rank.
fn constraint_rows(graph: &FactorGraph, layout: &FlatLayout) -> (DMatrix<f64>, DVector<f64>) {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for (a, f) in graph.factors().iter().enumerate() {
        let row = (0..f.table.len())
            .map(|k| (layout.fac_offsets[a] + k, 1.0))
            .collect();
        rows.push(row);
        rhs.push(1.0);
    }
    for i in 0..graph.num_variables() {
        let card = graph.cardinality(i);
        for (which, &(a, _)) in graph.factors_of(i).iter().enumerate() {
            let pos = graph.scope_position(a, i).expect("in scope");
            let stride = graph.factor_strides(a)[pos];
            let states = if which == 0 { card } else { card - 1 };
            for x in 0..states {
                let mut row: Vec<(usize, f64)> = (0..graph.factor(a).table.len())
                    .filter(|&t| (t / stride) % card == x)
                    .map(|t| (layout.fac_offsets[a] + t, 1.0))
                    .collect();
                row.push((layout.var_offsets[i] + x, -1.0));
                rows.push(row);
                rhs.push(0.0);
            }
        }
    }
    let mut a = DMatrix::<f64>::zeros(rows.len(), layout.dim);
    for (r, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            a[(r, c)] = v;
        }
    }
    (a, DVector::from_vec(rhs))
}

fn gradient(spec: &FreeEnergySpec, layout: &FlatLayout, x: &DVector<f64>) -> DVector<f64> {
    let g = spec.graph();
    let derived = spec.derived();
    let mut grad = DVector::zeros(layout.dim);
    for (a, f) in g.factors().iter().enumerate() {
        let energy = spec.energies(a);
        let cbar = derived.cbar_fac[a];
        for t in 0..f.table.len() {
            let b = x[layout.fac_offsets[a] + t];
            grad[layout.fac_offsets[a] + t] = energy[t] + cbar * (1.0 + ln_clamped(b));
        }
    }
    for i in 0..g.num_variables() {
        let cbar = derived.cbar_var[i];
        for k in 0..g.cardinality(i) {
            let b = x[layout.var_offsets[i] + k];
            grad[layout.var_offsets[i] + k] = -cbar * (1.0 + ln_clamped(b));
        }
    }
    grad
}

const PROJECTION_TOL: f64 = 1e-10;
const PROJECTION_CAP: usize = 500_000;

/// Minimizes the free energy over the belief polytope by projected gradient
/// with Armijo backtracking, starting from uniform beliefs.
pub fn projected_minimize(
    spec: &FreeEnergySpec,
    options: &ProjectedOptions,
) -> Result<BeliefSet, ExactError> {
    let graph = spec.graph();
    let layout = FlatLayout::of(graph);
    let (a, b) = constraint_rows(graph, &layout);
    let projector = AffineBoxProjector::new(a, b, DVector::zeros(layout.dim));
    let mut warm = DykstraState {
        x: DVector::zeros(layout.dim),
        q: DVector::zeros(layout.dim),
    };
    let project = |z: &DVector<f64>, warm: &mut DykstraState| -> Result<DVector<f64>, ExactError> {
        projector
            .project_intersection(z, PROJECTION_TOL, PROJECTION_CAP, Some(warm))
            .ok_or(ExactError::DidNotConverge)
    };

    let mut x = layout.pack(&BeliefSet::uniform(graph));
    let value_of = |x: &DVector<f64>| -> f64 {
        free_energy(spec, &layout.unpack(graph, x)).unwrap_or(f64::INFINITY)
    };
    let mut value = value_of(&x);
    let mut step = 1.0f64;

    for _ in 0..options.max_iters {
        let grad = gradient(spec, &layout, &x);
        let mut next = None;
        for _ in 0..80 {
            let z = &x - step * &grad;
            let candidate = project(&z, &mut warm)?;
            let candidate_value = value_of(&candidate);
            let delta = &candidate - &x;
            let bound =
                value + grad.dot(&delta) + delta.norm_squared() / (2.0 * step) + 1e-12;
            if candidate_value <= bound {
                next = Some((candidate, candidate_value));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, candidate_value)) = next else {
            // The step collapsed; treat the current point as converged if it
            // certifies, otherwise give up.
            break;
        };
        let moved = (&candidate - &x).amax();
        let change = (value - candidate_value).abs();
        x = candidate;
        value = candidate_value;
        step = (step * 2.0).min(8.0);

        match options.stop {
            ProjectedStop::PrimalChange(tol) => {
                if change <= tol {
                    return Ok(layout.unpack(graph, &x));
                }
            }
            ProjectedStop::GradientMapping(tol) => {
                if moved <= tol * step.max(1.0) {
                    let grad = gradient(spec, &layout, &x);
                    let probe = project(&(&x - &grad), &mut warm)?;
                    if (&x - &probe).amax() <= tol {
                        return Ok(layout.unpack(graph, &x));
                    }
                }
            }
        }
    }
    // Final certification attempt before reporting failure.
    let grad = gradient(spec, &layout, &x);
    let probe = project(&(&x - &grad), &mut warm)?;
    let gm = (&x - &probe).amax();
    match options.stop {
        ProjectedStop::GradientMapping(tol) if gm <= tol => Ok(layout.unpack(graph, &x)),
        ProjectedStop::PrimalChange(_) => Ok(layout.unpack(graph, &x)),
        _ => Err(ExactError::DidNotConverge),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::test_graphs::single_unary;
    use crate::counting::{fit_convex_l2, CountingNumbers};
    use crate::exact::brute_force_marginals;
    use crate::graph::{random_tree, Interaction};
    use approx::assert_relative_eq;

    #[test]
    fn single_factor_closed_form() {
        let counting = CountingNumbers {
            c_var: vec![0.0],
            c_fac: vec![1.0],
            c_inc: vec![0.0],
        };
        let spec = FreeEnergySpec::new(single_unary([4.0, 1.0]), counting).unwrap();
        let b = projected_minimize(&spec, &ProjectedOptions::default()).unwrap();
        assert_relative_eq!(b.var[0][0], 0.8, epsilon = 1e-6);
        assert_relative_eq!(b.fac[0][0], 0.8, epsilon = 1e-6);
    }

    #[test]
    fn tree_with_unit_cbar_matches_brute_force() {
        let g = random_tree(6, 11);
        let counting = fit_convex_l2(&g).unwrap();
        let spec = FreeEnergySpec::new(g.clone(), counting).unwrap();
        let beliefs = projected_minimize(&spec, &ProjectedOptions::default()).unwrap();
        let exact = brute_force_marginals(&g).unwrap().0;
        assert!(beliefs.var_linf(&exact) <= 1e-5);
    }

    #[test]
    fn output_is_feasible_and_beats_random_feasible_points() {
        use crate::graph::random_graph;
        use rand::Rng;
        use rand::SeedableRng;
        let g = random_graph(6, 0.5, 0.5, 1.0, Interaction::Mixed, 7);
        let counting = CountingNumbers::default_admissible(&g);
        let spec = FreeEnergySpec::new(g.clone(), counting).unwrap();
        let beliefs = projected_minimize(&spec, &ProjectedOptions::default()).unwrap();
        assert!(beliefs.normalization_error() <= 1e-8);
        assert!(beliefs.consistency_error(&g) <= 1e-8);
        let best = free_energy(&spec, &beliefs).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let q: Vec<Vec<f64>> = (0..g.num_variables())
                .map(|_| {
                    let p: f64 = rng.random_range(0.01..0.99);
                    vec![p, 1.0 - p]
                })
                .collect();
            let point = BeliefSet::from_product(&g, &q);
            let value = free_energy(&spec, &point).unwrap();
            assert!(
                best <= value + 1e-9,
                "optimum {best} worse than random feasible {value}"
            );
        }
    }
}
