//! Fitting counting numbers: linear feasibility against `c̄_α` targets and
//! the convex-L2 / convex-H (maximum entropy) heuristics.
//!
//! Both heuristics minimize a smooth convex criterion of `c̄_α` over the
//! admissible polytope with projected gradient descent. The projection onto
//! {admissibility equalities} ∩ {sign constraints} alternates an exact
//! affine correction with a clamp (Dykstra), run to tolerance 1e-10, so the
//! accepted iterates are feasible up to that tolerance and the objective
//! trace is non-increasing by construction.

use nalgebra::{DMatrix, DVector};

use super::{CountingError, CountingNumbers, EPS_POS};
use crate::graph::FactorGraph;
use crate::projection::{AffineBoxProjector, DykstraState};

/// Joint feasibility tolerance for fitted counting numbers.
const FEAS_TOL: f64 = 1e-9;
/// Outer iteration cap for the projected-gradient fits.
const MAX_OUTER: usize = 1_000_000;
/// Inner iteration cap for one Dykstra projection.
const MAX_INNER: usize = 200_000;

/// Layout of the flat optimization vector: `[c_var | c_fac | c_inc]`.
struct Layout {
    n: usize,
    m: usize,
    e: usize,
}

impl Layout {
    fn of(graph: &FactorGraph) -> Self {
        Layout {
            n: graph.num_variables(),
            m: graph.num_factors(),
            e: graph.num_incidences(),
        }
    }
    fn dim(&self) -> usize {
        self.n + self.m + self.e
    }
    fn var(&self, i: usize) -> usize {
        i
    }
    fn fac(&self, a: usize) -> usize {
        self.n + a
    }
    fn inc(&self, e: usize) -> usize {
        self.n + self.m + e
    }
    fn unpack(&self, x: &DVector<f64>) -> CountingNumbers {
        CountingNumbers {
            c_var: (0..self.n).map(|i| x[self.var(i)]).collect(),
            c_fac: (0..self.m).map(|a| x[self.fac(a)]).collect(),
            c_inc: (0..self.e).map(|e| x[self.inc(e)]).collect(),
        }
    }
}

/// Admissibility equality rows: one per variable.
fn admissibility_rows(graph: &FactorGraph, layout: &Layout) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(layout.n, layout.dim());
    for i in 0..layout.n {
        a[(i, layout.var(i))] = 1.0;
        for &(fac, _) in graph.factors_of(i) {
            a[(i, layout.fac(fac))] += 1.0;
            for &e in graph.factor_incidences(fac) {
                let (j, _) = graph.incidences()[e];
                if j != i {
                    a[(i, layout.inc(e))] += 1.0;
                }
            }
        }
    }
    a
}

fn lower_bounds(layout: &Layout) -> DVector<f64> {
    let mut lower = DVector::<f64>::zeros(layout.dim());
    for a in 0..layout.m {
        lower[layout.fac(a)] = EPS_POS;
    }
    lower
}

/// Deterministic starting point: `c_i = c_iα = 0`, `c_α = 1`.
fn initial_point(layout: &Layout) -> DVector<f64> {
    let mut x = DVector::<f64>::zeros(layout.dim());
    for a in 0..layout.m {
        x[layout.fac(a)] = 1.0;
    }
    x
}

/// Finds admissible counting numbers matching the given `c̄_α` targets by
/// alternating projections; reports [`CountingError::Infeasible`] when the
/// equalities cannot be met with the sign constraints.
pub fn solve_admissible(
    graph: &FactorGraph,
    targets: &[f64],
) -> Result<CountingNumbers, CountingError> {
    if targets.len() != graph.num_factors() {
        return Err(CountingError::DimensionMismatch);
    }
    assert!(
        targets.iter().all(|&t| t > 0.0),
        "c̄ targets must be positive"
    );
    let layout = Layout::of(graph);
    let adm = admissibility_rows(graph, &layout);
    // Stack the target rows c_α + Σ_{i∈N(α)} c_iα = t_α below admissibility.
    let rows = layout.n + layout.m;
    let mut a = DMatrix::<f64>::zeros(rows, layout.dim());
    a.view_mut((0, 0), (layout.n, layout.dim())).copy_from(&adm);
    for fac in 0..layout.m {
        a[(layout.n + fac, layout.fac(fac))] = 1.0;
        for &e in graph.factor_incidences(fac) {
            a[(layout.n + fac, layout.inc(e))] = 1.0;
        }
    }
    let mut b = DVector::<f64>::from_element(rows, 1.0);
    for (fac, &t) in targets.iter().enumerate() {
        b[layout.n + fac] = t;
    }
    let projector = AffineBoxProjector::new(a, b, lower_bounds(&layout));
    let x = projector
        .project_intersection(&initial_point(&layout), FEAS_TOL, MAX_INNER, None)
        .ok_or(CountingError::Infeasible)?;
    Ok(layout.unpack(&x))
}

enum Objective {
    /// `Σ_α (c̄_α − 1)²`
    LeastSquaresToOne,
    /// `Σ_α c̄_α ln c̄_α`
    MaxEntropy,
}

impl Objective {
    fn value(&self, cbar: &[f64]) -> f64 {
        match self {
            Objective::LeastSquaresToOne => cbar.iter().map(|&c| (c - 1.0) * (c - 1.0)).sum(),
            Objective::MaxEntropy => cbar.iter().map(|&c| c * c.ln()).sum(),
        }
    }
    /// Derivative with respect to `c̄_α`.
    fn dcbar(&self, cbar: f64) -> f64 {
        match self {
            Objective::LeastSquaresToOne => 2.0 * (cbar - 1.0),
            Objective::MaxEntropy => cbar.ln() + 1.0,
        }
    }
}

fn cbar_of(graph: &FactorGraph, layout: &Layout, x: &DVector<f64>) -> Vec<f64> {
    let mut cbar: Vec<f64> = (0..layout.m).map(|a| x[layout.fac(a)]).collect();
    for (e, &(_, a)) in graph.incidences().iter().enumerate() {
        cbar[a] += x[layout.inc(e)];
    }
    cbar
}

fn gradient(
    graph: &FactorGraph,
    layout: &Layout,
    objective: &Objective,
    cbar: &[f64],
) -> DVector<f64> {
    let mut g = DVector::<f64>::zeros(layout.dim());
    for a in 0..layout.m {
        let d = objective.dcbar(cbar[a]);
        g[layout.fac(a)] = d;
        for &e in graph.factor_incidences(a) {
            g[layout.inc(e)] = d;
        }
    }
    g
}

fn fit(graph: &FactorGraph, objective: Objective) -> Result<CountingNumbers, CountingError> {
    let layout = Layout::of(graph);
    let adm = admissibility_rows(graph, &layout);
    let b = DVector::<f64>::from_element(layout.n, 1.0);
    let projector = AffineBoxProjector::new(adm, b, lower_bounds(&layout));
    let mut warm = DykstraState {
        x: DVector::zeros(layout.dim()),
        q: DVector::zeros(layout.dim()),
    };
    let mut x = projector
        .project_intersection(&initial_point(&layout), FEAS_TOL, MAX_INNER, Some(&mut warm))
        .ok_or(CountingError::Infeasible)?;
    let mut value = objective.value(&cbar_of(graph, &layout, &x));
    let mut step = 0.5;
    let mut iterations = 0usize;
    loop {
        let cbar = cbar_of(graph, &layout, &x);
        let grad = gradient(graph, &layout, &objective, &cbar);
        // Backtracking projected-gradient step with monotone acceptance.
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &x - step * &grad;
            let Some(proj) =
                projector.project_intersection(&trial, FEAS_TOL, MAX_INNER, Some(&mut warm))
            else {
                step *= 0.5;
                continue;
            };
            let trial_value = objective.value(&cbar_of(graph, &layout, &proj));
            let delta = &proj - &x;
            let decrease = grad.dot(&delta) + delta.norm_squared() / (2.0 * step);
            if trial_value <= value + decrease.min(0.0) + 1e-15 {
                let moved = delta.amax();
                x = proj;
                value = trial_value;
                accepted = true;
                if moved <= 1e-10 {
                    return Ok(layout.unpack(&x));
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Step collapsed: the iterate is stationary to working precision.
            return Ok(layout.unpack(&x));
        }
        step = (step * 2.0).min(4.0);
        iterations += 1;
        if iterations >= MAX_OUTER {
            return Err(CountingError::SolverDidNotConverge);
        }
    }
}

/// Least-squares fit of `c̄_α` toward 1 over the admissible polytope.
pub fn fit_convex_l2(graph: &FactorGraph) -> Result<CountingNumbers, CountingError> {
    fit(graph, Objective::LeastSquaresToOne)
}

/// Maximum-entropy fit minimizing `Σ_α c̄_α ln c̄_α` over the admissible
/// polytope.
pub fn fit_convex_maxent(graph: &FactorGraph) -> Result<CountingNumbers, CountingError> {
    fit(graph, Objective::MaxEntropy)
}
