//! Plain sum-product belief propagation, as the comparison baseline.
//!
//! Messages live in the log domain and are sum-normalized after every
//! update. No damping: on loopy graphs with strong mixed interactions the
//! iteration may fail to converge, which is reported through the
//! `converged` flag rather than as an error.

use crate::beliefs::BeliefSet;
use crate::graph::FactorGraph;
use crate::numeric::logsumexp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpSchedule {
    /// Synchronous flooding: all messages update from the previous round.
    Sync,
    /// In-place updates in fixed incidence order.
    Async,
}

#[derive(Debug, Clone)]
pub struct BpResult {
    pub beliefs: BeliefSet,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct BpOptions {
    pub max_iters: usize,
    /// Max-norm tolerance on the change of normalized messages.
    pub tol: f64,
    pub schedule: BpSchedule,
}

impl Default for BpOptions {
    fn default() -> Self {
        BpOptions {
            max_iters: 10_000,
            tol: 1e-8,
            schedule: BpSchedule::Sync,
        }
    }
}

struct Messages {
    /// log m_{α→i}(x_i), sum-normalized, per incidence.
    fac_to_var: Vec<Vec<f64>>,
    /// log n_{i→α}(x_i), sum-normalized, per incidence.
    var_to_fac: Vec<Vec<f64>>,
}

fn normalize(table: &mut [f64]) {
    let z = logsumexp(table);
    for v in table.iter_mut() {
        *v -= z;
    }
}

fn factor_to_var_update(
    graph: &FactorGraph,
    log_psi: &[Vec<f64>],
    var_to_fac: &Messages,
    incidence: usize,
) -> Vec<f64> {
    let (i, a) = graph.incidences()[incidence];
    let pos = graph.scope_position(a, i).expect("in scope");
    let strides = graph.factor_strides(a);
    let card = graph.cardinality(i);
    let table = &log_psi[a];
    // Accumulate ψ times incoming messages from the other scope variables.
    let mut work: Vec<f64> = table.clone();
    for (other_pos, &e) in graph.factor_incidences(a).iter().enumerate() {
        if e == incidence {
            continue;
        }
        let (j, _) = graph.incidences()[e];
        let msg = &var_to_fac.var_to_fac[e];
        let stride = strides[other_pos];
        let jcard = graph.cardinality(j);
        for (t, w) in work.iter_mut().enumerate() {
            *w += msg[(t / stride) % jcard];
        }
    }
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); card];
    for (t, &w) in work.iter().enumerate() {
        buckets[(t / strides[pos]) % card].push(w);
    }
    let mut out: Vec<f64> = buckets.iter().map(|b| logsumexp(b)).collect();
    normalize(&mut out);
    out
}

fn var_to_factor_update(graph: &FactorGraph, msgs: &Messages, incidence: usize) -> Vec<f64> {
    let (i, a) = graph.incidences()[incidence];
    let card = graph.cardinality(i);
    let mut out = vec![0.0; card];
    for &(b, e) in graph.factors_of(i) {
        if b == a {
            continue;
        }
        for (x, o) in out.iter_mut().enumerate() {
            *o += msgs.fac_to_var[e][x];
        }
    }
    normalize(&mut out);
    out
}

/// Runs sum-product BP and extracts beliefs `b_i ∝ Π m_{α→i}`,
/// `b_α ∝ ψ_α Π n_{j→α}`.
pub fn sum_product_bp(graph: &FactorGraph, options: &BpOptions) -> BpResult {
    let e_count = graph.num_incidences();
    let log_psi: Vec<Vec<f64>> = graph
        .factors()
        .iter()
        .map(|f| f.table.values().iter().map(|v| v.ln()).collect())
        .collect();
    let mut msgs = Messages {
        fac_to_var: graph
            .incidences()
            .iter()
            .map(|&(i, _)| {
                let c = graph.cardinality(i) as f64;
                vec![-(c.ln()); graph.cardinality(i)]
            })
            .collect(),
        var_to_fac: graph
            .incidences()
            .iter()
            .map(|&(i, _)| {
                let c = graph.cardinality(i) as f64;
                vec![-(c.ln()); graph.cardinality(i)]
            })
            .collect(),
    };

    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=options.max_iters {
        iterations = it;
        let mut change: f64 = 0.0;
        match options.schedule {
            BpSchedule::Sync => {
                let new_f2v: Vec<Vec<f64>> = (0..e_count)
                    .map(|e| factor_to_var_update(graph, &log_psi, &msgs, e))
                    .collect();
                for (e, t) in new_f2v.into_iter().enumerate() {
                    change = change.max(linear_change(&msgs.fac_to_var[e], &t));
                    msgs.fac_to_var[e] = t;
                }
                let new_v2f: Vec<Vec<f64>> = (0..e_count)
                    .map(|e| var_to_factor_update(graph, &msgs, e))
                    .collect();
                for (e, t) in new_v2f.into_iter().enumerate() {
                    change = change.max(linear_change(&msgs.var_to_fac[e], &t));
                    msgs.var_to_fac[e] = t;
                }
            }
            BpSchedule::Async => {
                for e in 0..e_count {
                    let t = factor_to_var_update(graph, &log_psi, &msgs, e);
                    change = change.max(linear_change(&msgs.fac_to_var[e], &t));
                    msgs.fac_to_var[e] = t;
                    let t = var_to_factor_update(graph, &msgs, e);
                    change = change.max(linear_change(&msgs.var_to_fac[e], &t));
                    msgs.var_to_fac[e] = t;
                }
            }
        }
        if change <= options.tol {
            converged = true;
            break;
        }
    }

    let mut var = Vec::with_capacity(graph.num_variables());
    for i in 0..graph.num_variables() {
        let mut t = vec![0.0; graph.cardinality(i)];
        for &(_, e) in graph.factors_of(i) {
            for (x, v) in t.iter_mut().enumerate() {
                *v += msgs.fac_to_var[e][x];
            }
        }
        normalize(&mut t);
        var.push(t.iter().map(|&v| v.exp()).collect());
    }
    let mut fac = Vec::with_capacity(graph.num_factors());
    for a in 0..graph.num_factors() {
        let strides = graph.factor_strides(a);
        let mut t = log_psi[a].clone();
        for (pos, &e) in graph.factor_incidences(a).iter().enumerate() {
            let (j, _) = graph.incidences()[e];
            let jcard = graph.cardinality(j);
            for (k, v) in t.iter_mut().enumerate() {
                *v += msgs.var_to_fac[e][(k / strides[pos]) % jcard];
            }
        }
        normalize(&mut t);
        fac.push(t.iter().map(|&v| v.exp()).collect());
    }
    BpResult {
        beliefs: BeliefSet { var, fac },
        converged,
        iterations,
    }
}

fn linear_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(&a, &b)| (a.exp() - b.exp()).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::test_graphs::single_unary;
    use crate::exact::brute_force_marginals;
    use crate::graph::{build_graph, random_tree, Factor, Interaction, PotentialTable, Variable};
    use approx::assert_relative_eq;

    #[test]
    fn single_factor_is_exact() {
        let g = single_unary([4.0, 1.0]);
        let r = sum_product_bp(&g, &BpOptions::default());
        assert!(r.converged);
        assert_relative_eq!(r.beliefs.var[0][0], 0.8, epsilon = 1e-10);
    }

    #[test]
    fn trees_are_exact_for_both_schedules() {
        for seed in 0..6u64 {
            let g = random_tree(9, seed);
            let exact = brute_force_marginals(&g).unwrap().0;
            for schedule in [BpSchedule::Sync, BpSchedule::Async] {
                let r = sum_product_bp(
                    &g,
                    &BpOptions {
                        schedule,
                        ..Default::default()
                    },
                );
                assert!(r.converged);
                assert!(
                    r.beliefs.var_linf(&exact) <= 1e-8,
                    "seed {seed}: gap {}",
                    r.beliefs.var_linf(&exact)
                );
            }
        }
    }

    /// Frustrated triangle with strong couplings: the classic BP failure
    /// mode. The instance was found by scanning coupling strengths; the
    /// non-convergence must be stable across reruns.
    #[test]
    fn strongly_frustrated_cycle_does_not_converge() {
        let theta = 3.0;
        let coupling = |sign: f64| {
            let t: f64 = sign * theta;
            PotentialTable::new(vec![t.exp(), (-t).exp(), (-t).exp(), t.exp()])
        };
        let vars: Vec<Variable> = (0..3).map(|id| Variable { id, cardinality: 2 }).collect();
        let factors = vec![
            Factor { id: 0, scope: vec![0, 1], table: coupling(1.0) },
            Factor { id: 1, scope: vec![1, 2], table: coupling(1.0) },
            Factor { id: 2, scope: vec![0, 2], table: coupling(-1.0) },
        ];
        let g = build_graph(vars, factors).unwrap();
        let opts = BpOptions {
            max_iters: 2000,
            ..Default::default()
        };
        let r1 = sum_product_bp(&g, &opts);
        let r2 = sum_product_bp(&g, &opts);
        assert!(!r1.converged);
        assert_eq!(r1.converged, r2.converged);
        assert_eq!(r1.iterations, r2.iterations);
    }

    #[test]
    fn loopy_attractive_grid_converges_reasonably() {
        let g = crate::graph::ising_grid(3, 0.5, 0.3, Interaction::Attractive, 5);
        let r = sum_product_bp(&g, &BpOptions::default());
        assert!(r.converged);
        let exact = brute_force_marginals(&g).unwrap().0;
        // Loopy BP is approximate; weak couplings keep it close.
        assert!(r.beliefs.var_linf(&exact) <= 0.05);
    }
}
