//! Ground-truth oracles: full enumeration, variable elimination, and a
//! certified projected-gradient minimizer of the free energy over the
//! belief polytope.

mod project;

pub use project::{projected_minimize, ProjectedOptions, ProjectedStop};

use thiserror::Error;

use crate::beliefs::BeliefSet;
use crate::graph::FactorGraph;
use crate::numeric::logsumexp;

/// Enumeration / single-table size cap (joint states or entries).
pub const STATE_CAP: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExactError {
    #[error("joint state space exceeds the {0} cap")]
    TooLarge(usize),
    #[error("an intermediate elimination table exceeds the {0} entry cap")]
    WidthTooLarge(usize),
    #[error("projected gradient did not converge within the iteration cap")]
    DidNotConverge,
}

/// Exact marginals and `ln Z` by enumerating every joint state.
pub fn brute_force_marginals(graph: &FactorGraph) -> Result<(BeliefSet, f64), ExactError> {
    let n = graph.num_variables();
    let mut total: usize = 1;
    for v in graph.variables() {
        total = total
            .checked_mul(v.cardinality)
            .filter(|&t| t <= STATE_CAP)
            .ok_or(ExactError::TooLarge(STATE_CAP))?;
    }

    let log_tables: Vec<Vec<f64>> = graph
        .factors()
        .iter()
        .map(|f| f.table.values().iter().map(|v| v.ln()).collect())
        .collect();
    let strides: Vec<Vec<usize>> = (0..graph.num_factors())
        .map(|a| graph.factor_strides(a))
        .collect();

    let mut log_w = vec![0.0f64; total];
    let mut assignment = vec![0usize; n];
    for state in 0..total {
        // Mixed-radix decode, variable 0 slowest.
        let mut rem = state;
        for i in (0..n).rev() {
            let card = graph.cardinality(i);
            assignment[i] = rem % card;
            rem /= card;
        }
        let mut lw = 0.0;
        for (a, f) in graph.factors().iter().enumerate() {
            let mut idx = 0;
            for (pos, &v) in f.scope.iter().enumerate() {
                idx += assignment[v] * strides[a][pos];
            }
            lw += log_tables[a][idx];
        }
        log_w[state] = lw;
    }

    let log_z = logsumexp(&log_w);
    let mut beliefs = BeliefSet {
        var: graph
            .variables()
            .iter()
            .map(|v| vec![0.0; v.cardinality])
            .collect(),
        fac: graph
            .factors()
            .iter()
            .map(|f| vec![0.0; f.table.len()])
            .collect(),
    };
    for state in 0..total {
        let w = (log_w[state] - log_z).exp();
        let mut rem = state;
        for i in (0..n).rev() {
            let card = graph.cardinality(i);
            assignment[i] = rem % card;
            rem /= card;
        }
        for (i, &x) in assignment.iter().enumerate() {
            beliefs.var[i][x] += w;
        }
        for (a, f) in graph.factors().iter().enumerate() {
            let mut idx = 0;
            for (pos, &v) in f.scope.iter().enumerate() {
                idx += assignment[v] * strides[a][pos];
            }
            beliefs.fac[a][idx] += w;
        }
    }
    Ok((beliefs, log_z))
}

/// Dense log-domain table over an ordered list of variables (row-major,
/// last variable fastest).
#[derive(Debug, Clone)]
struct LogTable {
    vars: Vec<usize>,
    values: Vec<f64>,
}

impl LogTable {
    fn size(vars: &[usize], graph: &FactorGraph) -> usize {
        vars.iter().map(|&v| graph.cardinality(v)).product()
    }

    fn strides(&self, graph: &FactorGraph) -> Vec<usize> {
        let mut s = vec![1usize; self.vars.len()];
        for k in (0..self.vars.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * graph.cardinality(self.vars[k + 1]);
        }
        s
    }

    /// Multiplies (adds logs) `other` into a joint table over the union of
    /// the variable sets.
    fn multiply(&self, other: &LogTable, graph: &FactorGraph) -> Result<LogTable, ExactError> {
        let mut vars = self.vars.clone();
        for &v in &other.vars {
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
        let size = Self::size(&vars, graph);
        if size > STATE_CAP {
            return Err(ExactError::WidthTooLarge(STATE_CAP));
        }
        let map_into = |t: &LogTable| -> Vec<usize> {
            t.vars
                .iter()
                .map(|v| vars.iter().position(|w| w == v).expect("var in union"))
                .collect()
        };
        let pos_a = map_into(self);
        let pos_b = map_into(other);
        let strides_a = self.strides(graph);
        let strides_b = other.strides(graph);
        let mut values = vec![0.0f64; size];
        let mut assignment = vec![0usize; vars.len()];
        for (idx, value) in values.iter_mut().enumerate() {
            let mut rem = idx;
            for k in (0..vars.len()).rev() {
                let card = graph.cardinality(vars[k]);
                assignment[k] = rem % card;
                rem /= card;
            }
            let ia: usize = pos_a
                .iter()
                .zip(&strides_a)
                .map(|(&p, &s)| assignment[p] * s)
                .sum();
            let ib: usize = pos_b
                .iter()
                .zip(&strides_b)
                .map(|(&p, &s)| assignment[p] * s)
                .sum();
            *value = self.values[ia] + other.values[ib];
        }
        Ok(LogTable { vars, values })
    }

    /// Sums (log-sum-exp) a variable out of the table.
    fn marginalize_out(&self, var: usize, graph: &FactorGraph) -> LogTable {
        let pos = self.vars.iter().position(|&v| v == var).expect("var present");
        let strides = self.strides(graph);
        let card = graph.cardinality(var);
        let vars: Vec<usize> = self
            .vars
            .iter()
            .copied()
            .filter(|&v| v != var)
            .collect();
        let size = self.values.len() / card;
        // Result index: collapse the `pos` axis.
        let index_of = |t: usize| -> usize {
            let mut out = 0;
            let mut mul = 1;
            for k in (0..self.vars.len()).rev() {
                if k == pos {
                    continue;
                }
                let c = graph.cardinality(self.vars[k]);
                out += (t / strides[k]) % c * mul;
                mul *= c;
            }
            out
        };
        let mut maxes = vec![f64::NEG_INFINITY; size];
        for (t, &v) in self.values.iter().enumerate() {
            let o = index_of(t);
            if v > maxes[o] {
                maxes[o] = v;
            }
        }
        let mut sums = vec![0.0f64; size];
        for (t, &v) in self.values.iter().enumerate() {
            let o = index_of(t);
            sums[o] += (v - maxes[o]).exp();
        }
        let values = maxes
            .iter()
            .zip(&sums)
            .map(|(&m, &s)| m + s.ln())
            .collect();
        LogTable { vars, values }
    }

    /// Reorders to the requested variable order.
    fn permuted(&self, order: &[usize], graph: &FactorGraph) -> Vec<f64> {
        assert_eq!(order.len(), self.vars.len());
        let strides_self = self.strides(graph);
        let pos: Vec<usize> = order
            .iter()
            .map(|v| self.vars.iter().position(|w| w == v).expect("var present"))
            .collect();
        let mut out_strides = vec![1usize; order.len()];
        for k in (0..order.len().saturating_sub(1)).rev() {
            out_strides[k] = out_strides[k + 1] * graph.cardinality(order[k + 1]);
        }
        let mut out = vec![0.0; self.values.len()];
        for (idx, o) in out.iter_mut().enumerate() {
            let mut src = 0;
            for (k, &v) in order.iter().enumerate() {
                let card = graph.cardinality(v);
                let state = (idx / out_strides[k]) % card;
                src += state * strides_self[pos[k]];
            }
            *o = self.values[src];
        }
        out
    }
}

/// Exact (normalized, linear-domain) marginal table over `targets` in the
/// given variable order, via bucket elimination along `order`.
fn eliminate_to(
    graph: &FactorGraph,
    targets: &[usize],
    order: &[usize],
) -> Result<Vec<f64>, ExactError> {
    let mut tables: Vec<LogTable> = graph
        .factors()
        .iter()
        .map(|f| LogTable {
            vars: f.scope.clone(),
            values: f.table.values().iter().map(|v| v.ln()).collect(),
        })
        .collect();
    for &v in order {
        if targets.contains(&v) {
            continue;
        }
        let (with, without): (Vec<LogTable>, Vec<LogTable>) =
            tables.into_iter().partition(|t| t.vars.contains(&v));
        tables = without;
        if with.is_empty() {
            continue;
        }
        let mut product = with[0].clone();
        for t in &with[1..] {
            product = product.multiply(t, graph)?;
        }
        tables.push(product.marginalize_out(v, graph));
    }
    let mut product = tables[0].clone();
    for t in &tables[1..] {
        product = product.multiply(t, graph)?;
    }
    debug_assert_eq!(product.vars.len(), targets.len());
    let mut log_values = product.permuted(targets, graph);
    let z = logsumexp(&log_values);
    for v in log_values.iter_mut() {
        *v = (*v - z).exp();
    }
    Ok(log_values)
}

/// Exact marginals for every variable and factor by repeated elimination
/// along `order` (ascending variable ids when `None`; row-major ids give
/// width `n` on an `n × n` grid).
pub fn elimination_marginals(
    graph: &FactorGraph,
    order: Option<&[usize]>,
) -> Result<BeliefSet, ExactError> {
    let default_order: Vec<usize> = (0..graph.num_variables()).collect();
    let order = order.unwrap_or(&default_order);
    let mut var = Vec::with_capacity(graph.num_variables());
    for i in 0..graph.num_variables() {
        var.push(eliminate_to(graph, &[i], order)?);
    }
    let mut fac = Vec::with_capacity(graph.num_factors());
    for f in graph.factors() {
        fac.push(eliminate_to(graph, &f.scope, order)?);
    }
    Ok(BeliefSet { var, fac })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::test_graphs::single_unary;
    use crate::graph::{build_graph, ising_grid, random_graph, Factor, Interaction, PotentialTable, Variable};
    use approx::assert_relative_eq;

    #[test]
    fn single_factor_marginal_and_logz() {
        let g = single_unary([4.0, 1.0]);
        let (b, log_z) = brute_force_marginals(&g).unwrap();
        assert_relative_eq!(b.var[0][0], 0.8, epsilon = 1e-14);
        assert_relative_eq!(log_z, 5f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn two_variable_chain_hand_computed() {
        // Pairwise ψ = [[2,1],[1,2]] over (x0, x1) plus unary (2,1) on x1:
        // Z = 9, marginal of x1 is (2/3, 1/3).
        let vars: Vec<Variable> = (0..2).map(|id| Variable { id, cardinality: 2 }).collect();
        let factors = vec![
            Factor {
                id: 0,
                scope: vec![0, 1],
                table: PotentialTable::new(vec![2.0, 1.0, 1.0, 2.0]),
            },
            Factor {
                id: 1,
                scope: vec![1],
                table: PotentialTable::new(vec![2.0, 1.0]),
            },
        ];
        let g = build_graph(vars, factors).unwrap();
        let (b, log_z) = brute_force_marginals(&g).unwrap();
        assert_relative_eq!(log_z, 9f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(b.var[1][0], 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(b.var[1][1], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn uniform_potentials_uniform_marginals() {
        let g = ising_grid(3, 0.0, 0.0, Interaction::Mixed, 0);
        let (b, log_z) = brute_force_marginals(&g).unwrap();
        assert_relative_eq!(log_z, 9.0 * 2f64.ln(), epsilon = 1e-10);
        for t in &b.var {
            assert_relative_eq!(t[0], 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn elimination_matches_brute_force_on_grids() {
        for n in [3usize, 4] {
            let g = ising_grid(n, 0.6, 1.1, Interaction::Mixed, 21);
            let exact = brute_force_marginals(&g).unwrap().0;
            let elim = elimination_marginals(&g, None).unwrap();
            assert!(exact.var_linf(&elim) <= 1e-10);
            for (a, b) in exact.fac.iter().zip(&elim.fac) {
                assert!(crate::numeric::linf(a, b) <= 1e-10);
            }
        }
    }

    #[test]
    fn elimination_matches_brute_force_on_random_graphs() {
        for seed in 0..5u64 {
            let g = random_graph(8, 0.4, 0.8, 1.5, Interaction::Mixed, seed);
            let exact = brute_force_marginals(&g).unwrap().0;
            let elim = elimination_marginals(&g, None).unwrap();
            assert!(exact.var_linf(&elim) <= 1e-10);
        }
    }

    #[test]
    fn eight_by_eight_grid_runs_with_row_major_order() {
        let g = ising_grid(8, 0.5, 1.0, Interaction::Mixed, 3);
        let b = elimination_marginals(&g, None).unwrap();
        assert!(b.normalization_error() <= 1e-12);
        assert!(b.consistency_error(&g) <= 1e-10);
    }

    #[test]
    fn state_cap_is_enforced() {
        let g = random_graph(25, 0.0, 0.5, 0.5, Interaction::Mixed, 1);
        assert_eq!(
            brute_force_marginals(&g).unwrap_err(),
            ExactError::TooLarge(STATE_CAP)
        );
    }
}
