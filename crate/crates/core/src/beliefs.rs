//! Normalized marginal estimates for all variables and factors of a graph.

use crate::graph::FactorGraph;
use crate::numeric::linf;

/// Per-variable and per-factor probability tables.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSet {
    pub var: Vec<Vec<f64>>,
    pub fac: Vec<Vec<f64>>,
}

impl BeliefSet {
    /// Uniform beliefs over every variable and factor table.
    pub fn uniform(graph: &FactorGraph) -> Self {
        let var = graph
            .variables()
            .iter()
            .map(|v| vec![1.0 / v.cardinality as f64; v.cardinality])
            .collect();
        let fac = graph
            .factors()
            .iter()
            .map(|f| vec![1.0 / f.table.len() as f64; f.table.len()])
            .collect();
        BeliefSet { var, fac }
    }

    /// Beliefs induced by an independent product distribution `q_i` per
    /// variable; always satisfies normalization and marginalization
    /// consistency exactly, which makes it a cheap feasible point.
    pub fn from_product(graph: &FactorGraph, q: &[Vec<f64>]) -> Self {
        let var: Vec<Vec<f64>> = q.to_vec();
        let mut fac = Vec::with_capacity(graph.num_factors());
        for f in graph.factors() {
            let strides = graph.factor_strides(f.id);
            let mut table = vec![1.0; f.table.len()];
            for (pos, &v) in f.scope.iter().enumerate() {
                let card = graph.cardinality(v);
                for (t, entry) in table.iter_mut().enumerate() {
                    *entry *= q[v][(t / strides[pos]) % card];
                }
            }
            fac.push(table);
        }
        BeliefSet { var, fac }
    }

    /// Largest deviation of any table sum from 1.
    pub fn normalization_error(&self) -> f64 {
        let worst = |tables: &[Vec<f64>]| {
            tables
                .iter()
                .map(|t| (t.iter().sum::<f64>() - 1.0).abs())
                .fold(0.0, f64::max)
        };
        worst(&self.var).max(worst(&self.fac))
    }

    /// Largest violation of `Σ_{x_α \ x_i} b_α = b_i` over all incidences.
    pub fn consistency_error(&self, graph: &FactorGraph) -> f64 {
        let mut worst: f64 = 0.0;
        for &(i, a) in graph.incidences() {
            let pos = graph.scope_position(a, i).expect("incidence in scope");
            let marg = graph.table_marginal(a, pos, &self.fac[a]);
            worst = worst.max(linf(&marg, &self.var[i]));
        }
        worst
    }

    /// Max-norm gap between the variable marginals of two belief sets.
    pub fn var_linf(&self, other: &BeliefSet) -> f64 {
        self.var
            .iter()
            .zip(&other.var)
            .map(|(a, b)| linf(a, b))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ising_grid, Interaction};

    #[test]
    fn product_beliefs_are_consistent() {
        let g = ising_grid(3, 0.7, 1.3, Interaction::Mixed, 5);
        let q: Vec<Vec<f64>> = (0..g.num_variables())
            .map(|i| {
                let p = 0.2 + 0.6 * (i as f64 / 9.0);
                vec![p, 1.0 - p]
            })
            .collect();
        let b = BeliefSet::from_product(&g, &q);
        assert!(b.normalization_error() < 1e-12);
        assert!(b.consistency_error(&g) < 1e-12);
    }

    #[test]
    fn uniform_beliefs_normalize() {
        let g = ising_grid(2, 0.0, 0.0, Interaction::Mixed, 0);
        let b = BeliefSet::uniform(&g);
        assert!(b.normalization_error() < 1e-15);
        assert!(b.consistency_error(&g) < 1e-15);
    }
}
