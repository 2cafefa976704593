//! Factor-graph data model: variables, factors with strictly positive
//! potential tables, validated bipartite adjacency.
//!
//! Tables are dense and row-major over the factor scope with the *last*
//! scope variable running fastest. Validation enforces the restriction that
//! any two factors share at most one variable; the closed-form block updates
//! in [`crate::energy`] rely on it.

mod generate;
mod io;

pub use generate::{ising_grid, random_graph, random_tree, Interaction};
pub use io::{parse_model, serialize_model, ModelIoError};

use thiserror::Error;

/// A discrete variable node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub id: usize,
    /// Number of states, at least 2.
    pub cardinality: usize,
}

/// Dense table of strictly positive potential values over a factor scope.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    values: Vec<f64>,
}

impl PotentialTable {
    pub fn new(values: Vec<f64>) -> Self {
        PotentialTable { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Energies `E(x) = -ln ψ(x)`, finite because entries are positive.
    pub fn energies(&self) -> Vec<f64> {
        self.values.iter().map(|v| -v.ln()).collect()
    }
}

/// A factor node: an ordered scope of variable ids plus its table.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub id: usize,
    pub scope: Vec<usize>,
    pub table: PotentialTable,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("variable ids must be contiguous 0..n-1 (got id {0})")]
    NonContiguousIds(usize),
    #[error("variable {0} has cardinality {1}, need at least 2")]
    BadCardinality(usize, usize),
    #[error("factor {0} has an empty scope")]
    EmptyScope(usize),
    #[error("factor {factor} references unknown variable {var}")]
    UnknownVariable { factor: usize, var: usize },
    #[error("factor {factor} repeats variable {var} in its scope")]
    DuplicateVariableInScope { factor: usize, var: usize },
    #[error("factor {factor} table has {got} entries, scope requires {expected}")]
    TableSizeMismatch {
        factor: usize,
        expected: usize,
        got: usize,
    },
    #[error("factor {factor} entry {index} is not strictly positive")]
    NonPositivePotential { factor: usize, index: usize },
    #[error("factors {a} and {b} intersect in more than one variable")]
    MultiIntersection { a: usize, b: usize },
    #[error("variable {0} appears in no factor")]
    IsolatedVariable(usize),
    #[error("factor ids must be contiguous 0..m-1 (got id {0})")]
    NonContiguousFactorIds(usize),
}

/// Validated bipartite factor graph. Immutable after construction, so it is
/// safe to share across threads.
#[derive(Debug, Clone)]
pub struct FactorGraph {
    variables: Vec<Variable>,
    factors: Vec<Factor>,
    /// Per variable: `(factor id, incidence id)` in factor order.
    var_adj: Vec<Vec<(usize, usize)>>,
    /// Incidence list in factor-major order: `incidences[e] = (var, factor)`.
    incidences: Vec<(usize, usize)>,
    /// Per factor: incidence ids aligned with the scope order.
    fac_inc: Vec<Vec<usize>>,
}

/// Builds and validates a factor graph.
pub fn build_graph(variables: Vec<Variable>, factors: Vec<Factor>) -> Result<FactorGraph, GraphError> {
    for (k, v) in variables.iter().enumerate() {
        if v.id != k {
            return Err(GraphError::NonContiguousIds(v.id));
        }
        if v.cardinality < 2 {
            return Err(GraphError::BadCardinality(v.id, v.cardinality));
        }
    }
    let n = variables.len();
    for (k, f) in factors.iter().enumerate() {
        if f.id != k {
            return Err(GraphError::NonContiguousFactorIds(f.id));
        }
        if f.scope.is_empty() {
            return Err(GraphError::EmptyScope(f.id));
        }
        let mut seen = vec![false; n];
        for &v in &f.scope {
            if v >= n {
                return Err(GraphError::UnknownVariable { factor: f.id, var: v });
            }
            if seen[v] {
                return Err(GraphError::DuplicateVariableInScope { factor: f.id, var: v });
            }
            seen[v] = true;
        }
        let expected: usize = f.scope.iter().map(|&v| variables[v].cardinality).product();
        if f.table.len() != expected {
            return Err(GraphError::TableSizeMismatch {
                factor: f.id,
                expected,
                got: f.table.len(),
            });
        }
        for (i, &x) in f.table.values().iter().enumerate() {
            if !(x > 0.0) || !x.is_finite() {
                return Err(GraphError::NonPositivePotential { factor: f.id, index: i });
            }
        }
    }

    // Pairwise intersection check: collect per-variable membership first.
    let mut membership: Vec<Vec<usize>> = vec![Vec::new(); n];
    for f in &factors {
        for &v in &f.scope {
            membership[v].push(f.id);
        }
    }
    for (v, facs) in membership.iter().enumerate() {
        if facs.is_empty() {
            return Err(GraphError::IsolatedVariable(v));
        }
    }
    // Two factors may share at most one variable: count shared variables for
    // every factor pair that co-occurs at some variable.
    let mut pair_counts: std::collections::HashMap<(usize, usize), usize> =
        std::collections::HashMap::new();
    for facs in &membership {
        for i in 0..facs.len() {
            for j in (i + 1)..facs.len() {
                let key = (facs[i].min(facs[j]), facs[i].max(facs[j]));
                let c = pair_counts.entry(key).or_insert(0);
                *c += 1;
                if *c > 1 {
                    return Err(GraphError::MultiIntersection { a: key.0, b: key.1 });
                }
            }
        }
    }

    let mut var_adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut incidences = Vec::new();
    let mut fac_inc = Vec::with_capacity(factors.len());
    for f in &factors {
        let mut ids = Vec::with_capacity(f.scope.len());
        for &v in &f.scope {
            let e = incidences.len();
            incidences.push((v, f.id));
            var_adj[v].push((f.id, e));
            ids.push(e);
        }
        fac_inc.push(ids);
    }

    Ok(FactorGraph {
        variables,
        factors,
        var_adj,
        incidences,
        fac_inc,
    })
}

impl FactorGraph {
    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn num_incidences(&self) -> usize {
        self.incidences.len()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn variable(&self, i: usize) -> &Variable {
        &self.variables[i]
    }

    pub fn factor(&self, a: usize) -> &Factor {
        &self.factors[a]
    }

    pub fn cardinality(&self, i: usize) -> usize {
        self.variables[i].cardinality
    }

    /// Factors touching variable `i`, as `(factor id, incidence id)` pairs.
    pub fn factors_of(&self, i: usize) -> &[(usize, usize)] {
        &self.var_adj[i]
    }

    /// Variable degree `|N(i)|`.
    pub fn degree(&self, i: usize) -> usize {
        self.var_adj[i].len()
    }

    /// All `(variable, factor)` incidences in factor-major order.
    pub fn incidences(&self) -> &[(usize, usize)] {
        &self.incidences
    }

    /// Incidence ids of factor `a`, aligned with its scope order.
    pub fn factor_incidences(&self, a: usize) -> &[usize] {
        &self.fac_inc[a]
    }

    /// Position of variable `i` within the scope of factor `a`.
    pub fn scope_position(&self, a: usize, i: usize) -> Option<usize> {
        self.factors[a].scope.iter().position(|&v| v == i)
    }

    /// Table strides of factor `a` (row-major, last scope variable fastest).
    pub fn factor_strides(&self, a: usize) -> Vec<usize> {
        let scope = &self.factors[a].scope;
        let mut strides = vec![1usize; scope.len()];
        for k in (0..scope.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.cardinality(scope[k + 1]);
        }
        strides
    }

    /// State of the `pos`-th scope variable of factor `a` at table index `t`.
    pub fn state_at(&self, a: usize, pos: usize, t: usize) -> usize {
        let strides = self.factor_strides(a);
        let card = self.cardinality(self.factors[a].scope[pos]);
        (t / strides[pos]) % card
    }

    /// Marginalizes a dense table of factor `a` onto its `pos`-th scope
    /// variable by plain summation.
    pub fn table_marginal(&self, a: usize, pos: usize, table: &[f64]) -> Vec<f64> {
        let scope = &self.factors[a].scope;
        let strides = self.factor_strides(a);
        let card = self.cardinality(scope[pos]);
        let mut out = vec![0.0; card];
        for (t, &v) in table.iter().enumerate() {
            out[(t / strides[pos]) % card] += v;
        }
        out
    }
}
