//! Model generators for the benchmark suites.
//!
//! All generators use `ChaCha8Rng` seeded from a caller-supplied `u64`, so a
//! seed pins the drawn parameters bit for bit. Binary variables encode the
//! spin states as index 0 ↔ −1 and index 1 ↔ +1.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{build_graph, Factor, FactorGraph, PotentialTable, Variable};

/// Sign pattern of the pairwise couplings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interaction {
    /// θ_ij ~ U[-d_o, d_o]
    Mixed,
    /// θ_ij ~ U[0, d_o]
    Attractive,
}

impl Interaction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Interaction::Mixed => "mixed",
            Interaction::Attractive => "attractive",
        }
    }
}

impl std::str::FromStr for Interaction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mixed" => Ok(Interaction::Mixed),
            "attractive" => Ok(Interaction::Attractive),
            other => Err(format!("unknown interaction mode `{other}`")),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn field_table(theta: f64) -> PotentialTable {
    // ψ(x) = exp(θ·s(x)) with s(0) = −1, s(1) = +1.
    PotentialTable::new(vec![(-theta).exp(), theta.exp()])
}

fn coupling_table(theta: f64) -> PotentialTable {
    // Entries over (x_i, x_j), last variable fastest: (−−, −+, +−, ++).
    PotentialTable::new(vec![
        theta.exp(),
        (-theta).exp(),
        (-theta).exp(),
        theta.exp(),
    ])
}

fn ising_factors(
    n_vars: usize,
    edges: &[(usize, usize)],
    d_f: f64,
    d_o: f64,
    mode: Interaction,
    rng: &mut ChaCha8Rng,
) -> Vec<Factor> {
    let mut factors = Vec::with_capacity(n_vars + edges.len());
    for v in 0..n_vars {
        let theta = uniform(rng, -d_f, d_f);
        factors.push(Factor {
            id: v,
            scope: vec![v],
            table: field_table(theta),
        });
    }
    for &(u, v) in edges {
        let lo = match mode {
            Interaction::Mixed => -d_o,
            Interaction::Attractive => 0.0,
        };
        let theta = uniform(rng, lo, d_o);
        let id = factors.len();
        factors.push(Factor {
            id,
            scope: vec![u, v],
            table: coupling_table(theta),
        });
    }
    factors
}

/// Ising model on an `n × n` grid: one singleton field factor per site with
/// θ_i ~ U[−d_f, d_f], one pairwise factor per grid edge with
/// θ_ij ~ U[−d_o, d_o] (mixed) or U[0, d_o] (attractive).
pub fn ising_grid(n: usize, d_f: f64, d_o: f64, mode: Interaction, seed: u64) -> FactorGraph {
    assert!(n >= 2, "grid side must be at least 2");
    assert!(d_f >= 0.0 && d_o >= 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = |r: usize, c: usize| r * n + c;
    let mut edges = Vec::with_capacity(2 * n * (n - 1));
    for r in 0..n {
        for c in 0..n {
            if c + 1 < n {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < n {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    let vars: Vec<Variable> = (0..n * n)
        .map(|id| Variable { id, cardinality: 2 })
        .collect();
    let factors = ising_factors(n * n, &edges, d_f, d_o, mode, &mut rng);
    build_graph(vars, factors).expect("generated grid must validate")
}

/// Ising-style model on a `G(n, p)` Erdős–Rényi edge set. Every vertex keeps
/// its singleton field factor even when isolated.
pub fn random_graph(
    n: usize,
    p: f64,
    d_f: f64,
    d_o: f64,
    mode: Interaction,
    seed: u64,
) -> FactorGraph {
    assert!((0.0..=1.0).contains(&p), "edge probability must be in [0,1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if p >= 1.0 || (p > 0.0 && rng.random_range(0.0..1.0) < p) {
                edges.push((u, v));
            }
        }
    }
    let vars: Vec<Variable> = (0..n).map(|id| Variable { id, cardinality: 2 }).collect();
    let factors = ising_factors(n, &edges, d_f, d_o, mode, &mut rng);
    build_graph(vars, factors).expect("generated random graph must validate")
}

/// Uniform random recursive tree over `n` binary variables with random
/// positive tables: each unary/pairwise entry is `exp(U[-1, 1])`.
pub fn random_tree(n: usize, seed: u64) -> FactorGraph {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars: Vec<Variable> = (0..n).map(|id| Variable { id, cardinality: 2 }).collect();
    let mut factors = Vec::new();
    for v in 0..n {
        let t: Vec<f64> = (0..2).map(|_| uniform(&mut rng, -1.0, 1.0).exp()).collect();
        factors.push(Factor {
            id: v,
            scope: vec![v],
            table: PotentialTable::new(t),
        });
    }
    for v in 1..n {
        let parent = rng.random_range(0..v);
        let t: Vec<f64> = (0..4).map(|_| uniform(&mut rng, -1.0, 1.0).exp()).collect();
        let id = factors.len();
        factors.push(Factor {
            id,
            scope: vec![parent, v],
            table: PotentialTable::new(t),
        });
    }
    build_graph(vars, factors).expect("generated tree must validate")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts_match_structure() {
        let g = ising_grid(8, 1.0, 1.0, Interaction::Mixed, 7);
        assert_eq!(g.num_variables(), 64);
        let pairwise = g.factors().iter().filter(|f| f.scope.len() == 2).count();
        let singleton = g.factors().iter().filter(|f| f.scope.len() == 1).count();
        assert_eq!(pairwise, 112); // 2·8·7 grid edges
        assert_eq!(singleton, 64);
    }

    #[test]
    fn zero_interaction_gives_unit_pairwise_tables() {
        let g = ising_grid(3, 0.5, 0.0, Interaction::Mixed, 3);
        for f in g.factors().iter().filter(|f| f.scope.len() == 2) {
            for &v in f.table.values() {
                assert_eq!(v, 1.0);
            }
        }
    }

    #[test]
    fn attractive_couplings_are_nonnegative() {
        let g = ising_grid(4, 1.0, 2.0, Interaction::Attractive, 11);
        for f in g.factors().iter().filter(|f| f.scope.len() == 2) {
            // θ ≥ 0 means table is (e^θ, e^−θ, e^−θ, e^θ) with e^θ ≥ 1.
            assert!(f.table.values()[0] >= 1.0 - 1e-15);
            assert!(f.table.values()[1] <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn random_graph_edge_extremes() {
        let g0 = random_graph(10, 0.0, 1.0, 1.0, Interaction::Mixed, 1);
        assert_eq!(g0.num_factors(), 10);
        let g1 = random_graph(10, 1.0, 1.0, 1.0, Interaction::Mixed, 1);
        assert_eq!(g1.num_factors(), 10 + 45);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = random_graph(10, 0.5, 1.0, 2.0, Interaction::Mixed, 99);
        let b = random_graph(10, 0.5, 1.0, 2.0, Interaction::Mixed, 99);
        assert_eq!(a.num_factors(), b.num_factors());
        for (fa, fb) in a.factors().iter().zip(b.factors()) {
            assert_eq!(fa.scope, fb.scope);
            assert_eq!(fa.table.values(), fb.table.values());
        }
    }

    #[test]
    fn random_tree_has_tree_shape() {
        let g = random_tree(12, 5);
        let pairwise = g.factors().iter().filter(|f| f.scope.len() == 2).count();
        assert_eq!(pairwise, 11);
    }
}
