//! Tree-reweighted counting targets via the matrix-tree theorem.
//!
//! For a connected pairwise variable graph, the target `c̄_α` of a pairwise
//! factor is the probability that its edge appears in a uniformly random
//! spanning tree. By Kirchhoff's theorem that probability equals the
//! effective resistance of the edge in the unit-conductance network, which
//! we compute from grounded-Laplacian solves. Singleton factors are "in
//! every tree" and get target 1.

use nalgebra::{DMatrix, DVector};

use super::CountingError;
use crate::graph::FactorGraph;

/// Returns one target `c̄_α` per factor: the spanning-tree edge appearance
/// probability for pairwise factors and 1 for singleton factors.
pub fn trw_pairwise_counting(graph: &FactorGraph) -> Result<Vec<f64>, CountingError> {
    let n = graph.num_variables();
    let mut edges: Vec<(usize, usize, usize)> = Vec::new(); // (factor, u, v)
    for f in graph.factors() {
        match f.scope.len() {
            1 => {}
            2 => edges.push((f.id, f.scope[0], f.scope[1])),
            _ => return Err(CountingError::NotPairwise(f.id)),
        }
    }

    // Connectivity of the pairwise variable graph.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(_, u, v) in &edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    if count != n {
        return Err(CountingError::Disconnected);
    }

    let mut targets = vec![1.0; graph.num_factors()];
    if edges.is_empty() {
        return Ok(targets); // single variable, unary factors only
    }

    // Grounded Laplacian (variable 0 removed) and its Cholesky factor.
    let mut lap = DMatrix::<f64>::zeros(n - 1, n - 1);
    for &(_, u, v) in &edges {
        if u > 0 {
            lap[(u - 1, u - 1)] += 1.0;
        }
        if v > 0 {
            lap[(v - 1, v - 1)] += 1.0;
        }
        if u > 0 && v > 0 {
            lap[(u - 1, v - 1)] -= 1.0;
            lap[(v - 1, u - 1)] -= 1.0;
        }
    }
    let chol = lap
        .cholesky()
        .ok_or(CountingError::Disconnected)?; // SPD for connected graphs

    for &(a, u, v) in &edges {
        let mut rhs = DVector::<f64>::zeros(n - 1);
        if u > 0 {
            rhs[u - 1] = 1.0;
        }
        if v > 0 {
            rhs[v - 1] = -1.0;
        }
        let x = chol.solve(&rhs);
        let r_eff = rhs.dot(&x);
        targets[a] = r_eff.clamp(0.0, 1.0);
    }
    Ok(targets)
}

#[cfg(test)]
mod tests {
    use super::super::test_graphs::*;
    use super::*;
    use crate::graph::{build_graph, random_graph, Interaction};

    /// Brute-force oracle: fraction of spanning trees containing each edge,
    /// by enumerating all (n-1)-subsets of edges and testing connectivity.
    fn enumerate_edge_probabilities(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
        fn is_spanning_tree(n: usize, chosen: &[(usize, usize)]) -> bool {
            if chosen.len() != n - 1 {
                return false;
            }
            let mut parent: Vec<usize> = (0..n).collect();
            fn find(parent: &mut Vec<usize>, x: usize) -> usize {
                if parent[x] != x {
                    let r = find(parent, parent[x]);
                    parent[x] = r;
                }
                parent[x]
            }
            for &(u, v) in chosen {
                let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                if ru == rv {
                    return false;
                }
                parent[ru] = rv;
            }
            true
        }
        let m = edges.len();
        let mut tree_count = 0u64;
        let mut contain = vec![0u64; m];
        // Iterate subsets via bitmask; fine for m ≤ 20.
        for mask in 0u32..(1 << m) {
            if mask.count_ones() as usize != n - 1 {
                continue;
            }
            let chosen: Vec<(usize, usize)> = (0..m)
                .filter(|&k| mask & (1 << k) != 0)
                .map(|k| edges[k])
                .collect();
            if is_spanning_tree(n, &chosen) {
                tree_count += 1;
                for k in 0..m {
                    if mask & (1 << k) != 0 {
                        contain[k] += 1;
                    }
                }
            }
        }
        contain
            .iter()
            .map(|&c| c as f64 / tree_count as f64)
            .collect()
    }

    #[test]
    fn triangle_edges_appear_in_two_thirds_of_trees() {
        let t = trw_pairwise_counting(&triangle()).unwrap();
        for &p in &t {
            assert!((p - 2.0 / 3.0).abs() <= 1e-12, "got {p}");
        }
    }

    #[test]
    fn k4_edges_appear_in_half_of_trees() {
        let t = trw_pairwise_counting(&k4()).unwrap();
        for &p in &t {
            assert!((p - 0.5).abs() <= 1e-12, "got {p}");
        }
    }

    #[test]
    fn tree_edges_always_appear() {
        let t = trw_pairwise_counting(&chain3()).unwrap();
        for &p in &t {
            assert!((p - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn singleton_factors_get_target_one() {
        let g = single_unary([3.0, 1.0]);
        assert_eq!(trw_pairwise_counting(&g).unwrap(), vec![1.0]);
    }

    #[test]
    fn matches_enumeration_on_random_connected_graphs() {
        let mut checked = 0;
        for seed in 0..40u64 {
            let g = random_graph(6, 0.55, 0.5, 0.5, Interaction::Mixed, seed);
            let t = match trw_pairwise_counting(&g) {
                Ok(t) => t,
                Err(CountingError::Disconnected) => continue,
                Err(e) => panic!("unexpected error {e}"),
            };
            let edges: Vec<(usize, usize)> = g
                .factors()
                .iter()
                .filter(|f| f.scope.len() == 2)
                .map(|f| (f.scope[0], f.scope[1]))
                .collect();
            let oracle = enumerate_edge_probabilities(6, &edges);
            let mut k = 0;
            let mut total = 0.0;
            for f in g.factors() {
                if f.scope.len() == 2 {
                    assert!(
                        (t[f.id] - oracle[k]).abs() <= 1e-12,
                        "edge {k}: {} vs {}",
                        t[f.id],
                        oracle[k]
                    );
                    total += t[f.id];
                    k += 1;
                }
            }
            // Expected number of edges of a spanning tree.
            assert!((total - 5.0).abs() <= 1e-10);
            checked += 1;
        }
        assert!(checked >= 10, "too few connected samples: {checked}");
    }

    #[test]
    fn arity_three_is_rejected() {
        use crate::graph::{Factor, PotentialTable};
        let g = build_graph(
            binary_vars(3),
            vec![Factor {
                id: 0,
                scope: vec![0, 1, 2],
                table: PotentialTable::new(vec![1.0; 8]),
            }],
        )
        .unwrap();
        assert_eq!(
            trw_pairwise_counting(&g).unwrap_err(),
            CountingError::NotPairwise(0)
        );
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let g = build_graph(
            binary_vars(4),
            vec![pairwise(0, 0, 1), pairwise(1, 2, 3)],
        )
        .unwrap();
        assert_eq!(
            trw_pairwise_counting(&g).unwrap_err(),
            CountingError::Disconnected
        );
    }
}
