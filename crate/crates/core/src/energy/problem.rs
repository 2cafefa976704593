//! Mapping of the free energy onto the generic block engine.
//!
//! The optimization vector is the concatenation of all factor belief tables
//! (variable beliefs are eliminated through the agreement constraints). With
//! `f(b) = Σ_α (⟨E_α, b_α⟩ + c_α Σ b_α ln b_α)`, block `i` carries
//!
//! ```text
//! h_iα(b_α) = (c_i/|N(i)| − c_iα) Σ_{x_i} b_α(x_i) ln b_α(x_i)
//!             + c_iα Σ b_α ln b_α
//! ```
//!
//! for each α ∈ N(i), over the domain where every factor table is
//! normalized and the marginals onto `x_i` agree across N(i). Folding the
//! normalization of *all* factors into every block domain leaves the
//! optimization problem unchanged and keeps every block argmin bounded; the
//! off-block coordinates then contribute a constant per table to `λ_i`,
//! which cancels out of all belief quantities.
//!
//! The block argmin has a two-stage closed form. With `κ_α = s·c_α + c_iα`
//! and `κ_i = c_i + s·Σ_{α∈N(i)} c_α`:
//!
//! ```text
//! φ_α  = (ψ_α^s · e^{−μ_α})^{1/κ_α}
//! M_α(x_i) = Σ_{x_α \ x_i} φ_α(x_α)
//! ρ(x_i) ∝ Π_{α∈N(i)} M_α(x_i)^{κ_α/κ_i}
//! b_α(x_α) = ρ(x_i) · φ_α(x_α) / M_α(x_i)
//! ```
//!
//! i.e. per-conditional entropy minimization followed by a geometric
//! combination of the per-factor messages for the shared marginal.

use super::FreeEnergySpec;
use crate::engine::{BlockProblem, OracleError};
use crate::numeric::{ln_clamped, logsumexp, xlogx_sum, LOG_FLOOR};

/// Free-energy instantiation of [`BlockProblem`]; one block per variable.
pub struct FreeEnergyProblem<'a> {
    spec: &'a FreeEnergySpec,
    offsets: Vec<usize>,
    dim: usize,
}

/// Builds the engine-facing view of a spec.
pub fn build_block_problem(spec: &FreeEnergySpec) -> FreeEnergyProblem<'_> {
    let mut offsets = Vec::with_capacity(spec.graph().num_factors());
    let mut dim = 0;
    for f in spec.graph().factors() {
        offsets.push(dim);
        dim += f.table.len();
    }
    FreeEnergyProblem { spec, offsets, dim }
}

impl<'a> FreeEnergyProblem<'a> {
    pub fn spec(&self) -> &'a FreeEnergySpec {
        self.spec
    }

    /// Start offset of factor `a`'s table within the flat vector.
    pub fn offset(&self, a: usize) -> usize {
        self.offsets[a]
    }

    pub fn factor_slice<'b>(&self, b: &'b [f64], a: usize) -> &'b [f64] {
        let len = self.spec.graph().factor(a).table.len();
        &b[self.offsets[a]..self.offsets[a] + len]
    }

    fn adjacent_mask(&self, block: usize) -> Vec<bool> {
        let mut mask = vec![false; self.spec.graph().num_factors()];
        for &(a, _) in self.spec.graph().factors_of(block) {
            mask[a] = true;
        }
        mask
    }

    /// States of the block variable along factor `a`'s table.
    fn block_states(&self, a: usize, block: usize) -> (usize, usize, usize) {
        let g = self.spec.graph();
        let pos = g.scope_position(a, block).expect("block variable in scope");
        let strides = g.factor_strides(a);
        (pos, strides[pos], g.cardinality(block))
    }
}

impl BlockProblem for FreeEnergyProblem<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_blocks(&self) -> usize {
        self.spec.graph().num_variables()
    }

    fn f_value(&self, b: &[f64]) -> f64 {
        let g = self.spec.graph();
        let mut value = 0.0;
        for a in 0..g.num_factors() {
            let table = self.factor_slice(b, a);
            let energy = self.spec.energies(a);
            value += table.iter().zip(energy).map(|(&x, &e)| x * e).sum::<f64>();
            value += self.spec.counting().c_fac[a] * xlogx_sum(table);
        }
        value
    }

    fn f_grad(&self, b: &[f64], out: &mut [f64]) {
        let g = self.spec.graph();
        for a in 0..g.num_factors() {
            let offset = self.offsets[a];
            let energy = self.spec.energies(a);
            let c = self.spec.counting().c_fac[a];
            for (t, &e) in energy.iter().enumerate() {
                out[offset + t] = e + c * (1.0 + ln_clamped(b[offset + t]));
            }
        }
    }

    fn block_argmin(&self, block: usize, s: f64, mu: &[f64]) -> Result<Vec<f64>, OracleError> {
        let g = self.spec.graph();
        let counting = self.spec.counting();
        if mu.len() != self.dim {
            return Err(OracleError(format!(
                "mu has dimension {}, expected {}",
                mu.len(),
                self.dim
            )));
        }
        let mut out = vec![0.0; self.dim];
        let mask = self.adjacent_mask(block);

        // Factors outside the block: independent simplex minimization of
        // s·f_β(b_β) + bᵀμ_β.
        for a in 0..g.num_factors() {
            if mask[a] {
                continue;
            }
            let offset = self.offsets[a];
            let len = g.factor(a).table.len();
            let kappa = s * counting.c_fac[a];
            let log_psi = self.spec.log_psi(a);
            let mut log_q: Vec<f64> = (0..len)
                .map(|t| (s * log_psi[t] - mu[offset + t]) / kappa)
                .collect();
            let z = logsumexp(&log_q);
            for v in log_q.iter_mut() {
                *v -= z;
            }
            for (t, &lq) in log_q.iter().enumerate() {
                out[offset + t] = lq.max(LOG_FLOOR).exp();
            }
        }

        // Block factors: two-stage closed form.
        let card = g.cardinality(block);
        let kappa_i = counting.c_var[block]
            + s * g
                .factors_of(block)
                .iter()
                .map(|&(a, _)| counting.c_fac[a])
                .sum::<f64>();
        let mut log_rho = vec![0.0; card];
        let mut per_factor: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new(); // (a, log_phi, log_m)
        for &(a, e) in g.factors_of(block) {
            let offset = self.offsets[a];
            let len = g.factor(a).table.len();
            let kappa = s * counting.c_fac[a] + counting.c_inc[e];
            let log_psi = self.spec.log_psi(a);
            let log_phi: Vec<f64> = (0..len)
                .map(|t| (s * log_psi[t] - mu[offset + t]) / kappa)
                .collect();
            let (_, stride, _) = self.block_states(a, block);
            let mut buckets: Vec<Vec<f64>> = vec![Vec::with_capacity(len / card); card];
            for (t, &v) in log_phi.iter().enumerate() {
                buckets[(t / stride) % card].push(v);
            }
            let log_m: Vec<f64> = buckets.iter().map(|bk| logsumexp(bk)).collect();
            for (x, &lm) in log_m.iter().enumerate() {
                log_rho[x] += kappa / kappa_i * lm;
            }
            per_factor.push((a, log_phi, log_m));
        }
        let z = logsumexp(&log_rho);
        for v in log_rho.iter_mut() {
            *v -= z;
        }
        for (a, log_phi, log_m) in per_factor {
            let offset = self.offsets[a];
            let (_, stride, _) = self.block_states(a, block);
            for (t, &lp) in log_phi.iter().enumerate() {
                let x = (t / stride) % card;
                out[offset + t] = (log_rho[x] + lp - log_m[x]).max(LOG_FLOOR).exp();
            }
        }
        Ok(out)
    }

    fn block_h_value(&self, block: usize, b: &[f64]) -> f64 {
        let g = self.spec.graph();
        let counting = self.spec.counting();
        let degree = g.degree(block) as f64;
        let mut value = 0.0;
        for &(a, e) in g.factors_of(block) {
            let table = self.factor_slice(b, a);
            let pos = g.scope_position(a, block).expect("in scope");
            let marginal = g.table_marginal(a, pos, table);
            let c_edge = counting.c_inc[e];
            value += (counting.c_var[block] / degree - c_edge) * xlogx_sum(&marginal);
            value += c_edge * xlogx_sum(table);
        }
        value
    }

    fn block_domain_contains(&self, block: usize, b: &[f64]) -> bool {
        const TOL: f64 = 1e-9;
        let g = self.spec.graph();
        for a in 0..g.num_factors() {
            let sum: f64 = self.factor_slice(b, a).iter().sum();
            if (sum - 1.0).abs() > TOL {
                return false;
            }
        }
        let mut reference: Option<Vec<f64>> = None;
        for &(a, _) in g.factors_of(block) {
            let pos = g.scope_position(a, block).expect("in scope");
            let marginal = g.table_marginal(a, pos, self.factor_slice(b, a));
            match &reference {
                None => reference = Some(marginal),
                Some(r) => {
                    if r.iter().zip(&marginal).any(|(x, y)| (x - y).abs() > TOL) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn block_conjugate(&self, block: usize, lambda: &[f64]) -> Option<f64> {
        let g = self.spec.graph();
        let counting = self.spec.counting();
        let mask = self.adjacent_mask(block);
        let card = g.cardinality(block);
        // h_i*(λ) = outer softmax over the per-state sums of inner softmaxes,
        // plus the simplex support of the off-block tables.
        let mut s_per_state = vec![0.0; card];
        for &(a, e) in g.factors_of(block) {
            let table = self.factor_slice(lambda, a);
            let (_, stride, _) = self.block_states(a, block);
            let c_edge = counting.c_inc[e];
            let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); card];
            for (t, &v) in table.iter().enumerate() {
                buckets[(t / stride) % card].push(v);
            }
            for (x, bucket) in buckets.iter().enumerate() {
                let w = if c_edge > 0.0 {
                    let scaled: Vec<f64> = bucket.iter().map(|&v| v / c_edge).collect();
                    c_edge * logsumexp(&scaled)
                } else {
                    bucket.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
                s_per_state[x] += w;
            }
        }
        let c_var = counting.c_var[block];
        let mut value = if c_var > 0.0 {
            let scaled: Vec<f64> = s_per_state.iter().map(|&v| v / c_var).collect();
            c_var * logsumexp(&scaled)
        } else {
            s_per_state.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        for a in 0..g.num_factors() {
            if !mask[a] {
                value += self
                    .factor_slice(lambda, a)
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        Some(value)
    }

    fn f_linear_min(&self, v: &[f64]) -> Option<(Vec<f64>, f64)> {
        let g = self.spec.graph();
        let counting = self.spec.counting();
        let mut b = vec![0.0; self.dim];
        let mut value = 0.0;
        for a in 0..g.num_factors() {
            let offset = self.offsets[a];
            let len = g.factor(a).table.len();
            let c = counting.c_fac[a];
            let log_psi = self.spec.log_psi(a);
            let log_t: Vec<f64> = (0..len)
                .map(|t| (log_psi[t] - v[offset + t]) / c - 1.0)
                .collect();
            for (t, &lt) in log_t.iter().enumerate() {
                b[offset + t] = lt.clamp(LOG_FLOOR, -LOG_FLOOR).exp();
            }
            value -= c * logsumexp(&log_t).exp();
        }
        Some((b, value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::test_graphs::single_unary;
    use crate::counting::CountingNumbers;
    use crate::engine::{run_parallel, run_sequential, EngineOptions};
    use approx::assert_relative_eq;

    fn single_factor_spec(c_fac: f64) -> FreeEnergySpec {
        let g = single_unary([4.0, 1.0]);
        let counting = CountingNumbers {
            c_var: vec![0.0],
            c_fac: vec![c_fac],
            c_inc: vec![0.0],
        };
        FreeEnergySpec::new(g, counting).unwrap()
    }

    #[test]
    fn single_factor_block_argmin_closed_form() {
        // ψ = (4,1), c_α = 1 → b = ψ normalized = (0.8, 0.2).
        let spec = single_factor_spec(1.0);
        let p = build_block_problem(&spec);
        let b = p.block_argmin(0, 1.0, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(b[0], 0.8, epsilon = 1e-12);
        assert_relative_eq!(b[1], 0.2, epsilon = 1e-12);
        // c_α = 2 → b ∝ ψ^{1/2} = (2,1) → (2/3, 1/3).
        let spec = single_factor_spec(2.0);
        let p = build_block_problem(&spec);
        let b = p.block_argmin(0, 1.0, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(b[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(b[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn agreement_violation_is_outside_domain() {
        use crate::counting::test_graphs::chain3;
        let counting = CountingNumbers::default_admissible(&chain3());
        let spec = FreeEnergySpec::new(chain3(), counting).unwrap();
        let p = build_block_problem(&spec);
        // Factor 0 says x1 is uniform; factor 1 says x1 is (0.9, 0.1).
        let mut b = vec![0.25; 8];
        b[4] = 0.45;
        b[5] = 0.45;
        b[6] = 0.05;
        b[7] = 0.05;
        assert!(!p.block_domain_contains(1, &b));
        // The block's own argmin is back inside.
        let argmin = p.block_argmin(1, 1.0, &vec![0.0; 8]).unwrap();
        assert!(p.block_domain_contains(1, &argmin));
    }

    #[test]
    fn engine_on_single_factor_reaches_closed_form() {
        let spec = single_factor_spec(1.0);
        let p = build_block_problem(&spec);
        let seq = run_sequential(&p, &EngineOptions::default()).unwrap();
        assert_relative_eq!(seq.b[0], 0.8, epsilon = 1e-10);
        let par = run_parallel(&p, &EngineOptions::default()).unwrap();
        assert_relative_eq!(par.b[0], 0.8, epsilon = 1e-8);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use crate::counting::test_graphs::chain3;
        use rand::Rng;
        use rand::SeedableRng;
        let counting = CountingNumbers::default_admissible(&chain3());
        let spec = FreeEnergySpec::new(chain3(), counting).unwrap();
        let p = build_block_problem(&spec);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let b: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(0.05..1.0)).collect();
            let mut grad = vec![0.0; p.dim()];
            p.f_grad(&b, &mut grad);
            let k = rng.random_range(0..p.dim());
            let h = 1e-6;
            let mut bp = b.clone();
            bp[k] += h;
            let mut bm = b.clone();
            bm[k] -= h;
            let fd = (p.f_value(&bp) - p.f_value(&bm)) / (2.0 * h);
            let scale = grad[k].abs().max(1.0);
            assert!(
                (grad[k] - fd).abs() / scale <= 1e-5,
                "coordinate {k}: {} vs {}",
                grad[k],
                fd
            );
        }
    }
}
