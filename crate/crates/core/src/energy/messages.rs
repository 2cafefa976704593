//! Closed-form message-passing updates for the convex free energy.
//!
//! Messages are stored in the log domain and max-normalized after every
//! update (the largest entry of each linear-domain table is 1); every belief
//! quantity is invariant to per-table rescaling, so normalization only
//! guards against under/overflow. The variable-to-factor message `n_{i→γ}`
//! encodes the block multiplier through `n_{i→γ} = e^{−λ_iγ}`, which is what
//! makes one full sweep coincide with one pass of the sequential engine.
//!
//! For variable `i` under scale `s` (1 sequential, `1/n` parallel) the
//! update reads, with `κ_iγ = s·c_γ + c_iγ` and `κ_i = c_i + s Σ_γ c_γ`:
//!
//! ```text
//! m_{γ→i}(x_i) = Σ_{z_γ \ x_i} (ψ_γ(z)^s · I_γ(z))^{1/κ_iγ}
//! b*(x_i)     ∝ Π_{γ∈N(i)} m_{γ→i}(x_i)^{κ_iγ/κ_i}
//! b*_γ(x_γ)   = b*(x_i) · (ψ_γ^s I_γ)^{1/κ_iγ} / m_{γ→i}(x_i)
//! n_{i→γ}(x_γ) ∝ I_γ(x_γ)^{-1} ψ_γ(x_γ)^{-s} b*_γ(x_γ)^{s·c_γ}
//! ```
//!
//! where `I_γ = Π_{j∈N(γ)\i} n_{j→γ}` in the sequential schedule and
//! `I_γ = Π_{j∈N(γ)} n_{j→γ}^{1/n} / n_{i→γ}` in the parallel one (the
//! recentered multiplier bookkeeping of the parallel engine).

use rayon::prelude::*;

use super::{EnergyError, FreeEnergySpec};
use crate::beliefs::BeliefSet;
use crate::graph::FactorGraph;
use crate::numeric::{logsumexp, max_normalize_log, LOG_FLOOR};

/// Factor-to-variable tables `m` and variable-to-factor tables `n`, indexed
/// by graph incidence, stored as logs.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    log_n: Vec<Vec<f64>>,
    log_m: Vec<Vec<f64>>,
}

impl MessageSet {
    /// All-ones messages (zero logs), the standard initialization.
    pub fn uniform(graph: &FactorGraph) -> Self {
        let log_n = graph
            .incidences()
            .iter()
            .map(|&(_, a)| vec![0.0; graph.factor(a).table.len()])
            .collect();
        let log_m = graph
            .incidences()
            .iter()
            .map(|&(i, _)| vec![0.0; graph.cardinality(i)])
            .collect();
        MessageSet { log_n, log_m }
    }

    pub fn log_n(&self, incidence: usize) -> &[f64] {
        &self.log_n[incidence]
    }

    pub fn log_m(&self, incidence: usize) -> &[f64] {
        &self.log_m[incidence]
    }

    /// Linear-domain variable-to-factor table `n_{i→γ}(x_γ)`.
    pub fn variable_to_factor(&self, incidence: usize) -> Vec<f64> {
        self.log_n[incidence].iter().map(|&v| v.exp()).collect()
    }

    /// Linear-domain factor-to-variable table `m_{γ→i}(x_i)`.
    pub fn factor_to_variable(&self, incidence: usize) -> Vec<f64> {
        self.log_m[incidence].iter().map(|&v| v.exp()).collect()
    }

    /// Multiplies one `n` table by a positive constant (beliefs must not
    /// care; used by the rescaling-invariance tests).
    pub fn rescale_variable_to_factor(&mut self, incidence: usize, factor: f64) {
        assert!(factor > 0.0);
        for v in self.log_n[incidence].iter_mut() {
            *v += factor.ln();
        }
    }

    fn check_finite(&self) -> Result<(), EnergyError> {
        for (e, t) in self.log_n.iter().enumerate() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(EnergyError::NonFiniteMessage { incidence: e });
            }
        }
        Ok(())
    }
}

/// Result of updating one variable block in message form.
struct VarUpdate {
    /// Raw (unnormalized) `log m_{γ→i}` per incident factor.
    log_m_raw: Vec<Vec<f64>>,
    /// Normalized shared marginal `log b*(x_i)`.
    log_rho: Vec<f64>,
    /// Per incident factor, the normalized block belief `log b*_γ`.
    log_b: Vec<Vec<f64>>,
}

/// Core of the closed-form update for one variable. `log_in[k]` is the
/// incoming log product `ln I_γ` for the k-th incident factor.
fn var_block_update(spec: &FreeEnergySpec, i: usize, s: f64, log_in: &[Vec<f64>]) -> VarUpdate {
    let g = spec.graph();
    let counting = spec.counting();
    let card = g.cardinality(i);
    let kappa_i = counting.c_var[i]
        + s * g
            .factors_of(i)
            .iter()
            .map(|&(a, _)| counting.c_fac[a])
            .sum::<f64>();

    let mut log_m_raw = Vec::with_capacity(log_in.len());
    let mut log_phi_all = Vec::with_capacity(log_in.len());
    let mut log_rho = vec![0.0; card];
    for (k, &(a, e)) in g.factors_of(i).iter().enumerate() {
        let kappa = s * counting.c_fac[a] + counting.c_inc[e];
        let log_psi = spec.log_psi(a);
        let log_phi: Vec<f64> = log_psi
            .iter()
            .zip(&log_in[k])
            .map(|(&lp, &li)| (s * lp + li) / kappa)
            .collect();
        let pos = g.scope_position(a, i).expect("incidence in scope");
        let stride = g.factor_strides(a)[pos];
        let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); card];
        for (t, &v) in log_phi.iter().enumerate() {
            buckets[(t / stride) % card].push(v);
        }
        let log_m: Vec<f64> = buckets.iter().map(|b| logsumexp(b)).collect();
        for (x, &lm) in log_m.iter().enumerate() {
            log_rho[x] += kappa / kappa_i * lm;
        }
        log_m_raw.push(log_m);
        log_phi_all.push(log_phi);
    }
    let z = logsumexp(&log_rho);
    for v in log_rho.iter_mut() {
        *v -= z;
    }
    let mut log_b = Vec::with_capacity(log_in.len());
    for (k, &(a, _)) in g.factors_of(i).iter().enumerate() {
        let pos = g.scope_position(a, i).expect("incidence in scope");
        let stride = g.factor_strides(a)[pos];
        let table: Vec<f64> = log_phi_all[k]
            .iter()
            .enumerate()
            .map(|(t, &lp)| {
                let x = (t / stride) % card;
                (log_rho[x] + lp - log_m_raw[k][x]).max(LOG_FLOOR)
            })
            .collect();
        log_b.push(table);
    }
    VarUpdate {
        log_m_raw,
        log_rho,
        log_b,
    }
}

/// New `log n_{i→γ}` from the block beliefs: `−ln I_γ − s lnψ + s c_γ ln b`.
fn updated_log_n(
    spec: &FreeEnergySpec,
    a: usize,
    s: f64,
    log_in: &[f64],
    log_b: &[f64],
) -> Vec<f64> {
    let c = spec.counting().c_fac[a];
    let log_psi = spec.log_psi(a);
    let mut table: Vec<f64> = (0..log_psi.len())
        .map(|t| -log_in[t] - s * log_psi[t] + s * c * log_b[t])
        .collect();
    max_normalize_log(&mut table);
    table
}

/// One full sequential pass `i = 0..n−1`; updates are visible to later
/// variables within the same sweep.
pub fn sequential_sweep(
    spec: &FreeEnergySpec,
    messages: &MessageSet,
) -> Result<MessageSet, EnergyError> {
    let g = spec.graph();
    let mut out = messages.clone();
    for i in 0..g.num_variables() {
        let log_in = sequential_log_in(g, &out, i);
        let upd = var_block_update(spec, i, 1.0, &log_in);
        for (k, &(a, e)) in g.factors_of(i).iter().enumerate() {
            out.log_n[e] = updated_log_n(spec, a, 1.0, &log_in[k], &upd.log_b[k]);
            let mut log_m = upd.log_m_raw[k].clone();
            max_normalize_log(&mut log_m);
            out.log_m[e] = log_m;
        }
    }
    out.check_finite()?;
    Ok(out)
}

/// One synchronous parallel round; every variable reads the previous
/// round's messages only. Per-variable updates run concurrently and are
/// committed in index order.
pub fn parallel_step(
    spec: &FreeEnergySpec,
    messages: &MessageSet,
) -> Result<MessageSet, EnergyError> {
    let g = spec.graph();
    let n = g.num_variables();
    let s = 1.0 / n as f64;
    let updates: Vec<Vec<(usize, Vec<f64>, Vec<f64>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let log_in = parallel_log_in(g, messages, i, s);
            let upd = var_block_update(spec, i, s, &log_in);
            g.factors_of(i)
                .iter()
                .enumerate()
                .map(|(k, &(a, e))| {
                    let log_n = updated_log_n(spec, a, s, &log_in[k], &upd.log_b[k]);
                    let mut log_m = upd.log_m_raw[k].clone();
                    max_normalize_log(&mut log_m);
                    (e, log_n, log_m)
                })
                .collect()
        })
        .collect();
    let mut out = messages.clone();
    for per_var in updates {
        for (e, log_n, log_m) in per_var {
            out.log_n[e] = log_n;
            out.log_m[e] = log_m;
        }
    }
    out.check_finite()?;
    Ok(out)
}

/// `ln I_γ = Σ_{j∈N(γ)\i} ln n_{j→γ}` for each factor incident to `i`.
fn sequential_log_in(g: &FactorGraph, messages: &MessageSet, i: usize) -> Vec<Vec<f64>> {
    g.factors_of(i)
        .iter()
        .map(|&(a, _)| {
            let len = g.factor(a).table.len();
            let mut acc = vec![0.0; len];
            for &e2 in g.factor_incidences(a) {
                let (j, _) = g.incidences()[e2];
                if j != i {
                    for (s, &v) in acc.iter_mut().zip(&messages.log_n[e2]) {
                        *s += v;
                    }
                }
            }
            acc
        })
        .collect()
}

/// `ln I_γ = (1/n) Σ_{j∈N(γ)} ln n_{j→γ} − ln n_{i→γ}` (parallel mode).
fn parallel_log_in(g: &FactorGraph, messages: &MessageSet, i: usize, s: f64) -> Vec<Vec<f64>> {
    g.factors_of(i)
        .iter()
        .map(|&(a, e)| {
            let len = g.factor(a).table.len();
            let mut acc = vec![0.0; len];
            for &e2 in g.factor_incidences(a) {
                for (t, &v) in messages.log_n[e2].iter().enumerate() {
                    acc[t] += s * v;
                }
            }
            for (t, &v) in messages.log_n[e].iter().enumerate() {
                acc[t] -= v;
            }
            acc
        })
        .collect()
}

/// Extracts normalized beliefs from a message set.
///
/// Variable beliefs come from the geometric product of fresh `m` messages;
/// factor beliefs come from the block belief of the highest-index incident
/// variable, i.e. the factor's last writer in a sequential sweep. At a fixed
/// point these coincide with the dual-stationary beliefs of the engine.
pub fn beliefs_from_messages(spec: &FreeEnergySpec, messages: &MessageSet) -> BeliefSet {
    let g = spec.graph();
    let mut var = vec![Vec::new(); g.num_variables()];
    let mut fac = vec![Vec::new(); g.num_factors()];
    for i in 0..g.num_variables() {
        let log_in = sequential_log_in(g, messages, i);
        let upd = var_block_update(spec, i, 1.0, &log_in);
        let mut table: Vec<f64> = upd.log_rho.iter().map(|&v| v.exp()).collect();
        let sum: f64 = table.iter().sum();
        for v in table.iter_mut() {
            *v /= sum;
        }
        var[i] = table;
        for (k, &(a, _)) in g.factors_of(i).iter().enumerate() {
            let owner = g.factor(a).scope.iter().copied().max().expect("nonempty");
            if owner == i {
                let mut table: Vec<f64> = upd.log_b[k].iter().map(|&v| v.exp()).collect();
                let sum: f64 = table.iter().sum();
                for v in table.iter_mut() {
                    *v /= sum;
                }
                fac[a] = table;
            }
        }
    }
    BeliefSet { var, fac }
}
