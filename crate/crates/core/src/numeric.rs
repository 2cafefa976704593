//! Small numeric helpers shared across the solvers.

/// `ln Σ exp(v)` computed with the usual max shift. Returns `-inf` for an
/// empty slice.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Turns a slice of log weights into a normalized probability table.
pub fn normalize_log(log_weights: &[f64]) -> Vec<f64> {
    let z = logsumexp(log_weights);
    log_weights.iter().map(|w| (w - z).exp()).collect()
}

/// Subtracts the max entry so the largest log value becomes 0
/// (i.e. the largest linear entry becomes 1).
pub fn max_normalize_log(log_table: &mut [f64]) {
    let max = log_table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in log_table.iter_mut() {
        *v -= max;
    }
}

/// Shannon entropy `-Σ p ln p` in nats with the `0 ln 0 = 0` convention.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// `Σ p ln p` with the `0 ln 0 = 0` convention (negative entropy).
pub fn xlogx_sum(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum()
}

/// Max-norm distance between two equally sized slices.
pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `ln x` clamped below so that vanishing probabilities produce a large
/// negative number instead of `-inf`.
pub fn ln_clamped(x: f64) -> f64 {
    if x > 0.0 {
        x.ln().max(LOG_FLOOR)
    } else {
        LOG_FLOOR
    }
}

/// Lower clamp used for log beliefs; `exp(LOG_FLOOR)` is still a normal f64.
pub const LOG_FLOOR: f64 = -700.0;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn logsumexp_matches_direct_sum() {
        let v = [0.1f64, -2.0, 3.5];
        let direct: f64 = v.iter().map(|x| f64::exp(*x)).sum();
        assert_relative_eq!(logsumexp(&v), direct.ln(), epsilon = 1e-14);
    }

    #[test]
    fn logsumexp_handles_large_magnitudes() {
        let v = [1000.0, 1000.0];
        assert_relative_eq!(logsumexp(&v), 1000.0 + 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_of_uniform() {
        assert_relative_eq!(entropy(&[0.5, 0.5]), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
    }

    #[test]
    fn normalize_log_sums_to_one() {
        let p = normalize_log(&[-800.0, -801.0, -802.0]);
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}
