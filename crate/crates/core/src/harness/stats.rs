//! Rank statistics used by the trend checks.

/// Average ranks (1-based) with ties sharing their mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("no NaNs"));
    let mut out = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut j = k;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[k]] {
            j += 1;
        }
        let mean_rank = (k + j) as f64 / 2.0 + 1.0;
        for &idx in &order[k..=j] {
            out[idx] = mean_rank;
        }
        k = j + 1;
    }
    out
}

/// Spearman rank correlation of two equally long samples.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mean) * (b - mean);
        var_x += (a - mean) * (a - mean);
        var_y += (b - mean) * (b - mean);
    }
    num / (var_x.sqrt() * var_y.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_monotone_gives_one() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [0.1, 0.5, 0.7, 2.0];
        assert!((spearman(&x, &y) - 1.0).abs() < 1e-12);
        let reversed = [2.0, 0.7, 0.5, 0.1];
        assert!((spearman(&x, &reversed) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_average() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 1.0, 2.0, 2.0];
        let rho = spearman(&x, &y);
        assert!(rho > 0.8 && rho <= 1.0);
    }
}
