//! Norms, sparsity counts and best-k-term approximations of dense vectors.

/// `l1` norm.
pub fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// `lp` norm for `p >= 1`.
pub fn lp(x: &[f64], p: f64) -> f64 {
    assert!(p >= 1.0, "lp norm needs p >= 1");
    if p == 1.0 {
        return l1(x);
    }
    x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// `l_inf` norm.
pub fn linf(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Number of entries with magnitude above `tol`.
pub fn l0(x: &[f64], tol: f64) -> usize {
    x.iter().filter(|v| v.abs() > tol).count()
}

/// Indices of the `k` largest-magnitude entries, ties broken toward the
/// lower index so the selection is deterministic.
pub fn top_k_indices(x: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        x[b].abs()
            .partial_cmp(&x[a].abs())
            .expect("NaN in signal")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Best k-term approximation: `x` restricted to its `k` largest entries.
pub fn head_approximation(x: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in top_k_indices(x, k) {
        out[i] = x[i];
    }
    out
}

/// `x - y` pointwise.
pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_on_a_small_vector() {
        let x = [3.0, -4.0, 0.0];
        assert_eq!(l1(&x), 7.0);
        assert_eq!(lp(&x, 2.0), 5.0);
        assert_eq!(linf(&x), 4.0);
        assert_eq!(l0(&x, 0.0), 2.0 as usize);
    }

    #[test]
    fn top_k_prefers_lower_index_on_ties() {
        let x = [1.0, -2.0, 2.0, 1.0];
        assert_eq!(top_k_indices(&x, 2), vec![1, 2]);
        assert_eq!(top_k_indices(&x, 3), vec![0, 1, 2]);
    }

    #[test]
    fn head_approximation_zeroes_the_tail() {
        let x = [5.0, 1.0, -7.0, 2.0];
        assert_eq!(head_approximation(&x, 2), vec![5.0, 0.0, -7.0, 0.0]);
    }

    #[test]
    fn lp_matches_l1_at_p_one() {
        let x = [0.5, -1.5, 2.0];
        assert!((lp(&x, 1.0) - l1(&x)).abs() < 1e-15);
    }
}
