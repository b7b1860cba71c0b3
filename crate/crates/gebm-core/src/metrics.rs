//! Evaluation metrics with analytic ground truth.
//!
//! Everything here is deliberately independent of the tape machinery (plain
//! loops over slices), so these routines can serve as oracles *against* the
//! differentiable code paths rather than sharing bugs with them.

use alloc::vec::Vec;

use crate::math;
use crate::rkhs::gaussian_kernel;
use crate::rng::StreamRng;
use crate::tensor::Tensor;

/// KL divergence between diagonal Gaussians, summed over dimensions:
/// `½ Σ_d (σ₁²/σ₂² + (μ₂−μ₁)²/σ₂² − 1 + ln(σ₂²/σ₁²))`.
pub fn gaussian_kl(mu1: &[f64], var1: &[f64], mu2: &[f64], var2: &[f64]) -> f64 {
    assert_eq!(mu1.len(), var1.len());
    assert_eq!(mu1.len(), mu2.len());
    assert_eq!(mu1.len(), var2.len());
    let mut kl = 0.0;
    for i in 0..mu1.len() {
        assert!(var1[i] > 0.0 && var2[i] > 0.0, "variances must be positive");
        let dm = mu2[i] - mu1[i];
        kl += 0.5 * (var1[i] / var2[i] + dm * dm / var2[i] - 1.0 + math::ln(var2[i] / var1[i]));
    }
    kl
}

/// Unbiased squared maximum mean discrepancy with a Gaussian kernel
/// (diagonal terms excluded from the within-sample sums).
pub fn mmd2_unbiased(x: &Tensor, y: &Tensor, bandwidth: f64) -> f64 {
    let n = x.rows();
    let m = y.rows();
    assert!(n >= 2 && m >= 2, "mmd2 needs at least 2 rows per side");
    assert_eq!(x.cols(), y.cols(), "mmd2: dim mismatch");
    let mut kxx = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            kxx += gaussian_kernel(x.row_slice(i), x.row_slice(j), bandwidth);
        }
    }
    kxx *= 2.0 / (n * (n - 1)) as f64;
    let mut kyy = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            kyy += gaussian_kernel(y.row_slice(i), y.row_slice(j), bandwidth);
        }
    }
    kyy *= 2.0 / (m * (m - 1)) as f64;
    let mut kxy = 0.0;
    for i in 0..n {
        for j in 0..m {
            kxy += gaussian_kernel(x.row_slice(i), y.row_slice(j), bandwidth);
        }
    }
    kxy /= (n * m) as f64;
    kxx + kyy - 2.0 * kxy
}

/// Median pairwise distance of the pooled rows of `x` and `y` (the usual
/// bandwidth choice for two-sample MMD tests).
pub fn pooled_bandwidth(x: &Tensor, y: &Tensor) -> f64 {
    assert_eq!(x.cols(), y.cols());
    let mut pool = Tensor::zeros(x.rows() + y.rows(), x.cols());
    for r in 0..x.rows() {
        pool.row_slice_mut(r).copy_from_slice(x.row_slice(r));
    }
    for r in 0..y.rows() {
        pool.row_slice_mut(x.rows() + r).copy_from_slice(y.row_slice(r));
    }
    crate::rkhs::median_heuristic(&pool)
}

/// Result of a permutation two-sample test on the unbiased MMD².
#[derive(Debug, Clone, PartialEq)]
pub struct MmdTest {
    pub mmd2: f64,
    /// `(#{permuted ≥ observed} + 1) / (n_perms + 1)`.
    pub p_value: f64,
    pub perm_mean: f64,
    pub perm_stderr: f64,
    pub bandwidth: f64,
}

/// Two-sample MMD permutation test. Precomputes the pooled Gram matrix once
/// and re-labels rows `n_perms` times (Fisher–Yates on the pooled indices).
pub fn mmd_permutation_test(
    x: &Tensor,
    y: &Tensor,
    bandwidth: f64,
    n_perms: usize,
    seed: u64,
) -> MmdTest {
    assert!(n_perms >= 200, "permutation test needs at least 200 permutations");
    let n = x.rows();
    let m = y.rows();
    let total = n + m;
    // Pooled Gram matrix, flat row-major.
    let mut rows: Vec<&[f64]> = Vec::with_capacity(total);
    for i in 0..n {
        rows.push(x.row_slice(i));
    }
    for i in 0..m {
        rows.push(y.row_slice(i));
    }
    let mut gram = alloc::vec![0.0_f64; total * total];
    for i in 0..total {
        gram[i * total + i] = 1.0;
        for j in (i + 1)..total {
            let v = gaussian_kernel(rows[i], rows[j], bandwidth);
            gram[i * total + j] = v;
            gram[j * total + i] = v;
        }
    }
    let mmd_of = |idx: &[usize]| -> f64 {
        let (xs, ys) = idx.split_at(n);
        let mut kxx = 0.0;
        for (a, &i) in xs.iter().enumerate() {
            for &j in &xs[(a + 1)..] {
                kxx += gram[i * total + j];
            }
        }
        kxx *= 2.0 / (n * (n - 1)) as f64;
        let mut kyy = 0.0;
        for (a, &i) in ys.iter().enumerate() {
            for &j in &ys[(a + 1)..] {
                kyy += gram[i * total + j];
            }
        }
        kyy *= 2.0 / (m * (m - 1)) as f64;
        let mut kxy = 0.0;
        for &i in xs {
            for &j in ys {
                kxy += gram[i * total + j];
            }
        }
        kxy /= (n * m) as f64;
        kxx + kyy - 2.0 * kxy
    };

    let mut idx: Vec<usize> = (0..total).collect();
    let observed = mmd_of(&idx);
    let mut rng = StreamRng::new(seed, 0);
    let mut count = 0usize;
    let mut perms = Vec::with_capacity(n_perms);
    for _ in 0..n_perms {
        // Fisher–Yates shuffle of the pooled labels.
        for i in (1..total).rev() {
            let j = rng.below(i + 1);
            idx.swap(i, j);
        }
        let v = mmd_of(&idx);
        if v >= observed {
            count += 1;
        }
        perms.push(v);
    }
    MmdTest {
        mmd2: observed,
        p_value: (count + 1) as f64 / (n_perms + 1) as f64,
        perm_mean: math::mean(&perms),
        perm_stderr: math::stderr_mean(&perms) * math::sqrt(perms.len() as f64),
        bandwidth,
    }
}

/// 1-D Wasserstein-1 distance by sorted-sample (quantile) coupling. If the
/// sets differ in size, the larger sorted set is subsampled at the quantile
/// midpoints of the smaller size, keeping the estimate deterministic.
pub fn w1_1d(x: &[f64], y: &[f64]) -> f64 {
    assert!(!x.is_empty() && !y.is_empty(), "w1_1d: empty sample set");
    let mut a: Vec<f64> = x.to_vec();
    let mut b: Vec<f64> = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let k = a.len().min(b.len());
    let pick = |s: &[f64], i: usize| -> f64 {
        // value at quantile (i + ½)/k of the sorted slice
        let pos = (i as f64 + 0.5) / k as f64 * s.len() as f64;
        let j = (pos as usize).min(s.len() - 1);
        s[j]
    };
    let mut acc = 0.0;
    for i in 0..k {
        acc += math::abs(pick(&a, i) - pick(&b, i));
    }
    acc / k as f64
}

/// Sample covariance matrix of the rows (denominator `n−1`).
pub fn sample_cov(t: &Tensor) -> Tensor {
    let n = t.rows();
    let d = t.cols();
    assert!(n >= 2, "sample_cov needs at least 2 rows");
    let means = t.col_means();
    let mut cov = Tensor::zeros(d, d);
    for r in 0..n {
        let row = t.row_slice(r);
        for i in 0..d {
            let di = row[i] - means[i];
            for j in i..d {
                let v = cov.get(i, j) + di * (row[j] - means[j]);
                cov.set(i, j, v);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) / (n - 1) as f64;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    cov
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normals(n: usize, dim: usize, seed: u64, stream: u64) -> Tensor {
        let mut rng = StreamRng::new(seed, stream);
        let mut t = Tensor::zeros(n, dim);
        rng.fill_normal(t.data_mut());
        t
    }

    #[test]
    fn gaussian_kl_pins() {
        assert_eq!(gaussian_kl(&[0.3], &[2.0], &[0.3], &[2.0]), 0.0);
        assert_eq!(gaussian_kl(&[0.0], &[1.0], &[1.0], &[1.0]), 0.5);
        // Sum over dimensions: two independent copies double the value.
        let two = gaussian_kl(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(two, 1.0);
        // Pure variance mismatch: ½(½ − 1 + ln 2).
        let v = gaussian_kl(&[0.0], &[1.0], &[0.0], &[2.0]);
        assert!((v - 0.5 * (0.5 - 1.0 + (2f64).ln())).abs() < 1e-15);
    }

    #[test]
    fn mmd_is_symmetric_and_zero_mean_under_null() {
        let x = normals(60, 2, 3, 0);
        let y = normals(60, 2, 3, 1);
        let f = mmd2_unbiased(&x, &y, 1.0);
        let r = mmd2_unbiased(&y, &x, 1.0);
        assert!((f - r).abs() < 1e-15);
        // Unbiasedness permits small negative values under the null.
        assert!(f.abs() < 0.05);
    }

    #[test]
    fn mmd_separates_shifted_gaussians() {
        let x = normals(100, 1, 4, 0);
        let mut y = normals(100, 1, 4, 1);
        for v in y.data_mut() {
            *v += 3.0;
        }
        let v = mmd2_unbiased(&x, &y, pooled_bandwidth(&x, &y));
        assert!(v > 0.5, "shifted MMD² {v} unexpectedly small");
    }

    #[test]
    fn w1_pins() {
        assert_eq!(w1_1d(&[0.4, -1.0, 2.0], &[2.0, 0.4, -1.0]), 0.0);
        assert_eq!(w1_1d(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
        // Translation moves W1 by exactly the shift.
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 0.7).collect();
        assert!((w1_1d(&x, &y) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn w1_subsampling_handles_unequal_sizes() {
        // Same uniform law at different resolutions: distance stays small.
        let x: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let y: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!(w1_1d(&x, &y) < 0.01);
    }

    #[test]
    fn sample_cov_matches_hand_computation() {
        let t = Tensor::from_vec(3, 2, alloc::vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // cols: [1,3,5], [2,4,6] → var 4, cov 4
        let c = sample_cov(&t);
        assert_eq!(c.get(0, 0), 4.0);
        assert_eq!(c.get(1, 1), 4.0);
        assert_eq!(c.get(0, 1), 4.0);
        assert_eq!(c.get(1, 0), 4.0);
    }

    #[test]
    fn permutation_test_rejects_separated_samples() {
        let x = normals(80, 1, 7, 0);
        let mut y = normals(80, 1, 7, 1);
        for v in y.data_mut() {
            *v += 3.0;
        }
        let bw = pooled_bandwidth(&x, &y);
        let t = mmd_permutation_test(&x, &y, bw, 200, 0);
        assert!(t.p_value < 0.01, "p = {}", t.p_value);
    }

    #[test]
    fn permutation_test_accepts_null() {
        let x = normals(80, 1, 8, 0);
        let y = normals(80, 1, 8, 1);
        let bw = pooled_bandwidth(&x, &y);
        let t = mmd_permutation_test(&x, &y, bw, 200, 0);
        assert!(t.p_value > 0.05, "p = {}", t.p_value);
    }
}
