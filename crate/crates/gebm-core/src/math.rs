//! Scalar math shims and numerically careful reductions.
//!
//! The crate is `no_std`, so transcendental functions come from [`libm`]
//! rather than the std `f64` methods. Routing every call through this module
//! keeps the choice in one place and guarantees identical bit patterns on
//! every platform libm supports.

/// Natural logarithm of the largest finite `f64`. `exp(x)` overflows to
/// `+inf` for `x` strictly above this.
pub const EXP_OVERFLOW: f64 = 709.782712893384;

/// `ln(2π)`, used by Gaussian log-densities.
pub const LN_2PI: f64 = 1.837877066409345;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

/// `max(a, b)` propagating neither NaN specially; ties prefer `a`.
#[inline]
pub fn fmax(a: f64, b: f64) -> f64 {
    if b > a {
        b
    } else {
        a
    }
}

/// `log Σ_i exp(x_i)` computed with the max-shift trick.
///
/// Returns `-inf` for an empty slice. Never overflows: the shifted
/// exponentials are all `≤ 1`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for &x in xs {
        if x > m {
            m = x;
        }
    }
    if !m.is_finite() {
        // All entries -inf (empty sum) or some entry +inf/NaN; either way the
        // shifted form below would produce NaN, so report the max directly.
        return m;
    }
    let mut s = 0.0;
    for &x in xs {
        s += exp(x - m);
    }
    m + ln(s)
}

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for &x in xs {
        s += x;
    }
    s / xs.len() as f64
}

/// Unbiased sample variance; 0 for slices shorter than 2.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    let mut s = 0.0;
    for &x in xs {
        let d = x - mu;
        s += d * d;
    }
    s / (xs.len() - 1) as f64
}

/// Standard error of the mean: `sqrt(variance / n)`.
pub fn stderr_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    sqrt(variance(xs) / xs.len() as f64)
}

/// Median by sorting a copy. Averages the two central order statistics for
/// even lengths. Returns NaN for an empty slice.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = alloc::vec::Vec::from(xs);
    v.sort_by(|a, b| a.partial_cmp(b).expect("median: NaN in input"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Euclidean norm of a slice.
pub fn l2_norm(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in xs {
        s += x * x;
    }
    sqrt(s)
}

/// True if every entry is finite.
pub fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_matches_naive_in_safe_range() {
        let xs = [0.3f64, -1.2, 2.0, 0.0];
        let naive = xs.iter().map(|&x| x.exp()).sum::<f64>().ln();
        assert!((logsumexp(&xs) - naive).abs() < 1e-14);
    }

    #[test]
    fn logsumexp_survives_large_inputs() {
        // exp(800) overflows f64; the shifted form must not.
        let xs = [800.0, 799.0];
        let expect = 800.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((logsumexp(&xs) - expect).abs() < 1e-12);
        let lo = [-800.0, -801.0];
        let expect_lo = -800.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((logsumexp(&lo) - expect_lo).abs() < 1e-12);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn variance_of_constant_is_zero() {
        assert_eq!(variance(&[2.0, 2.0, 2.0]), 0.0);
    }
}
