//! Central finite-difference gradient checking.

use alloc::vec::Vec;

use crate::math;

/// Compares an analytic gradient against central finite differences.
///
/// For each coordinate `i` the reference derivative is
/// `(f(x + h e_i) - f(x - h e_i)) / (2h)` and the reported figure is the
/// worst relative error
///
/// ```text
/// max_i |fd_i - grad_i| / (|grad_i| + 1e-12).
/// ```
///
/// `f` is called `2·len(x)` times; `x` itself is never mutated in place from
/// the caller's perspective.
pub fn finite_diff_check(
    mut f: impl FnMut(&[f64]) -> f64,
    grad: &[f64],
    x: &[f64],
    h: f64,
) -> f64 {
    assert_eq!(grad.len(), x.len(), "finite_diff_check: length mismatch");
    let mut point: Vec<f64> = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = point[i];
        point[i] = orig + h;
        let fp = f(&point);
        point[i] = orig - h;
        let fm = f(&point);
        point[i] = orig;
        let fd = (fp - fm) / (2.0 * h);
        let rel = math::abs(fd - grad[i]) / (math::abs(grad[i]) + 1e-12);
        if rel > worst {
            worst = rel;
        }
    }
    worst
}
