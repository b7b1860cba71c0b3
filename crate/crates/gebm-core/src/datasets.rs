//! Synthetic target distributions with analytic ground truth.
//!
//! Two families cover the benchmark needs:
//!
//! * **line** — 2-D points on the line `x₂ = 0.5·x₁ + 0.2` whose coordinate
//!   `t = x₁` follows a symmetric bimodal density on `[−1, 1]` concentrated
//!   near `±1` (a `Beta(5,2)` bump mirrored about the origin). The support
//!   is one-dimensional, so no absolutely continuous 2-D model can match it;
//!   its exact 1-D density along the line is retained for evaluation.
//! * **ring** — a 4-component isotropic Gaussian mixture with means on a
//!   circle; fully absolutely continuous with closed-form log-density, used
//!   for density-estimation parity checks.

use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::rng::StreamRng;
use crate::tensor::Tensor;

/// Line slope/intercept: not axis-aligned so an identity map cannot fit it.
pub const LINE_SLOPE: f64 = 0.5;
pub const LINE_INTERCEPT: f64 = 0.2;

/// Ring mixture geometry: means at radius 1.5 on the axes, width 0.5. The
/// modes are separated by ~4σ — distinct but close enough that a short
/// data-space Langevin chain still mixes across the valleys, which the
/// contrastive-divergence baseline relies on.
pub const RING_RADIUS: f64 = 1.5;
pub const RING_SIGMA: f64 = 0.5;

const LN_2PI: f64 = 1.8378770664093453;

/// CDF of `Beta(5, 2)`: `F(u) = 6u⁵ − 5u⁶`.
fn beta52_cdf(u: f64) -> f64 {
    let u5 = u * u * u * u * u;
    6.0 * u5 - 5.0 * u5 * u
}

/// Density of `Beta(5, 2)`: `30u⁴(1−u)`.
fn beta52_pdf(u: f64) -> f64 {
    30.0 * u * u * u * u * (1.0 - u)
}

/// Inverse CDF of `Beta(5, 2)` by bisection-safeguarded Newton.
fn beta52_inv_cdf(p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    // p^{1/5} is exact for small u where F ≈ 6u⁵; good global start.
    let mut u = math::exp(math::ln(p) / 5.0);
    for _ in 0..80 {
        let f = beta52_cdf(u) - p;
        if math::abs(f) < 1e-15 {
            break;
        }
        if f > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let d = beta52_pdf(u);
        let step = if d > 1e-12 { u - f / d } else { f64::NAN };
        u = if step.is_finite() && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
    }
    u
}

/// Draws `n` values of the line coordinate `t = s·u`, `u ∼ Beta(5,2)`,
/// `s = ±1` equiprobable.
pub fn line_coordinate_sample(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u = beta52_inv_cdf(rng.uniform());
            let s = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            s * u
        })
        .collect()
}

/// Exact density of the line coordinate: `p(t) = 15 t⁴ (1 − |t|)` on
/// `[−1, 1]` (half a mirrored `Beta(5,2)` on each side).
pub fn line_coordinate_density(t: f64) -> f64 {
    let a = math::abs(t);
    if a > 1.0 {
        return 0.0;
    }
    0.5 * beta52_pdf(a)
}

/// Samples the 2-D line dataset: rows `(t, 0.5·t + 0.2)`.
pub fn line_sample(n: usize, rng: &mut StreamRng) -> Tensor {
    let ts = line_coordinate_sample(n, rng);
    let mut out = Tensor::zeros(n, 2);
    for (i, t) in ts.into_iter().enumerate() {
        let row = out.row_slice_mut(i);
        row[0] = t;
        row[1] = LINE_SLOPE * t + LINE_INTERCEPT;
    }
    out
}

/// Means of the ring mixture: radius [`RING_RADIUS`] at angles 0, ½π, π, ¾·2π.
pub fn ring_means() -> [[f64; 2]; 4] {
    [
        [RING_RADIUS, 0.0],
        [0.0, RING_RADIUS],
        [-RING_RADIUS, 0.0],
        [0.0, -RING_RADIUS],
    ]
}

/// Samples the 4-component ring mixture.
pub fn ring_sample(n: usize, rng: &mut StreamRng) -> Tensor {
    let means = ring_means();
    let mut out = Tensor::zeros(n, 2);
    for i in 0..n {
        let k = rng.below(4);
        let (g1, g2) = rng.normal_pair();
        let row = out.row_slice_mut(i);
        row[0] = means[k][0] + RING_SIGMA * g1;
        row[1] = means[k][1] + RING_SIGMA * g2;
    }
    out
}

/// Exact log-density of the ring mixture at a 2-D point.
pub fn ring_log_density(x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), 2);
    let means = ring_means();
    let inv2s2 = 1.0 / (2.0 * RING_SIGMA * RING_SIGMA);
    let log_norm = -LN_2PI - 2.0 * math::ln(RING_SIGMA); // ln N(0; σ²I₂) part
    let logs: Vec<f64> = means
        .iter()
        .map(|m| {
            let dx = x[0] - m[0];
            let dy = x[1] - m[1];
            log_norm - (dx * dx + dy * dy) * inv2s2
        })
        .collect();
    math::logsumexp(&logs) - math::ln(4.0)
}

/// The synthetic target families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Line,
    Ring,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Line => "line",
            DatasetKind::Ring => "ring",
        }
    }

    pub fn dims(self) -> usize {
        2
    }

    /// Seeded draw; `stream` separates independent splits.
    pub fn sample(self, n: usize, seed: u64, stream: u64) -> Tensor {
        let mut rng = StreamRng::new(seed, stream);
        match self {
            DatasetKind::Line => line_sample(n, &mut rng),
            DatasetKind::Ring => ring_sample(n, &mut rng),
        }
    }

    /// Exact log-density, where the law is absolutely continuous.
    pub fn log_density(self, x: &[f64]) -> Option<f64> {
        match self {
            DatasetKind::Line => None,
            DatasetKind::Ring => Some(ring_log_density(x)),
        }
    }
}

/// A named dataset with train/validation/test splits drawn from disjoint
/// streams of the same seed (streams 0, 1, 2).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub name: String,
    pub kind: DatasetKind,
    pub seed: u64,
    pub train: Tensor,
    pub val: Tensor,
    pub test: Tensor,
}

impl SyntheticDataset {
    pub fn generate(kind: DatasetKind, n_train: usize, n_val: usize, n_test: usize, seed: u64) -> Self {
        SyntheticDataset {
            name: String::from(kind.name()),
            kind,
            seed,
            train: kind.sample(n_train, seed, 0),
            val: kind.sample(n_val, seed, 1),
            test: kind.sample(n_test, seed, 2),
        }
    }
}
