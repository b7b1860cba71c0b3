//! Diagonal-Gaussian latent prior.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::rng::StreamRng;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// The latent prior `η = N(mean, diag(stdev²))`. Defaults are zero mean and
/// unit stdev, the standard normal used everywhere in the training pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    dim: usize,
    mean: Vec<f64>,
    stdev: Vec<f64>,
    /// Precomputed `Σ ln σ_i + (q/2)·ln 2π`.
    log_norm: f64,
}

impl GaussianPrior {
    /// Standard normal of dimension `dim`.
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "GaussianPrior: dim must be positive");
        GaussianPrior {
            dim,
            mean: vec![0.0; dim],
            stdev: vec![1.0; dim],
            log_norm: 0.5 * dim as f64 * math::LN_2PI,
        }
    }

    /// Diagonal Gaussian with the given per-coordinate mean and stdev.
    pub fn with_moments(mean: Vec<f64>, stdev: Vec<f64>) -> Self {
        assert!(!mean.is_empty(), "GaussianPrior: dim must be positive");
        assert_eq!(mean.len(), stdev.len(), "GaussianPrior: mean/stdev length");
        assert!(
            stdev.iter().all(|s| *s > 0.0),
            "GaussianPrior: stdevs must be positive"
        );
        let dim = mean.len();
        let log_norm =
            stdev.iter().map(|s| math::ln(*s)).sum::<f64>() + 0.5 * dim as f64 * math::LN_2PI;
        GaussianPrior {
            dim,
            mean,
            stdev,
            log_norm,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn is_standard(&self) -> bool {
        self.mean.iter().all(|m| *m == 0.0) && self.stdev.iter().all(|s| *s == 1.0)
    }

    /// Draws `n` latents as an `n×dim` matrix.
    pub fn sample(&self, n: usize, rng: &mut StreamRng) -> Tensor {
        let mut t = Tensor::zeros(n, self.dim);
        rng.fill_normal(t.data_mut());
        if !self.is_standard() {
            for i in 0..n {
                for j in 0..self.dim {
                    let v = t.get(i, j);
                    t.set(i, j, self.mean[j] + self.stdev[j] * v);
                }
            }
        }
        t
    }

    /// Per-row `log η(z)`.
    pub fn log_density_rows(&self, z: &Tensor) -> Vec<f64> {
        assert_eq!(z.cols(), self.dim, "prior log_density: dim mismatch");
        (0..z.rows())
            .map(|i| {
                let row = z.row_slice(i);
                let sq: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let u = (v - self.mean[j]) / self.stdev[j];
                        u * u
                    })
                    .sum();
                -0.5 * sq - self.log_norm
            })
            .collect()
    }

    /// Score `∇_z log η(z) = -(z - μ)/σ²`, one row per latent.
    pub fn score(&self, z: &Tensor) -> Tensor {
        assert_eq!(z.cols(), self.dim, "prior score: dim mismatch");
        let mut out = z.clone();
        for i in 0..z.rows() {
            for j in 0..self.dim {
                let s = self.stdev[j];
                out.set(i, j, -(z.get(i, j) - self.mean[j]) / (s * s));
            }
        }
        out
    }

    /// Per-row negative log-density `-log η(z)` on the tape (`n×1`).
    pub fn tape_neg_log_density(&self, tape: &mut Tape, z: NodeId) -> NodeId {
        let u = if self.is_standard() {
            z
        } else {
            let neg_mean = Tensor::row(&self.mean.iter().map(|m| -m).collect::<Vec<_>>());
            let inv_sd = Tensor::row(&self.stdev.iter().map(|s| 1.0 / s).collect::<Vec<_>>());
            let nm = tape.constant(neg_mean);
            let is = tape.constant(inv_sd);
            let c = tape.add_row(z, nm);
            tape.mul_row(c, is)
        };
        let sq = tape.mul(u, u);
        let rs = tape.row_sum(sq);
        let half = tape.scale(rs, 0.5);
        tape.add_const(half, self.log_norm)
    }
}
