//! First-order optimization: Adam with bias correction, gradient clipping,
//! and the validation-driven learning-rate scheduler.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::params::ParamVector;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    /// Defaults follow the training protocol used throughout: `lr 1e-3`,
    /// betas `(0.5, 0.9)`, `eps 1e-8`.
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Adam state: first/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, dim: usize) -> Self {
        Adam {
            config,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// One Adam step with bias correction:
    ///
    /// ```text
    /// m ← β₁ m + (1-β₁) g        v ← β₂ v + (1-β₂) g²
    /// θ ← θ − lr · (m / (1-β₁ᵗ)) / (√(v / (1-β₂ᵗ)) + ε)
    /// ```
    ///
    /// `lr_scale` multiplies the configured learning rate (used by the
    /// scheduler without mutating the config).
    pub fn step(&mut self, params: &mut ParamVector, grad: &ParamVector, lr_scale: f64) {
        assert_eq!(params.len(), self.m.len(), "Adam: param dim mismatch");
        assert!(params.same_layout(grad), "Adam: grad layout mismatch");
        self.t += 1;
        let c = &self.config;
        let bc1 = 1.0 - math::powi(c.beta1, self.t as i32);
        let bc2 = 1.0 - math::powi(c.beta2, self.t as i32);
        let lr = c.lr * lr_scale;
        let p = params.data_mut();
        let g = grad.data();
        for i in 0..p.len() {
            let gi = g[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * gi;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * gi * gi;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            p[i] -= lr * mhat / (math::sqrt(vhat) + c.eps);
        }
    }
}

/// Rescales `g` in place so its Euclidean norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grad_norm(g: &mut ParamVector, max_norm: f64) -> f64 {
    let n = g.l2_norm();
    if n > max_norm && n > 0.0 {
        g.scale(max_norm / n);
    }
    n
}

/// Multiplicative learning-rate scheduler driven by a validation metric.
///
/// Each observation is compared against the previous one; a metric that
/// fails to decrease counts as a failure, and after `patience` consecutive
/// failures the scale is multiplied by `factor` and the streak resets. Any
/// decrease also resets the streak.
#[derive(Debug, Clone, PartialEq)]
pub struct LrScheduler {
    pub factor: f64,
    pub patience: u32,
    /// Metric from one window earlier (`None` before the first observation).
    pub prev: Option<f64>,
    pub fails: u32,
    pub scale: f64,
}

impl LrScheduler {
    pub fn new(factor: f64, patience: u32) -> Self {
        LrScheduler {
            factor,
            patience,
            prev: None,
            fails: 0,
            scale: 1.0,
        }
    }

    /// Feeds one validation observation (lower is better). Returns `true`
    /// when this observation triggered a decay.
    pub fn observe(&mut self, metric: f64) -> bool {
        let worse = match self.prev {
            None => false,
            Some(p) => metric >= p,
        };
        self.prev = Some(metric);
        if !worse {
            self.fails = 0;
            return false;
        }
        self.fails += 1;
        if self.fails >= self.patience {
            self.scale *= self.factor;
            self.fails = 0;
            return true;
        }
        false
    }
}
