//! Gaussian ground-truth check of the neural KALE estimator.
//!
//! Two sample regimes per seed:
//! * identical sets (P = B): the estimate must sit within 0.05 of zero,
//! * N(0,1) vs N(1,1): the estimate must be positive, at least 0.3, and at
//!   most the closed-form KL (0.5 per dimension) plus 3 standard errors —
//!   the lower-bound property with a separation floor.
//!
//! The oracle (`gaussian_kl`) and the delta-method standard error never
//! touch the differentiation tapes, so they can falsify them.

use super::{cell_dir, write_cell, BenchConfig, MetricReport, RunOutcome};
use crate::error::LabError;
use gebm_core::kale::{kale_fixed_samples, EnergyState, KaleOptConfig, RegularizerConfig};
use gebm_core::metrics::gaussian_kl;
use gebm_core::models::{Activation, Energy, Mlp, MlpSpec};
use gebm_core::rng::StreamRng;
use gebm_core::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct KaleGaussianCfg {
    /// Rows per sample set (N = M).
    pub n: usize,
    pub dim: usize,
    /// Mean shift of the base in every coordinate.
    pub shift: f64,
    /// Inner-loop steps for the identical-sets fit.
    pub steps_identical: usize,
    /// Inner-loop steps for the shifted fit.
    pub steps_shifted: usize,
}

impl Default for KaleGaussianCfg {
    fn default() -> Self {
        KaleGaussianCfg {
            n: 2000,
            dim: 1,
            shift: 1.0,
            steps_identical: 300,
            steps_shifted: 800,
        }
    }
}

fn normals(n: usize, dim: usize, seed: u64, stream: u64) -> Tensor {
    let mut rng = StreamRng::new(seed, stream);
    let mut t = Tensor::zeros(n, dim);
    rng.fill_normal(t.data_mut());
    t
}

fn scalar_mlp(dim: usize, hidden: Vec<usize>) -> Energy {
    Energy::Mlp(Mlp::new(MlpSpec {
        input_dim: dim,
        hidden,
        output_dim: 1,
        activation: Activation::Tanh,
    }))
}

/// Delta-method standard error of the variational objective
/// `1 − mean(E(X) + A) − mean exp(−(E(Y) + A))` at a fixed energy state:
/// the two means are independent, so their variances add.
fn dv_stderr(energy: &Energy, state: &EnergyState, x: &Tensor, y: &Tensor) -> f64 {
    let ex = energy.eval(&state.psi, x);
    let wy: Vec<f64> = energy
        .eval(&state.psi, y)
        .into_iter()
        .map(|e| (-(e + state.a)).exp())
        .collect();
    let var = |v: &[f64]| {
        let m = gebm_core::math::mean(v);
        v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (v.len() as f64 - 1.0)
    };
    (var(&ex) / ex.len() as f64 + var(&wy) / wy.len() as f64).sqrt()
}

pub fn run(config: &BenchConfig, out_root: &Path) -> Result<RunOutcome, LabError> {
    let cfg = &config.kale_gaussian;
    let mut outcome = RunOutcome::default();
    for &seed in &config.seeds {
        let started = Instant::now();
        let x = normals(cfg.n, cfg.dim, seed, 10);
        let mut y_shift = normals(cfg.n, cfg.dim, seed, 12);
        for v in y_shift.data_mut() {
            *v += cfg.shift;
        }

        // Identical sets: literally the same rows on both sides.
        let opt_ident = KaleOptConfig {
            steps: cfg.steps_identical,
            lr: 1e-3,
            batch_n: 100,
            batch_m: 100,
            seed: seed.wrapping_add(7),
            reg: RegularizerConfig::with_weight(0.1),
            ..Default::default()
        };
        let est_ident = scalar_mlp(cfg.dim, vec![32]);
        let est_ident = kale_fixed_samples(&x, &x, &est_ident, &opt_ident)
            .map_err(|f| LabError::from_core(f.error))?;

        // Shifted base: N(0,1)^d vs N(shift,1)^d.
        let opt_shift = KaleOptConfig {
            steps: cfg.steps_shifted,
            lr: 5e-3,
            lr_a: 0.05,
            batch_n: 256,
            batch_m: 512,
            seed: seed.wrapping_add(3),
            reg: RegularizerConfig::with_weight(0.1),
            ..Default::default()
        };
        let family = scalar_mlp(cfg.dim, vec![16]);
        let est_shift = kale_fixed_samples(&x, &y_shift, &family, &opt_shift)
            .map_err(|f| LabError::from_core(f.error))?;
        let se_shift = dv_stderr(&family, &est_shift.energy_state, &x, &y_shift);

        let zeros = vec![0.0; cfg.dim];
        let ones = vec![1.0; cfg.dim];
        let shifts = vec![cfg.shift; cfg.dim];
        let kl = gaussian_kl(&zeros, &ones, &shifts, &ones);

        let cell_cfg = serde_json::json!({ "seed": seed, "cfg": cfg });
        let reports = vec![
            MetricReport::new("kale-identical", est_ident.value, 0.0, &cell_cfg),
            MetricReport::new("kale-shifted", est_shift.value, se_shift, &cell_cfg),
            MetricReport::new("kl-oracle", kl, 0.0, &cell_cfg),
        ];

        outcome.check(
            est_ident.value.abs() <= 0.05,
            format!(
                "kale-gaussian seed {seed}: identical-sets estimate {} not within 0.05 of zero",
                est_ident.value
            ),
        );
        outcome.check(
            est_shift.value > 0.0,
            format!(
                "kale-gaussian seed {seed}: shifted estimate {} not positive",
                est_shift.value
            ),
        );
        outcome.check(
            est_shift.value <= kl + 3.0 * se_shift,
            format!(
                "kale-gaussian seed {seed}: estimate {} exceeds KL {kl} + 3se {se_shift}",
                est_shift.value
            ),
        );
        outcome.check(
            est_shift.value >= 0.3,
            format!(
                "kale-gaussian seed {seed}: estimate {} below the 0.3 separation floor",
                est_shift.value
            ),
        );

        let dir = cell_dir(out_root, "kale-gaussian", seed);
        let trace: Vec<Vec<f64>> = est_shift
            .objective_trace
            .iter()
            .map(|t| vec![t.step as f64, t.f_hat, t.a, t.a_tilde])
            .collect();
        crate::formats::write_series_csv(
            &dir.join("objective.csv"),
            &["step", "f_hat", "a", "a_tilde"],
            &trace,
        )?;
        write_cell(&dir, &reports, started)?;
        outcome.reports.extend(reports);
    }
    Ok(outcome)
}
