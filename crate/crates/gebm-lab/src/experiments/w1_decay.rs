//! Wasserstein decay of the chain law toward the target.
//!
//! The 1-D tractable composite (identity generator, quadratic energy,
//! β = 1) has the exact target `N(0, ½)`; chains start from the prior
//! `N(0, 1)`. At each checkpoint the pooled chain positions are compared
//! with an exact target sample by sorted coupling. Geometric contraction
//! makes `W₁` at the final step fall well below half its value at the
//! 10%-time checkpoint; the criterion takes the median over the seeds.

use super::{cell_dir, write_cell, BenchConfig, MetricReport, RunOutcome};
use crate::error::LabError;
use gebm_core::kale::EnergyState;
use gebm_core::models::{Activation, BaseModel, Energy, Mlp, MlpSpec};
use gebm_core::rng::StreamRng;
use gebm_core::samplers::{w1_decay_diagnostic, Gebm, SamplerConfig, SamplerKind};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct W1DecayCfg {
    pub chains: usize,
    pub steps: usize,
    pub step_size: f64,
    /// Rows in the exact reference sample.
    pub reference_n: usize,
}

impl Default for W1DecayCfg {
    fn default() -> Self {
        W1DecayCfg {
            chains: 2000,
            steps: 400,
            step_size: 2e-3,
            reference_n: 2000,
        }
    }
}

fn identity_base_1d() -> BaseModel {
    let mlp = Mlp::new(MlpSpec {
        input_dim: 1,
        hidden: vec![],
        output_dim: 1,
        activation: Activation::Tanh,
    });
    let mut base = BaseModel::new_mlp(mlp, 0);
    base.theta.block_slice_mut(0)[0] = 1.0;
    base.theta.block_slice_mut(1)[0] = 0.0;
    base
}

pub fn run(config: &BenchConfig, out_root: &Path) -> Result<RunOutcome, LabError> {
    let cfg = &config.w1_decay;
    let mut outcome = RunOutcome::default();
    let energy = Energy::Quadratic { dim: 1, scale: 1.0 };
    let psi = energy.init_params(0);
    let gebm = Gebm::new(identity_base_1d(), energy, EnergyState::new(psi, 0.0), 1.0);

    let early_t = (cfg.steps / 10).max(1);
    let mut early_vals = Vec::new();
    let mut final_vals = Vec::new();
    for &seed in &config.seeds {
        let started = Instant::now();
        // Exact target sample: √½ · Z from a stream reserved for the oracle.
        let mut oracle_rng = StreamRng::new(seed, 777);
        let mut exact = vec![0.0f64; cfg.reference_n];
        oracle_rng.fill_normal(&mut exact);
        for v in exact.iter_mut() {
            *v *= 0.5f64.sqrt();
        }

        let sampler = SamplerConfig {
            kind: SamplerKind::Ula,
            step_size: cfg.step_size,
            friction: 0.0,
            inv_mass: 1.0,
            steps: cfg.steps,
            decay_every: 0,
            decay_factor: 1.0,
            trace_every: 0,
        };
        let checkpoints = [early_t, cfg.steps];
        let series = w1_decay_diagnostic(&gebm, cfg.chains, &sampler, &checkpoints, &exact, seed)
            .map_err(LabError::from_core)?;
        let w_early = series[0].1;
        let w_final = series[1].1;
        early_vals.push(w_early);
        final_vals.push(w_final);

        let cell_cfg = serde_json::json!({ "seed": seed, "cfg": cfg, "early_step": early_t });
        let reports = vec![
            MetricReport::new("w1-at-10pct", w_early, 0.0, &cell_cfg),
            MetricReport::new("w1-final", w_final, 0.0, &cell_cfg),
            MetricReport::new("w1-ratio", w_final / w_early, 0.0, &cell_cfg),
        ];
        let dir = cell_dir(out_root, "w1-decay", seed);
        let rows: Vec<Vec<f64>> = series.iter().map(|(t, w)| vec![*t as f64, *w]).collect();
        crate::formats::write_series_csv(&dir.join("w1.csv"), &["step", "w1"], &rows)?;
        write_cell(&dir, &reports, started)?;
        outcome.reports.extend(reports);
    }

    let med = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s[s.len() / 2]
    };
    let med_early = med(&early_vals);
    let med_final = med(&final_vals);
    outcome.check(
        med_final < 0.5 * med_early,
        format!(
            "w1-decay: median final W1 {med_final:.4} is not below half the \
             median 10%-time value {med_early:.4}"
        ),
    );
    Ok(outcome)
}
