//! Sampler moment check on the quadratic composite.
//!
//! Identity generator + quadratic energy at β = 1 over a standard 2-D prior
//! gives the latent posterior `ν = N(0, ½I)` in closed form. Both samplers
//! must reproduce that covariance, pooled over all chains and all
//! post-burn-in steps, within 10% element-wise (absolute 0.05 for the zero
//! off-diagonals).
//!
//! Step sizes: the overdamped chain contracts fast, so a short burn-in
//! suffices; the kinetic chain at friction 100 relaxes its slowest mode at
//! rate ≈ 4/γ per unit time, so it gets a larger step and a half-length
//! burn-in to push the initialization transient below the tolerance.

use super::{cell_dir, write_cell, BenchConfig, MetricReport, RunOutcome};
use crate::error::LabError;
use gebm_core::kale::EnergyState;
use gebm_core::models::{Activation, BaseModel, Energy, Mlp, MlpSpec};
use gebm_core::samplers::{pooled_moments, Gebm, SamplerConfig, SamplerKind};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerMomentsCfg {
    pub chains: usize,
    pub steps: usize,
    pub ula_step_size: f64,
    pub ula_burn_in_frac: f64,
    pub kla_step_size: f64,
    pub kla_burn_in_frac: f64,
    pub gamma: f64,
    pub u: f64,
    /// Relative tolerance on the diagonal (and, scaled by the ½ target,
    /// absolute tolerance on the off-diagonal).
    pub rel_tol: f64,
}

impl Default for SamplerMomentsCfg {
    fn default() -> Self {
        SamplerMomentsCfg {
            chains: 1000,
            steps: 100_000,
            ula_step_size: 1e-3,
            ula_burn_in_frac: 0.1,
            kla_step_size: 2e-3,
            kla_burn_in_frac: 0.5,
            gamma: 100.0,
            u: 1.0,
            rel_tol: 0.10,
        }
    }
}

fn identity_base(dim: usize) -> BaseModel {
    let mlp = Mlp::new(MlpSpec {
        input_dim: dim,
        hidden: vec![],
        output_dim: dim,
        activation: Activation::Tanh,
    });
    let mut base = BaseModel::new_mlp(mlp, 0);
    let w = base.theta.block_slice_mut(0);
    for v in w.iter_mut() {
        *v = 0.0;
    }
    for i in 0..dim {
        w[i * dim + i] = 1.0;
    }
    for v in base.theta.block_slice_mut(1) {
        *v = 0.0;
    }
    base
}

pub fn run(config: &BenchConfig, out_root: &Path) -> Result<RunOutcome, LabError> {
    let cfg = &config.sampler_moments;
    let mut outcome = RunOutcome::default();
    let energy = Energy::Quadratic { dim: 2, scale: 1.0 };
    let psi = energy.init_params(0);
    let gebm = Gebm::new(
        identity_base(2),
        energy,
        EnergyState::new(psi, 0.0),
        1.0,
    );
    let target = 0.5;

    for &seed in &config.seeds {
        let started = Instant::now();
        let mut reports = Vec::new();
        let mut rows = Vec::new();
        for (name, kind, step_size, burn_frac) in [
            ("ula", SamplerKind::Ula, cfg.ula_step_size, cfg.ula_burn_in_frac),
            ("kla", SamplerKind::Kla, cfg.kla_step_size, cfg.kla_burn_in_frac),
        ] {
            let sampler = SamplerConfig {
                kind,
                step_size,
                friction: cfg.gamma,
                inv_mass: cfg.u,
                steps: cfg.steps,
                decay_every: 0,
                decay_factor: 1.0,
                trace_every: 0,
            };
            let burn_in = ((cfg.steps as f64) * burn_frac) as usize;
            let (cov, count) =
                pooled_moments(&gebm, cfg.chains, &sampler, burn_in, seed)
                    .map_err(LabError::from_core)?;
            let cell_cfg = serde_json::json!({
                "seed": seed, "sampler": name, "cfg": cfg, "pooled_count": count
            });
            for i in 0..2 {
                for j in 0..2 {
                    let v = cov.get(i, j);
                    let want = if i == j { target } else { 0.0 };
                    let tol = cfg.rel_tol * target;
                    reports.push(MetricReport::new(
                        format!("{name}-cov-{i}{j}"),
                        v,
                        0.0,
                        &cell_cfg,
                    ));
                    outcome.check(
                        (v - want).abs() <= tol,
                        format!(
                            "sampler-moments seed {seed}: {name} pooled cov[{i}{j}] = {v:.4} \
                             not within {tol:.3} of {want}"
                        ),
                    );
                    rows.push(vec![
                        if name == "ula" { 0.0 } else { 1.0 },
                        i as f64,
                        j as f64,
                        v,
                    ]);
                }
            }
        }
        let dir = cell_dir(out_root, "sampler-moments", seed);
        crate::formats::write_series_csv(
            &dir.join("covariance.csv"),
            &["sampler", "row", "col", "value"],
            &rows,
        )?;
        write_cell(&dir, &reports, started)?;
        outcome.reports.extend(reports);
    }
    Ok(outcome)
}
