//! Likelihood parity on the ring mixture: the same Real NVP architecture is
//! trained three ways — maximum likelihood, contrastive divergence, and as a
//! GEBM (flow base plus flow-difference energy trained by the alternating
//! KALE scheme) — and all three are scored by held-out NLL in nats.
//!
//! The GEBM's NLL uses the exact test energies plus a Monte-Carlo estimate
//! of the true log-partition, so no estimator bias hides in the comparison.
//! The analytic NLL of the generating mixture is reported alongside as an
//! absolute anchor.

use super::{cell_dir, write_cell, BenchConfig, MetricReport, RunOutcome};
use crate::error::LabError;
use gebm_core::datasets::{DatasetKind, SyntheticDataset};
use gebm_core::math;
use gebm_core::models::{Activation, BaseModel, Energy, RealNvpFlow, RealNvpSpec};
use gebm_core::training::{
    eval_nll_gebm, flow_mean_nll, train_ebm_cd, train_flow_ml, train_gebm, CdConfig, FlowMlConfig,
    TrainConfig,
};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ParityMlCfg {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for ParityMlCfg {
    fn default() -> Self {
        ParityMlCfg {
            steps: 4000,
            batch: 200,
            lr: 5e-3,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ParityCdCfg {
    pub steps: usize,
    pub batch: usize,
    pub langevin_iters: usize,
    pub langevin_step: f64,
    pub lr: f64,
}

impl Default for ParityCdCfg {
    fn default() -> Self {
        ParityCdCfg {
            steps: 1500,
            batch: 100,
            langevin_iters: 100,
            langevin_step: 1e-2,
            lr: 1e-3,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ParityGebmCfg {
    pub n_b: usize,
    pub n_e: usize,
    pub burst_steps: usize,
    pub burst_every: usize,
    pub batch_n: usize,
    pub batch_m: usize,
    pub lr_energy: f64,
    pub lr_base: f64,
    pub val_every: usize,
}

impl Default for ParityGebmCfg {
    fn default() -> Self {
        ParityGebmCfg {
            n_b: 800,
            n_e: 5,
            burst_steps: 100,
            burst_every: 400,
            batch_n: 200,
            batch_m: 500,
            lr_energy: 2e-3,
            lr_base: 1e-3,
            val_every: 100,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DensityParityCfg {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Shared Real NVP architecture for all three trainers.
    pub num_layers: usize,
    pub hidden: Vec<usize>,
    pub scale_bound: f64,
    pub ml: ParityMlCfg,
    pub cd: ParityCdCfg,
    pub gebm: ParityGebmCfg,
    /// Monte-Carlo draws for the GEBM log-partition.
    pub mc_samples: usize,
    /// Allowed |NLL(GEBM) − NLL(ML)| in nats.
    pub tol_ml: f64,
    /// Allowed |NLL(GEBM) − NLL(CD)| in nats.
    pub tol_cd: f64,
}

impl Default for DensityParityCfg {
    fn default() -> Self {
        DensityParityCfg {
            n_train: 4000,
            n_val: 500,
            n_test: 2000,
            num_layers: 4,
            hidden: vec![16],
            scale_bound: 1.5,
            ml: ParityMlCfg::default(),
            cd: ParityCdCfg::default(),
            gebm: ParityGebmCfg::default(),
            mc_samples: 2_000_000,
            tol_ml: 0.1,
            tol_cd: 0.3,
        }
    }
}

pub fn run(config: &BenchConfig, out_root: &Path) -> Result<RunOutcome, LabError> {
    let cfg = &config.density_parity;
    let mut outcome = RunOutcome::default();
    for &seed in &config.seeds {
        let started = Instant::now();
        let data = SyntheticDataset::generate(DatasetKind::Ring, cfg.n_train, cfg.n_val, cfg.n_test, seed);
        let flow = RealNvpFlow::new(RealNvpSpec {
            dim: 2,
            num_layers: cfg.num_layers,
            hidden: cfg.hidden.clone(),
            activation: Activation::Tanh,
            scale_bound: cfg.scale_bound,
        });

        let ml_cfg = FlowMlConfig {
            steps: cfg.ml.steps,
            batch: cfg.ml.batch,
            lr: cfg.ml.lr,
            seed: seed.wrapping_add(82),
            ..FlowMlConfig::default()
        };
        let (ml_params, ml_history) =
            train_flow_ml(&data.train, &flow, &ml_cfg).map_err(LabError::from_core)?;
        let nll_ml = flow_mean_nll(&flow, &ml_params, &data.test);

        let cd_cfg = CdConfig {
            steps: cfg.cd.steps,
            batch: cfg.cd.batch,
            langevin_iters: cfg.cd.langevin_iters,
            langevin_step: cfg.cd.langevin_step,
            lr: cfg.cd.lr,
            seed: seed.wrapping_add(82),
            ..CdConfig::default()
        };
        let (cd_params, _) = train_ebm_cd(&data.train, &flow, &cd_cfg).map_err(LabError::from_core)?;
        let nll_cd = flow_mean_nll(&flow, &cd_params, &data.test);

        // GEBM: flow base, flow-difference energy whose reference tracks the
        // base, trained from scratch by the alternating scheme.
        let base = BaseModel::new_flow(flow.clone(), seed.wrapping_add(83));
        let energy = Energy::FlowDiff {
            h: flow.clone(),
            r: flow.clone(),
            r_params: base.theta.clone(),
        };
        let gebm_cfg = TrainConfig {
            n_b: cfg.gebm.n_b,
            n_e: cfg.gebm.n_e,
            burst_steps: cfg.gebm.burst_steps,
            burst_every: cfg.gebm.burst_every,
            batch_n: cfg.gebm.batch_n,
            batch_m: cfg.gebm.batch_m,
            lr_energy: cfg.gebm.lr_energy,
            lr_base: cfg.gebm.lr_base,
            val_every: cfg.gebm.val_every,
            seed: seed.wrapping_add(83),
            ..TrainConfig::default()
        };
        let out = train_gebm(&data.train, &data.val, base, energy, &gebm_cfg)
            .map_err(|a| LabError::from_core(a.error))?;
        let nll_gebm = eval_nll_gebm(
            &out.state.base,
            &out.state.energy,
            &out.state.energy_state.psi,
            &data.test,
            cfg.mc_samples,
            seed.wrapping_add(84),
        )
        .map_err(LabError::from_core)?;

        let mut nll_true = 0.0;
        for i in 0..data.test.rows() {
            nll_true -= gebm_core::datasets::ring_log_density(data.test.row_slice(i))
                / data.test.rows() as f64;
        }

        let cell_cfg = serde_json::json!({ "seed": seed, "cfg": cfg });
        let reports = vec![
            MetricReport::new("nll-ml", nll_ml, 0.0, &cell_cfg),
            MetricReport::new("nll-cd", nll_cd, 0.0, &cell_cfg),
            MetricReport::new("nll-gebm", nll_gebm, 0.0, &cell_cfg),
            MetricReport::new("nll-true", nll_true, 0.0, &cell_cfg),
            MetricReport::new("gap-gebm-ml", nll_gebm - nll_ml, 0.0, &cell_cfg),
            MetricReport::new("gap-gebm-cd", nll_gebm - nll_cd, 0.0, &cell_cfg),
        ];
        outcome.check(
            (nll_gebm - nll_ml).abs() <= cfg.tol_ml,
            format!(
                "density-parity seed {seed}: |GEBM − ML| = {:.4} nats exceeds {:.2} \
                 (gebm {nll_gebm:.4}, ml {nll_ml:.4})",
                (nll_gebm - nll_ml).abs(),
                cfg.tol_ml
            ),
        );
        outcome.check(
            (nll_gebm - nll_cd).abs() <= cfg.tol_cd,
            format!(
                "density-parity seed {seed}: |GEBM − CD| = {:.4} nats exceeds {:.2} \
                 (gebm {nll_gebm:.4}, cd {nll_cd:.4})",
                (nll_gebm - nll_cd).abs(),
                cfg.tol_cd
            ),
        );

        let dir = cell_dir(out_root, "density-parity", seed);
        let ml_rows: Vec<Vec<f64>> = ml_history
            .iter()
            .enumerate()
            .map(|(i, &v)| vec![(i + 1) as f64, v])
            .collect();
        crate::formats::write_series_csv(&dir.join("ml-history.csv"), &["step", "batch_nll"], &ml_rows)?;
        crate::formats::write_history_csv(&dir.join("gebm-history.csv"), &out.history)?;
        write_cell(&dir, &reports, started)?;
        outcome.reports.extend(reports);
        debug_assert!(math::all_finite(&[nll_ml, nll_cd, nll_gebm]));
    }
    Ok(outcome)
}
