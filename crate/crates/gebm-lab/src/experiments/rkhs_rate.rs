//! Convergence rate of the kernel KALE estimator.
//!
//! Two-sample problems between `N(shift, 1)` and `N(0, 1)` (closed-form
//! KL = shift²/2) at sizes from the grid, ridge λ = 1/√N, solved exactly by
//! the damped Newton method. The log-log slope of the median absolute error
//! against N must fall in [−0.75, −0.25] — the parametric-to-slow-rate band
//! the ridge schedule predicts.

use super::{cell_dir, write_cell, BenchConfig, MetricReport, RunOutcome};
use crate::error::LabError;
use gebm_core::rkhs::rate_experiment;
use gebm_core::rng::StreamRng;
use gebm_core::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RkhsRateCfg {
    pub grid: Vec<usize>,
    /// Independent problem draws per grid point.
    pub n_seeds: usize,
    pub shift: f64,
    pub bandwidth: f64,
}

impl Default for RkhsRateCfg {
    fn default() -> Self {
        RkhsRateCfg {
            grid: vec![50, 100, 200, 400, 800, 1600],
            n_seeds: 20,
            shift: 0.5,
            bandwidth: 1.0,
        }
    }
}

fn normals(n: usize, seed: u64, stream: u64) -> Tensor {
    let mut rng = StreamRng::new(seed, stream);
    let mut t = Tensor::zeros(n, 1);
    rng.fill_normal(t.data_mut());
    t
}

pub fn run(config: &BenchConfig, out_root: &Path) -> Result<RunOutcome, LabError> {
    let cfg = &config.rkhs_rate;
    let mut outcome = RunOutcome::default();
    let kl = cfg.shift * cfg.shift / 2.0;

    for &seed in &config.seeds {
        let started = Instant::now();
        let inner: Vec<u64> = (0..cfg.n_seeds as u64)
            .map(|i| seed.wrapping_mul(10_000).wrapping_add(i))
            .collect();
        let shift = cfg.shift;
        let (slope, cells) = rate_experiment(
            |n, s| {
                let mut x = normals(n, s, 0);
                for v in x.data_mut() {
                    *v += shift;
                }
                x
            },
            |n, s| normals(n, s, 1),
            &cfg.grid,
            &inner,
            cfg.bandwidth,
            kl,
        )
        .map_err(LabError::from_core)?;

        let cell_cfg = serde_json::json!({ "seed": seed, "cfg": cfg, "kl_true": kl });
        let mut reports = vec![MetricReport::new("log-log-slope", slope, 0.0, &cell_cfg)];
        let mut rows = Vec::new();
        for &n in &cfg.grid {
            let mut errs: Vec<f64> = cells
                .iter()
                .filter(|c| c.n == n)
                .map(|c| c.abs_error)
                .collect();
            errs.sort_by(f64::total_cmp);
            let med = errs[errs.len() / 2];
            reports.push(MetricReport::new(
                format!("median-abs-error-n{n}"),
                med,
                0.0,
                &cell_cfg,
            ));
            rows.push(vec![n as f64, med]);
        }
        outcome.check(
            (-0.75..=-0.25).contains(&slope),
            format!(
                "rkhs-rate seed {seed}: log-log error slope {slope:.3} outside [-0.75, -0.25]"
            ),
        );

        let dir = cell_dir(out_root, "rkhs-rate", seed);
        crate::formats::write_series_csv(&dir.join("rate.csv"), &["n", "median_abs_error"], &rows)?;
        write_cell(&dir, &reports, started)?;
        outcome.reports.extend(reports);
    }
    Ok(outcome)
}
