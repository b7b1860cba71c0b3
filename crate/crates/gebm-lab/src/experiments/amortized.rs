//! Amortized log-partition accuracy against a large Monte-Carlo oracle.
//!
//! Protocol: a fixed quadratic energy over a standard normal base, whose
//! true log-partition is `A = ln E[exp(−Z²/2)] = −½ ln 2`. The damped
//! amortized update sees 2000 batches of 100 samples; its final relative
//! error must be at least five times smaller than the median relative error
//! of the individual per-batch estimates.

use super::{cell_dir, write_cell, BenchConfig, MetricReport, RunOutcome};
use crate::error::LabError;
use gebm_core::kale::amortized_a_update;
use gebm_core::models::Energy;
use gebm_core::rng::StreamRng;
use gebm_core::{ParamVector, Tensor};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AmortizedCfg {
    pub updates: usize,
    pub batch: usize,
    pub lr_a: f64,
    /// Monte-Carlo oracle sample count for the true log-partition.
    pub oracle_samples: usize,
    /// Required accuracy ratio (amortized at least this many times better).
    pub required_ratio: f64,
}

impl Default for AmortizedCfg {
    fn default() -> Self {
        AmortizedCfg {
            updates: 2000,
            batch: 100,
            lr_a: 1e-3,
            oracle_samples: 10_000_000,
            required_ratio: 5.0,
        }
    }
}

pub fn run(config: &BenchConfig, out_root: &Path) -> Result<RunOutcome, LabError> {
    let cfg = &config.amortized;
    let mut outcome = RunOutcome::default();

    // Oracle: seed fixed independently of the experiment seeds so every
    // cell is judged against the same truth estimate.
    let e = Energy::Quadratic { dim: 1, scale: 1.0 };
    let p = ParamVector::empty();
    let mut oracle_rng = StreamRng::new(777, 0);
    let chunk = 100_000usize;
    let mut acc = 0.0;
    let mut remaining = cfg.oracle_samples;
    let mut buf = vec![0.0f64; chunk];
    while remaining > 0 {
        let take = remaining.min(chunk);
        oracle_rng.fill_normal(&mut buf[..take]);
        acc += buf[..take].iter().map(|z| (-z * z / 2.0).exp()).sum::<f64>();
        remaining -= take;
    }
    let a_true = (acc / cfg.oracle_samples as f64).ln();

    for &seed in &config.seeds {
        let started = Instant::now();
        let mut rng = StreamRng::new(seed, 0);
        let mut a: Option<f64> = None;
        let mut batch_errors = Vec::with_capacity(cfg.updates);
        let mut series = Vec::new();
        for step in 0..cfg.updates {
            let mut y = Tensor::zeros(cfg.batch, 1);
            rng.fill_normal(y.data_mut());
            let (next, at) =
                amortized_a_update(a, &e, &p, &y, cfg.lr_a).map_err(LabError::from_core)?;
            a = Some(next);
            batch_errors.push((at - a_true).abs() / a_true.abs());
            if step % 50 == 0 || step + 1 == cfg.updates {
                series.push(vec![step as f64 + 1.0, next, at]);
            }
        }
        let final_rel = (a.expect("updates ≥ 1") - a_true).abs() / a_true.abs();
        let batch_rel = gebm_core::math::median(&batch_errors);
        let ratio = batch_rel / final_rel.max(f64::MIN_POSITIVE);

        let cell_cfg = serde_json::json!({ "seed": seed, "cfg": cfg, "a_true": a_true });
        let reports = vec![
            MetricReport::new("amortized-rel-error", final_rel, 0.0, &cell_cfg),
            MetricReport::new("batch-median-rel-error", batch_rel, 0.0, &cell_cfg),
            MetricReport::new("accuracy-ratio", ratio, 0.0, &cell_cfg),
        ];
        outcome.check(
            ratio >= cfg.required_ratio,
            format!(
                "amortized-vs-batch seed {seed}: amortized error {final_rel:.6} is only \
                 {ratio:.2}x better than the per-batch median {batch_rel:.6} (need {}x)",
                cfg.required_ratio
            ),
        );

        let dir = cell_dir(out_root, "amortized-vs-batch", seed);
        crate::formats::write_series_csv(&dir.join("partition.csv"), &["step", "a", "a_tilde"], &series)?;
        write_cell(&dir, &reports, started)?;
        outcome.reports.extend(reports);
    }
    Ok(outcome)
}
