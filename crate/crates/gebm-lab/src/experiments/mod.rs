//! Scripted benchmark experiments with analytic or oracle-backed ground
//! truth. Each experiment loops over the configured seeds, writes one
//! `reports.json` (plus series CSVs) per seed under
//! `<out>/<spec>/<seed>/`, and returns hard pass/fail assertions.
//!
//! Reproducibility contract: every number in `reports.json` and in the CSVs
//! is a pure function of `(spec, config, seed)`. Wall-clock timings go to a
//! separate `meta.json` that is excluded from that contract.

use crate::error::LabError;
use crate::formats;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

mod amortized;
mod density_parity;
mod kale_gaussian;
mod line_gebm;
mod rkhs_rate;
mod sampler_moments;
mod temper_sweep;
mod w1_decay;

pub use amortized::AmortizedCfg;
pub use density_parity::DensityParityCfg;
pub use kale_gaussian::KaleGaussianCfg;
pub use line_gebm::LineGebmCfg;
pub use rkhs_rate::RkhsRateCfg;
pub use sampler_moments::SamplerMomentsCfg;
pub use temper_sweep::TemperSweepCfg;
pub use w1_decay::W1DecayCfg;

/// Names accepted by `run_benchmark`, in registry order.
pub const REGISTERED: [&str; 8] = [
    "kale-gaussian",
    "amortized-vs-batch",
    "sampler-moments",
    "w1-decay",
    "rkhs-rate",
    "line-gebm",
    "density-parity",
    "temper-sweep",
];

/// One named measurement with its Monte-Carlo standard error and the config
/// cell that produced it.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub config: serde_json::Value,
}

impl MetricReport {
    pub fn new<T: Serialize>(metric: impl Into<String>, value: f64, stderr: f64, cfg: &T) -> Self {
        MetricReport {
            metric: metric.into(),
            value,
            stderr,
            config: serde_json::to_value(cfg).expect("config serialization cannot fail"),
        }
    }
}

/// Experiment result: every report plus the list of failed hard assertions
/// (empty = the spec's criteria all passed).
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub reports: Vec<MetricReport>,
    pub failures: Vec<String>,
}

impl RunOutcome {
    /// Records a hard assertion: `ok == false` appends `message` to the
    /// failure list.
    pub fn check(&mut self, ok: bool, message: impl Into<String>) {
        if !ok {
            self.failures.push(message.into());
        }
    }
}

/// Top-level benchmark configuration: a shared seed list plus one section
/// per experiment, each defaulting to the scale the acceptance protocol
/// uses.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub seeds: Vec<u64>,
    pub kale_gaussian: KaleGaussianCfg,
    pub amortized: AmortizedCfg,
    pub sampler_moments: SamplerMomentsCfg,
    pub w1_decay: W1DecayCfg,
    pub rkhs_rate: RkhsRateCfg,
    pub line_gebm: LineGebmCfg,
    pub density_parity: DensityParityCfg,
    pub temper_sweep: TemperSweepCfg,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            // Seed 2 is the reference seed of the amortized-vs-batch
            // experiment's pinned analysis; all experiments accept any seed.
            seeds: vec![2],
            kale_gaussian: KaleGaussianCfg::default(),
            amortized: AmortizedCfg::default(),
            sampler_moments: SamplerMomentsCfg::default(),
            w1_decay: W1DecayCfg::default(),
            rkhs_rate: RkhsRateCfg::default(),
            line_gebm: LineGebmCfg::default(),
            density_parity: DensityParityCfg::default(),
            temper_sweep: TemperSweepCfg::default(),
        }
    }
}

/// Output directory of one `(spec, seed)` cell.
pub fn cell_dir(out_root: &Path, spec: &str, seed: u64) -> PathBuf {
    out_root.join(spec).join(seed.to_string())
}

/// Writes the per-cell artifacts: deterministic `reports.json` and the
/// wall-clock `meta.json` (the latter deliberately not reproducible).
pub(crate) fn write_cell(
    dir: &Path,
    reports: &[MetricReport],
    started: Instant,
) -> Result<(), LabError> {
    formats::write_json(&dir.join("reports.json"), &reports)?;
    formats::write_json(
        &dir.join("meta.json"),
        &serde_json::json!({ "wall_time_secs": started.elapsed().as_secs_f64() }),
    )
}

/// Runs the named experiment for every configured seed, writing artifacts
/// under `out_root/<spec>/<seed>/`.
pub fn run_benchmark(
    spec: &str,
    config: &BenchConfig,
    out_root: &Path,
) -> Result<RunOutcome, LabError> {
    if config.seeds.is_empty() {
        return Err(LabError::Config {
            path: PathBuf::from("<bench config>"),
            message: String::from("seed list is empty"),
        });
    }
    let mut outcome = match spec {
        "kale-gaussian" => kale_gaussian::run(config, out_root),
        "amortized-vs-batch" => amortized::run(config, out_root),
        "sampler-moments" => sampler_moments::run(config, out_root),
        "w1-decay" => w1_decay::run(config, out_root),
        "rkhs-rate" => rkhs_rate::run(config, out_root),
        "line-gebm" => line_gebm::run(config, out_root),
        "density-parity" => density_parity::run(config, out_root),
        "temper-sweep" => temper_sweep::run(config, out_root),
        other => Err(LabError::UnknownSpec {
            name: other.to_string(),
            registered: REGISTERED.join(", "),
        }),
    }?;
    // Report invariants are hard criteria too: a non-finite metric or a
    // negative standard error marks the run failed rather than panicking.
    for r in &outcome.reports {
        if !r.value.is_finite() {
            outcome
                .failures
                .push(format!("{spec}: metric '{}' is non-finite", r.metric));
        }
        if !(r.stderr >= 0.0) {
            outcome.failures.push(format!(
                "{spec}: metric '{}' has negative stderr",
                r.metric
            ));
        }
    }
    Ok(outcome)
}
