//! Command-line drivers: `train`, `sample`, `kale`, `bench`.
//!
//! Conventions shared by all subcommands:
//!
//! * every setting lives in a JSON job config in which all fields have
//!   defaults and unknown keys are errors; most settings are also flags, and
//!   flags win over the file;
//! * the fully resolved job is echoed to `config-echo.json` inside the run
//!   directory before any computation, and re-running from that echo
//!   reproduces the other output files byte for byte (`meta.json`, which
//!   records wall-clock time, is the one deliberate exception);
//! * output directories resolve as: `--out` flag, then the config's `out`,
//!   then `$GEBM_LAB_OUT/<command>`, then `./out/<command>`;
//! * exit codes: 0 success, 1 configuration/parse/usage error, 2 numerical
//!   divergence, 3 failed benchmark assertion.

use crate::checkpoint::{load_checkpoint, save_checkpoint, ModelRecord};
use crate::config::{
    EnergyCfg, FamilyCfg, KaleJob, MethodCfg, SampleJob, SamplerKindCfg, TrainJob,
};
use crate::error::LabError;
use crate::experiments::{run_benchmark, BenchConfig, REGISTERED};
use crate::formats;
use clap::{Args, Parser, Subcommand};
use gebm_core::datasets::SyntheticDataset;
use gebm_core::kale::kale_fixed_samples;
use gebm_core::models::{Energy, Generator, Mlp, MlpSpec, RealNvpFlow};
use gebm_core::rkhs::{build_problem, median_heuristic, newton_solve, rkhs_kale_value};
use gebm_core::samplers::{sample_gebm, Gebm};
use gebm_core::training::{train_ebm_cd, train_flow_ml, train_gebm};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(
    name = "gebm-lab",
    version,
    about = "Generalized energy-based models: training, latent-space samplers, \
             KALE estimation, and oracle-backed benchmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model (GEBM, maximum-likelihood flow, or contrastive
    /// divergence) and write a checkpoint directory.
    Train(TrainArgs),
    /// Draw samples from a trained checkpoint via a latent-space sampler.
    Sample(SampleArgs),
    /// Estimate the KALE divergence between two CSV sample files.
    Kale(KaleArgs),
    /// Run a registered benchmark experiment.
    Bench(BenchArgs),
}

/// Runs a parsed command line to completion.
pub fn run(cli: Cli) -> Result<(), LabError> {
    match cli.command {
        Command::Train(args) => run_train(args),
        Command::Sample(args) => run_sample(args),
        Command::Kale(args) => run_kale(args),
        Command::Bench(args) => run_bench(args),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn out_root() -> PathBuf {
    std::env::var_os("GEBM_LAB_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// `--out` flag, then the config's `out`, then `<root>/<command>`.
fn resolve_out(flag: Option<PathBuf>, cfg: Option<&str>, command: &str) -> PathBuf {
    if let Some(f) = flag {
        return f;
    }
    if let Some(c) = cfg {
        return PathBuf::from(c);
    }
    out_root().join(command)
}

fn load_job<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, LabError> {
    match path {
        Some(p) => formats::read_json_config(p),
        None => Ok(T::default()),
    }
}

fn cfg_path(p: Option<&Path>) -> PathBuf {
    p.map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("<defaults>"))
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn write_meta(dir: &Path, started: Instant) -> Result<(), LabError> {
    formats::write_json(
        &dir.join("meta.json"),
        &serde_json::json!({ "wall_time_secs": started.elapsed().as_secs_f64() }),
    )
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct TrainArgs {
    /// JSON job config; omitted = all defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (wins over the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training method override.
    #[arg(long, value_enum)]
    method: Option<MethodCfg>,
    /// Run seed override (applied to every method section).
    #[arg(long)]
    seed: Option<u64>,
}

fn run_train(args: TrainArgs) -> Result<(), LabError> {
    let started = Instant::now();
    let mut job: TrainJob = load_job(args.config.as_deref())?;
    if let Some(m) = args.method {
        job.method = m;
    }
    if let Some(s) = args.seed {
        job.train.seed = s;
        job.flow_ml.seed = s;
        job.cd.seed = s;
    }
    let out = resolve_out(args.out, job.out.as_deref(), "train");
    job.out = Some(path_string(&out));
    formats::write_json(&out.join("config-echo.json"), &job)?;

    let data = SyntheticDataset::generate(
        job.dataset.kind.to_core(),
        job.dataset.n_train,
        job.dataset.n_val,
        job.dataset.n_test,
        job.dataset.seed,
    );
    let dim = data.train.cols();

    match job.method {
        MethodCfg::Gebm => {
            let base = job.model.base.build(dim, job.train.seed);
            let energy = job
                .model
                .energy
                .build(dim, &base)
                .map_err(|m| LabError::Config {
                    path: cfg_path(args.config.as_deref()),
                    message: m,
                })?;
            match train_gebm(&data.train, &data.val, base, energy, &job.train.to_core()) {
                Ok(outcome) => {
                    formats::write_history_csv(&out.join("history.csv"), &outcome.history)?;
                    let st = outcome.state;
                    save_checkpoint(
                        &out,
                        &ModelRecord {
                            method: MethodCfg::Gebm,
                            data_dim: dim,
                            base: job.model.base.clone(),
                            energy: job.model.energy.clone(),
                            a: st.energy_state.a,
                            theta_len: st.base.theta.len(),
                            psi_len: st.energy_state.psi.len(),
                        },
                        st.base.theta.data(),
                        st.energy_state.psi.data(),
                    )?;
                    write_meta(&out, started)
                }
                Err(abort) => {
                    // Post-mortem: keep the partial history, then exit 2.
                    formats::write_history_csv(&out.join("history.csv"), &abort.history)?;
                    Err(LabError::from_core(abort.error))
                }
            }
        }
        MethodCfg::FlowMl => {
            let flow = require_flow(&job, dim, args.config.as_deref(), "flow-ml")?;
            let cfg = job.flow_ml.to_core();
            let (params, history) =
                train_flow_ml(&data.train, &flow, &cfg).map_err(LabError::from_core)?;
            write_scalar_history(&out.join("history.csv"), "batch_nll", &history)?;
            save_checkpoint(
                &out,
                &ModelRecord {
                    method: MethodCfg::FlowMl,
                    data_dim: dim,
                    base: job.model.base.clone(),
                    energy: EnergyCfg::Zero,
                    a: 0.0,
                    theta_len: params.len(),
                    psi_len: 0,
                },
                params.data(),
                &[],
            )?;
            write_meta(&out, started)
        }
        MethodCfg::EbmCd => {
            let flow = require_flow(&job, dim, args.config.as_deref(), "ebm-cd")?;
            let cfg = job.cd.to_core();
            let (params, history) =
                train_ebm_cd(&data.train, &flow, &cfg).map_err(LabError::from_core)?;
            write_scalar_history(&out.join("history.csv"), "cd_gap", &history)?;
            save_checkpoint(
                &out,
                &ModelRecord {
                    method: MethodCfg::EbmCd,
                    data_dim: dim,
                    base: job.model.base.clone(),
                    energy: EnergyCfg::Zero,
                    a: 0.0,
                    theta_len: params.len(),
                    psi_len: 0,
                },
                params.data(),
                &[],
            )?;
            write_meta(&out, started)
        }
    }
}

/// The flow-only methods need a flow base; rejects an MLP base with a
/// config error naming the method.
fn require_flow(
    job: &TrainJob,
    dim: usize,
    config: Option<&Path>,
    method: &str,
) -> Result<RealNvpFlow, LabError> {
    let model = job.model.base.build(dim, 0);
    match model.generator {
        Generator::Flow(f) => Ok(f),
        Generator::Mlp(_) => Err(LabError::Config {
            path: cfg_path(config),
            message: format!("method '{method}' requires base type 'flow'"),
        }),
    }
}

/// One-column training history (`step` plus a single metric).
fn write_scalar_history(path: &Path, name: &str, history: &[f64]) -> Result<(), LabError> {
    let rows: Vec<Vec<f64>> = history
        .iter()
        .enumerate()
        .map(|(i, &v)| vec![(i + 1) as f64, v])
        .collect();
    formats::write_series_csv(path, &["step", name], &rows)
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct SampleArgs {
    /// JSON job config; omitted = defaults + flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint directory produced by `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Sampler kind.
    #[arg(long, value_enum)]
    sampler: Option<SamplerKindCfg>,
    /// Sampler iterations (0 = pushforwards of prior draws).
    #[arg(long)]
    steps: Option<usize>,
    /// Initial step size λ.
    #[arg(long)]
    step_size: Option<f64>,
    /// Friction γ of the kinetic sampler.
    #[arg(long)]
    gamma: Option<f64>,
    /// Inverse mass u of the kinetic sampler.
    #[arg(long)]
    u: Option<f64>,
    /// Inverse temperature applied to the energy.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Decay the step size every this many steps (0 = never).
    #[arg(long)]
    decay_every: Option<usize>,
    /// Multiplicative step-size decay factor.
    #[arg(long)]
    decay_factor: Option<f64>,
    /// Number of rows to sample (one chain per row).
    #[arg(long)]
    n: Option<usize>,
    /// Output directory for samples.csv and the config echo.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_sample(args: SampleArgs) -> Result<(), LabError> {
    let started = Instant::now();
    let mut job: SampleJob = load_job(args.config.as_deref())?;
    if let Some(c) = args.checkpoint {
        job.checkpoint = path_string(&c);
    }
    if let Some(v) = args.sampler {
        job.sampler = v;
    }
    if let Some(v) = args.steps {
        job.steps = v;
    }
    if let Some(v) = args.step_size {
        job.step_size = v;
    }
    if let Some(v) = args.gamma {
        job.gamma = v;
    }
    if let Some(v) = args.u {
        job.u = v;
    }
    if let Some(v) = args.beta {
        job.beta = v;
    }
    if let Some(v) = args.seed {
        job.seed = v;
    }
    if let Some(v) = args.decay_every {
        job.decay_every = v;
    }
    if let Some(v) = args.decay_factor {
        job.decay_factor = v;
    }
    if let Some(v) = args.n {
        job.n = v;
    }
    if job.checkpoint.is_empty() {
        return Err(LabError::Config {
            path: cfg_path(args.config.as_deref()),
            message: String::from("sample: no checkpoint directory given (--checkpoint)"),
        });
    }
    let ck = load_checkpoint(Path::new(&job.checkpoint))?;
    let out = resolve_out(args.out, job.out.as_deref(), "sample");
    job.out = Some(path_string(&out));
    formats::write_json(&out.join("config-echo.json"), &job)?;

    let gebm = Gebm::new(ck.base, ck.energy, ck.energy_state, job.beta);
    let x = sample_gebm(&gebm, job.n, &job.sampler_config(), job.seed).map_err(LabError::from_core)?;
    formats::write_matrix_csv(&out.join("samples.csv"), &x)?;
    write_meta(&out, started)
}

// ---------------------------------------------------------------------------
// kale
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct KaleArgs {
    /// JSON job config; omitted = defaults + flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV of data samples (X ~ P).
    #[arg(long)]
    x: Option<PathBuf>,
    /// CSV of base samples (Y ~ B).
    #[arg(long)]
    y: Option<PathBuf>,
    /// Estimator family.
    #[arg(long, value_enum)]
    family: Option<FamilyCfg>,
    /// RKHS ridge penalty λ.
    #[arg(long)]
    lambda: Option<f64>,
    /// RKHS kernel bandwidth (default: median heuristic on the base rows).
    #[arg(long)]
    bandwidth: Option<f64>,
    /// MLP-family optimizer seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for result.json and the config echo.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_kale(args: KaleArgs) -> Result<(), LabError> {
    let started = Instant::now();
    let mut job: KaleJob = load_job(args.config.as_deref())?;
    if let Some(p) = args.x {
        job.x = path_string(&p);
    }
    if let Some(p) = args.y {
        job.y = path_string(&p);
    }
    if let Some(f) = args.family {
        job.family = f;
    }
    if let Some(l) = args.lambda {
        job.rkhs.lambda = l;
    }
    if let Some(b) = args.bandwidth {
        job.rkhs.bandwidth = Some(b);
    }
    if let Some(s) = args.seed {
        job.mlp.seed = s;
    }
    if job.x.is_empty() || job.y.is_empty() {
        return Err(LabError::Config {
            path: cfg_path(args.config.as_deref()),
            message: String::from("kale: both sample files are required (--x, --y)"),
        });
    }
    let x = formats::read_matrix_csv(Path::new(&job.x))?;
    let y = formats::read_matrix_csv(Path::new(&job.y))?;
    if x.cols() != y.cols() {
        return Err(LabError::Config {
            path: cfg_path(args.config.as_deref()),
            message: format!("x has {} columns but y has {}", x.cols(), y.cols()),
        });
    }
    let out = resolve_out(args.out, job.out.as_deref(), "kale");
    job.out = Some(path_string(&out));
    formats::write_json(&out.join("config-echo.json"), &job)?;

    let value = match job.family {
        FamilyCfg::Mlp => {
            let energy = Energy::Mlp(Mlp::new(MlpSpec {
                input_dim: x.cols(),
                hidden: job.mlp.hidden.clone(),
                output_dim: 1,
                activation: job.mlp.activation.to_core(),
            }));
            let est = kale_fixed_samples(&x, &y, &energy, &job.mlp.to_core())
                .map_err(|f| LabError::from_core(f.error))?;
            est.value
        }
        FamilyCfg::Rkhs => {
            let bw = job.rkhs.bandwidth.unwrap_or_else(|| median_heuristic(&y));
            let problem = build_problem(&x, &y, bw, job.rkhs.lambda).map_err(LabError::from_core)?;
            let sol = newton_solve(&problem, job.rkhs.damping, job.rkhs.max_iters, job.rkhs.tol)
                .map_err(LabError::from_core)?;
            rkhs_kale_value(&sol, &problem)
        }
    };
    let result = serde_json::json!({ "value": value, "family": job.family, "config": job });
    formats::write_json(&out.join("result.json"), &result)?;
    formats::print_json(&result);
    write_meta(&out, started)
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

/// Config of the `bench` command: the experiment name, the output root, and
/// the per-experiment sections.
#[derive(Serialize, Deserialize, Clone, Debug, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BenchJob {
    /// Registered experiment name; the positional CLI argument wins.
    pub spec: String,
    /// Output root; cells land at `<out>/<spec>/<seed>/`.
    pub out: Option<String>,
    pub config: BenchConfig,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Registered experiment name (wins over the config's `spec`).
    spec: Option<String>,
    /// JSON job config; omitted = defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; cells land at `<out>/<spec>/<seed>/`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seed list override.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

fn run_bench(args: BenchArgs) -> Result<(), LabError> {
    let mut job: BenchJob = load_job(args.config.as_deref())?;
    if let Some(s) = args.spec {
        job.spec = s;
    }
    if let Some(seeds) = args.seeds {
        job.config.seeds = seeds;
    }
    if !REGISTERED.contains(&job.spec.as_str()) {
        let name = if job.spec.is_empty() {
            String::from("(none)")
        } else {
            job.spec.clone()
        };
        return Err(LabError::UnknownSpec {
            name,
            registered: REGISTERED.join(", "),
        });
    }
    let out = resolve_out(args.out, job.out.as_deref(), "bench");
    job.out = Some(path_string(&out));
    formats::write_json(&out.join(&job.spec).join("config-echo.json"), &job)?;

    let outcome = run_benchmark(&job.spec, &job.config, &out)?;
    let summary = serde_json::json!({
        "spec": job.spec,
        "seeds": job.config.seeds,
        "failures": outcome.failures,
        "reports": outcome.reports,
    });
    formats::write_json(&out.join(&job.spec).join("summary.json"), &summary)?;
    formats::print_json(&summary);
    if !outcome.failures.is_empty() {
        return Err(LabError::BenchAssertion(outcome.failures.join("; ")));
    }
    Ok(())
}
