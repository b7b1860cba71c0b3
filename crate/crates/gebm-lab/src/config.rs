//! JSON-config types for the command-line drivers.
//!
//! Every field has a default, so `{}` is a valid config; unknown keys are
//! rejected with an error naming the key. The resolved config (defaults
//! materialized, flags applied) is echoed into each run directory as
//! `config-echo.json`, and re-running from that echo reproduces the run.

use gebm_core::datasets::DatasetKind;
use gebm_core::kale::{KaleOptConfig, RegularizerConfig};
use gebm_core::models::{
    Activation, BaseModel, Energy, Generator, Mlp, MlpSpec, RealNvpFlow, RealNvpSpec,
};
use gebm_core::samplers::{SamplerConfig, SamplerKind};
use gebm_core::training::{CdConfig, FlowMlConfig, TrainConfig};
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Shared small enums
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ActivationCfg {
    #[default]
    Tanh,
    LeakyRelu {
        slope: f64,
    },
}

impl ActivationCfg {
    pub fn to_core(&self) -> Activation {
        match self {
            ActivationCfg::Tanh => Activation::Tanh,
            ActivationCfg::LeakyRelu { slope } => Activation::LeakyRelu(*slope),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodCfg {
    #[default]
    Gebm,
    FlowMl,
    EbmCd,
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKindCfg {
    Ula,
    #[default]
    Kla,
}

impl SamplerKindCfg {
    pub fn to_core(self) -> SamplerKind {
        match self {
            SamplerKindCfg::Ula => SamplerKind::Ula,
            SamplerKindCfg::Kla => SamplerKind::Kla,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyCfg {
    #[default]
    Mlp,
    Rkhs,
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKindCfg {
    #[default]
    Line,
    Ring,
}

impl DatasetKindCfg {
    pub fn to_core(self) -> DatasetKind {
        match self {
            DatasetKindCfg::Line => DatasetKind::Line,
            DatasetKindCfg::Ring => DatasetKind::Ring,
        }
    }
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetCfg {
    pub kind: DatasetKindCfg,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for DatasetCfg {
    fn default() -> Self {
        DatasetCfg {
            kind: DatasetKindCfg::Line,
            n_train: 2000,
            n_val: 500,
            n_test: 2000,
            seed: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Model architecture
// ---------------------------------------------------------------------------

fn d_latent() -> usize {
    2
}
fn d_hidden() -> Vec<usize> {
    vec![24]
}
fn d_flow_hidden() -> Vec<usize> {
    vec![16]
}
fn d_layers() -> usize {
    4
}
fn d_scale_bound() -> f64 {
    1.5
}
fn d_quad_scale() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaseCfg {
    /// Implicit generator: latent prior pushed through an MLP.
    Mlp {
        #[serde(default = "d_latent")]
        latent_dim: usize,
        #[serde(default = "d_hidden")]
        hidden: Vec<usize>,
        #[serde(default)]
        activation: ActivationCfg,
    },
    /// Real NVP flow base with an exact density.
    Flow {
        #[serde(default = "d_layers")]
        num_layers: usize,
        #[serde(default = "d_flow_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "d_scale_bound")]
        scale_bound: f64,
        #[serde(default)]
        activation: ActivationCfg,
    },
}

impl Default for BaseCfg {
    fn default() -> Self {
        BaseCfg::Mlp {
            latent_dim: d_latent(),
            hidden: d_hidden(),
            activation: ActivationCfg::Tanh,
        }
    }
}

impl BaseCfg {
    /// Instantiates the base model with freshly initialized parameters.
    pub fn build(&self, data_dim: usize, seed: u64) -> BaseModel {
        match self {
            BaseCfg::Mlp {
                latent_dim,
                hidden,
                activation,
            } => BaseModel::new_mlp(
                Mlp::new(MlpSpec {
                    input_dim: *latent_dim,
                    hidden: hidden.clone(),
                    output_dim: data_dim,
                    activation: activation.to_core(),
                }),
                seed,
            ),
            BaseCfg::Flow {
                num_layers,
                hidden,
                scale_bound,
                activation,
            } => BaseModel::new_flow(
                RealNvpFlow::new(RealNvpSpec {
                    dim: data_dim,
                    num_layers: *num_layers,
                    hidden: hidden.clone(),
                    activation: activation.to_core(),
                    scale_bound: *scale_bound,
                }),
                seed,
            ),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnergyCfg {
    Mlp {
        #[serde(default = "d_hidden")]
        hidden: Vec<usize>,
        #[serde(default)]
        activation: ActivationCfg,
    },
    /// Difference of two flow densities, `E = h − r`, where `r` mirrors the
    /// (flow) base architecture and tracks its parameters.
    FlowDiff,
    Quadratic {
        #[serde(default = "d_quad_scale")]
        scale: f64,
    },
    Zero,
}

impl Default for EnergyCfg {
    fn default() -> Self {
        EnergyCfg::Mlp {
            hidden: d_hidden(),
            activation: ActivationCfg::Tanh,
        }
    }
}

impl EnergyCfg {
    /// Instantiates the energy family; `flow-diff` requires a flow base
    /// (its reference copies the base architecture and parameters).
    pub fn build(&self, data_dim: usize, base: &BaseModel) -> Result<Energy, String> {
        match self {
            EnergyCfg::Mlp { hidden, activation } => Ok(Energy::Mlp(Mlp::new(MlpSpec {
                input_dim: data_dim,
                hidden: hidden.clone(),
                output_dim: 1,
                activation: activation.to_core(),
            }))),
            EnergyCfg::FlowDiff => match &base.generator {
                Generator::Flow(f) => Ok(Energy::FlowDiff {
                    h: f.clone(),
                    r: f.clone(),
                    r_params: base.theta.clone(),
                }),
                Generator::Mlp(_) => {
                    Err(String::from("energy type 'flow-diff' requires a flow base"))
                }
            },
            EnergyCfg::Quadratic { scale } => Ok(Energy::Quadratic {
                dim: data_dim,
                scale: *scale,
            }),
            EnergyCfg::Zero => Ok(Energy::Zero { dim: data_dim }),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ModelCfg {
    pub base: BaseCfg,
    pub energy: EnergyCfg,
}

// ---------------------------------------------------------------------------
// Mirrors of the core training configs
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RegCfg {
    pub weight: f64,
    pub l2_enabled: bool,
    pub grad_penalty_enabled: bool,
    pub penalty_mixing: f64,
    pub fd_step: f64,
}

impl Default for RegCfg {
    fn default() -> Self {
        let core = RegularizerConfig::default();
        RegCfg {
            weight: core.weight,
            l2_enabled: core.l2_enabled,
            grad_penalty_enabled: core.grad_penalty_enabled,
            penalty_mixing: core.penalty_mixing,
            fd_step: core.fd_step,
        }
    }
}

impl RegCfg {
    pub fn to_core(&self) -> RegularizerConfig {
        RegularizerConfig {
            weight: self.weight,
            l2_enabled: self.l2_enabled,
            grad_penalty_enabled: self.grad_penalty_enabled,
            penalty_mixing: self.penalty_mixing,
            fd_step: self.fd_step,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub n_b: usize,
    pub n_e: usize,
    pub burst_steps: usize,
    pub burst_every: usize,
    pub batch_n: usize,
    pub batch_m: usize,
    pub lr_energy: f64,
    pub lr_base: f64,
    pub lr_a: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub reg: RegCfg,
    pub clip_norm: f64,
    pub val_every: usize,
    pub sched_patience: u32,
    pub sched_factor: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        TrainSection {
            n_b: c.n_b,
            n_e: c.n_e,
            burst_steps: c.burst_steps,
            burst_every: c.burst_every,
            batch_n: c.batch_n,
            batch_m: c.batch_m,
            lr_energy: c.lr_energy,
            lr_base: c.lr_base,
            lr_a: c.lr_a,
            beta1: c.beta1,
            beta2: c.beta2,
            reg: RegCfg::default(),
            clip_norm: c.clip_norm,
            val_every: c.val_every,
            sched_patience: c.sched_patience,
            sched_factor: c.sched_factor,
            seed: c.seed,
        }
    }
}

impl TrainSection {
    pub fn to_core(&self) -> TrainConfig {
        TrainConfig {
            n_b: self.n_b,
            n_e: self.n_e,
            burst_steps: self.burst_steps,
            burst_every: self.burst_every,
            batch_n: self.batch_n,
            batch_m: self.batch_m,
            lr_energy: self.lr_energy,
            lr_base: self.lr_base,
            lr_a: self.lr_a,
            beta1: self.beta1,
            beta2: self.beta2,
            reg: self.reg.to_core(),
            clip_norm: self.clip_norm,
            val_every: self.val_every,
            sched_patience: self.sched_patience,
            sched_factor: self.sched_factor,
            seed: self.seed,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FlowMlSection {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for FlowMlSection {
    fn default() -> Self {
        let c = FlowMlConfig::default();
        FlowMlSection {
            steps: c.steps,
            batch: c.batch,
            lr: c.lr,
            beta1: c.beta1,
            beta2: c.beta2,
            clip_norm: c.clip_norm,
            seed: c.seed,
        }
    }
}

impl FlowMlSection {
    pub fn to_core(&self) -> FlowMlConfig {
        FlowMlConfig {
            steps: self.steps,
            batch: self.batch,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            clip_norm: self.clip_norm,
            seed: self.seed,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CdSection {
    pub steps: usize,
    pub batch: usize,
    pub langevin_iters: usize,
    pub langevin_step: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for CdSection {
    fn default() -> Self {
        let c = CdConfig::default();
        CdSection {
            steps: c.steps,
            batch: c.batch,
            langevin_iters: c.langevin_iters,
            langevin_step: c.langevin_step,
            lr: c.lr,
            beta1: c.beta1,
            beta2: c.beta2,
            clip_norm: c.clip_norm,
            seed: c.seed,
        }
    }
}

impl CdSection {
    pub fn to_core(&self) -> CdConfig {
        CdConfig {
            steps: self.steps,
            batch: self.batch,
            langevin_iters: self.langevin_iters,
            langevin_step: self.langevin_step,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            clip_norm: self.clip_norm,
            seed: self.seed,
        }
    }
}

// ---------------------------------------------------------------------------
// Command-level jobs
// ---------------------------------------------------------------------------

/// Config of the `train` command.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrainJob {
    pub method: MethodCfg,
    pub dataset: DatasetCfg,
    pub model: ModelCfg,
    pub train: TrainSection,
    pub flow_ml: FlowMlSection,
    pub cd: CdSection,
    /// Output directory; `None` resolves under the output root.
    pub out: Option<String>,
}

/// Config of the `sample` command; all fields are also CLI flags
/// (flags win over the file).
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SampleJob {
    /// Checkpoint directory produced by `train`.
    pub checkpoint: String,
    pub sampler: SamplerKindCfg,
    pub steps: usize,
    pub step_size: f64,
    /// Friction `γ` of the kinetic sampler.
    pub gamma: f64,
    /// Inverse mass `u` of the kinetic sampler.
    pub u: f64,
    /// Inverse temperature applied to the energy.
    pub beta: f64,
    pub seed: u64,
    pub decay_every: usize,
    pub decay_factor: f64,
    /// Number of rows to sample (one chain per row).
    pub n: usize,
    /// Output CSV path; `None` resolves under the output root.
    pub out: Option<String>,
}

impl Default for SampleJob {
    /// Reference sampler settings: kinetic, 1000 steps of `λ = 1e-4`
    /// decayed 10× every 200 steps, `γ = 100`, `u = 1`.
    fn default() -> Self {
        SampleJob {
            checkpoint: String::new(),
            sampler: SamplerKindCfg::Kla,
            steps: 1000,
            step_size: 1e-4,
            gamma: 100.0,
            u: 1.0,
            beta: 1.0,
            seed: 0,
            decay_every: 200,
            decay_factor: 0.1,
            n: 2000,
            out: None,
        }
    }
}

impl SampleJob {
    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            kind: self.sampler.to_core(),
            step_size: self.step_size,
            friction: self.gamma,
            inv_mass: self.u,
            steps: self.steps,
            decay_factor: self.decay_factor,
            decay_every: self.decay_every,
            trace_every: 0,
        }
    }
}

/// MLP-family settings of the `kale` command.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MlpKaleSection {
    pub hidden: Vec<usize>,
    pub activation: ActivationCfg,
    pub steps: usize,
    pub lr: f64,
    pub lr_a: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_n: usize,
    pub batch_m: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub reg: RegCfg,
}

impl Default for MlpKaleSection {
    fn default() -> Self {
        let c = KaleOptConfig::default();
        MlpKaleSection {
            hidden: vec![32],
            activation: ActivationCfg::Tanh,
            steps: c.steps,
            lr: c.lr,
            lr_a: c.lr_a,
            beta1: c.beta1,
            beta2: c.beta2,
            batch_n: c.batch_n,
            batch_m: c.batch_m,
            clip_norm: c.clip_norm,
            seed: c.seed,
            reg: RegCfg::default(),
        }
    }
}

impl MlpKaleSection {
    pub fn to_core(&self) -> KaleOptConfig {
        KaleOptConfig {
            steps: self.steps,
            lr: self.lr,
            lr_a: self.lr_a,
            beta1: self.beta1,
            beta2: self.beta2,
            batch_n: self.batch_n,
            batch_m: self.batch_m,
            eval_m: self.batch_m,
            clip_norm: self.clip_norm,
            seed: self.seed,
            reg: self.reg.to_core(),
            trace_every: 50,
        }
    }
}

/// Kernel-family settings of the `kale` command.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RkhsKaleSection {
    /// Ridge penalty λ of the dual problem.
    pub lambda: f64,
    /// Gaussian kernel bandwidth; `None` uses the median heuristic on the
    /// base sample.
    pub bandwidth: Option<f64>,
    /// Newton damping in (0, 1].
    pub damping: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for RkhsKaleSection {
    fn default() -> Self {
        RkhsKaleSection {
            lambda: 0.01,
            bandwidth: None,
            damping: 1.0,
            max_iters: 100,
            tol: 1e-10,
        }
    }
}

/// Config of the `kale` command.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct KaleJob {
    /// CSV of data samples (X ∼ P).
    pub x: String,
    /// CSV of base samples (Y ∼ B).
    pub y: String,
    pub family: FamilyCfg,
    pub mlp: MlpKaleSection,
    pub rkhs: RkhsKaleSection,
    /// Run directory for the echo and result files; `None` resolves under
    /// the output root.
    pub out: Option<String>,
}
