//! Latent-space Langevin samplers for generalized energy-based models.
//!
//! Sampling from `Q(dx) ∝ exp(−E(x)) B(dx)` never touches data space:
//! the posterior latent density `ν(z) ∝ η(z)·exp(−β·E(B(z)))` is sampled by
//! unadjusted (overdamped) or kinetic Langevin chains, and final latents are
//! pushed through the generator. The inverse temperature `β` interpolates
//! from the base (`β = 0`) to the full model (`β = 1`).
//!
//! Chains are independent: chain `i` owns the RNG stream `1 + i` of the run
//! seed, so a batch of chains is bit-identical to running each chain alone.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::kale::EnergyState;
use crate::math;
use crate::metrics::w1_1d;
use crate::models::{BaseModel, Energy};
use crate::rng::StreamRng;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Which discretization drives the chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    /// Overdamped: `Z ← Z + λ∇log ν(Z) + √(2λ) W`.
    Ula,
    /// Kinetic: position/kick/Ornstein–Uhlenbeck/kick/position splitting
    /// with friction `γ` and inverse mass `u`.
    Kla,
}

/// Chain configuration shared by both samplers.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Step size `λ`. Zero is allowed and leaves the state untouched.
    pub step_size: f64,
    /// Friction `γ ≥ 0` (kinetic only).
    pub friction: f64,
    /// Inverse mass `u > 0` (kinetic only); momenta equilibrate to `N(0, uI)`.
    pub inv_mass: f64,
    /// Number of iterations `T`.
    pub steps: usize,
    /// Step-size decay: multiply by `decay_factor` every `decay_every` steps
    /// (`decay_every = 0` disables decay).
    pub decay_factor: f64,
    pub decay_every: usize,
    /// Record a trace row (chain 0) every this many steps; 0 disables.
    pub trace_every: usize,
}

impl Default for SamplerConfig {
    /// Kinetic sampler with the reference settings: `λ = 1e-4` decayed by
    /// 10× every 200 iterations, `γ = 100`, `u = 1`, 1000 steps.
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Kla,
            step_size: 1e-4,
            friction: 100.0,
            inv_mass: 1.0,
            steps: 1000,
            decay_factor: 0.1,
            decay_every: 200,
            trace_every: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(CoreError::InvalidConfig {
                what: String::from("sampler: step_size must be finite and ≥ 0"),
            });
        }
        if !(self.friction >= 0.0) {
            return Err(CoreError::InvalidConfig {
                what: String::from("sampler: friction must be ≥ 0"),
            });
        }
        if !(self.inv_mass > 0.0) {
            return Err(CoreError::InvalidConfig {
                what: String::from("sampler: inverse mass must be > 0"),
            });
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(CoreError::InvalidConfig {
                what: String::from("sampler: decay factor must lie in (0, 1]"),
            });
        }
        Ok(())
    }
}

/// A base model re-weighted by an energy at inverse temperature `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gebm {
    pub base: BaseModel,
    pub energy: Energy,
    pub energy_state: EnergyState,
    pub beta: f64,
}

impl Gebm {
    pub fn new(base: BaseModel, energy: Energy, energy_state: EnergyState, beta: f64) -> Self {
        assert_eq!(
            energy.dim(),
            base.data_dim(),
            "energy dimension must match generator output"
        );
        assert!(beta >= 0.0, "inverse temperature must be ≥ 0");
        Gebm {
            base,
            energy,
            energy_state,
            beta,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.base.latent_dim()
    }

    /// `∇_z log ν(z) = ∇_z log η(z) − β·∇_z E(B_θ(z))` for every row of `z`,
    /// with the pullback term computed by one reverse pass through
    /// energy∘generator (rows are independent, so differentiating the sum
    /// yields per-row gradients). At `β = 0` the energy term is skipped.
    pub fn posterior_grad(&self, z: &Tensor) -> Result<Tensor, CoreError> {
        let mut grad = self.base.prior.score(z);
        if self.beta == 0.0 {
            return Ok(grad);
        }
        let mut tape = Tape::new();
        let g_theta = tape.bind_frozen(&self.base.theta);
        let g_psi = tape.bind_frozen(&self.energy_state.psi);
        let zn = tape.input(z.clone());
        let xn = self.base.tape_push(&mut tape, g_theta, zn);
        let en = self.energy.tape_eval(&mut tape, g_psi, xn);
        let root = tape.sum_all(en);
        let grads = tape.backward(root)?;
        if let Some(gz) = grads.wrt(zn) {
            for (g, e) in grad.data_mut().iter_mut().zip(gz.data()) {
                *g -= self.beta * e;
            }
        }
        if !math::all_finite(grad.data()) {
            return Err(CoreError::NonFinite {
                what: "posterior gradient",
            });
        }
        Ok(grad)
    }

    /// `log ν(z)` up to its normalizing constant: `log η(z) − β·E(B(z))`.
    pub fn posterior_log_density_unnorm(&self, z: &Tensor) -> Vec<f64> {
        let mut out = self.base.prior.log_density_rows(z);
        if self.beta != 0.0 {
            let x = self.base.push(z);
            let e = self.energy.eval(&self.energy_state.psi, &x);
            for (o, ei) in out.iter_mut().zip(e) {
                *o -= self.beta * ei;
            }
        }
        out
    }
}

/// One recorded point of a chain trajectory (chain 0 of the batch).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// First (≤ 4) latent coordinates.
    pub z: Vec<f64>,
    /// Unnormalized `log ν` at the recorded latent.
    pub log_nu: f64,
    /// Step size in force at this step.
    pub step_size: f64,
}

/// Final latents/outputs of a batch of chains plus the chain-0 trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainsResult {
    /// `n_chains × q` final latents.
    pub z: Tensor,
    /// `n_chains × d` pushed outputs `B(Z_T)`.
    pub x: Tensor,
    pub trace: Vec<TraceRow>,
}

fn record_trace(gebm: &Gebm, z: &Tensor, step: usize, lam: f64, out: &mut Vec<TraceRow>) {
    let q = z.cols().min(4);
    let one = Tensor::from_vec(1, z.cols(), z.row_slice(0).to_vec());
    let log_nu = gebm.posterior_log_density_unnorm(&one)[0];
    out.push(TraceRow {
        step,
        z: z.row_slice(0)[..q].to_vec(),
        log_nu,
        step_size: lam,
    });
}

/// Gradient evaluation inside a chain loop: an exploding state often turns
/// the gradient non-finite before the state itself does, so both are
/// reported as divergence at the offending step.
fn grad_at_step(gebm: &Gebm, z: &Tensor, step: usize) -> Result<Tensor, CoreError> {
    gebm.posterior_grad(z).map_err(|e| match e {
        CoreError::NonFinite { .. } | CoreError::Overflow { .. } => CoreError::Diverged {
            what: "langevin chain state",
            step,
        },
        other => other,
    })
}

/// Core chain driver shared by both samplers and the diagnostics; `observe`
/// sees the latent batch after initialization (step 0) and after every step.
fn run_chains(
    gebm: &Gebm,
    n_chains: usize,
    config: &SamplerConfig,
    seed: u64,
    mut observe: impl FnMut(usize, &Tensor),
) -> Result<ChainsResult, CoreError> {
    config.validate()?;
    assert!(n_chains >= 1, "need at least one chain");
    let q = gebm.latent_dim();
    let kinetic = config.kind == SamplerKind::Kla;

    // Per-chain RNG streams: chain i uses stream 1 + i.
    let mut rngs: Vec<StreamRng> = (0..n_chains)
        .map(|i| StreamRng::new(seed, 1 + i as u64))
        .collect();

    // Z₀ ∼ η per chain from its own stream; V₀ = 0.
    let mut z = Tensor::zeros(n_chains, q);
    for (i, rng) in rngs.iter_mut().enumerate() {
        let row = gebm.base.prior.sample(1, rng);
        z.row_slice_mut(i).copy_from_slice(row.row_slice(0));
    }
    let mut v = Tensor::zeros(n_chains, q);

    let mut lam = config.step_size;
    let mut trace = Vec::new();
    if config.trace_every > 0 {
        record_trace(gebm, &z, 0, lam, &mut trace);
    }
    observe(0, &z);

    let mut noise = alloc::vec![0.0_f64; q];
    for t in 1..=config.steps {
        if config.decay_every > 0 && t > 1 && (t - 1) % config.decay_every == 0 {
            lam *= config.decay_factor;
        }
        if kinetic {
            // Position half-step with the current momenta.
            for i in 0..n_chains {
                let zi = z.row_slice_mut(i);
                for (zj, vj) in zi.iter_mut().zip(v.row_slice(i)) {
                    *zj += 0.5 * lam * vj;
                }
            }
            // One gradient evaluation at the midpoint position.
            let y = grad_at_step(gebm, &z, t)?;
            let kick = 0.5 * config.inv_mass * lam;
            let ou_decay = math::exp(-config.friction * lam);
            let ou_noise =
                math::sqrt(config.inv_mass * (1.0 - math::exp(-2.0 * config.friction * lam)));
            for i in 0..n_chains {
                let yi = y.row_slice(i);
                let vi = v.row_slice_mut(i);
                for (vj, yj) in vi.iter_mut().zip(yi) {
                    *vj += kick * yj;
                }
                rngs[i].fill_normal(&mut noise);
                for (vj, w) in vi.iter_mut().zip(&noise) {
                    *vj = ou_decay * *vj + ou_noise * w;
                }
                for (vj, yj) in vi.iter_mut().zip(yi) {
                    *vj += kick * yj;
                }
                let zi = z.row_slice_mut(i);
                for (zj, vj) in zi.iter_mut().zip(v.row_slice(i)) {
                    *zj += 0.5 * lam * vj;
                }
            }
        } else {
            let y = grad_at_step(gebm, &z, t)?;
            let nscale = math::sqrt(2.0 * lam);
            for i in 0..n_chains {
                rngs[i].fill_normal(&mut noise);
                let yi = y.row_slice(i);
                let zi = z.row_slice_mut(i);
                for ((zj, yj), w) in zi.iter_mut().zip(yi).zip(&noise) {
                    *zj += lam * yj + nscale * w;
                }
            }
        }
        if !math::all_finite(z.data()) || (kinetic && !math::all_finite(v.data())) {
            return Err(CoreError::Diverged {
                what: "langevin chain state",
                step: t,
            });
        }
        if config.trace_every > 0 && (t % config.trace_every == 0 || t == config.steps) {
            record_trace(gebm, &z, t, lam, &mut trace);
        }
        observe(t, &z);
    }

    let x = gebm.base.push(&z);
    Ok(ChainsResult { z, x, trace })
}

/// Runs `n_chains` independent overdamped chains.
pub fn ula_chains(
    gebm: &Gebm,
    n_chains: usize,
    config: &SamplerConfig,
    seed: u64,
) -> Result<ChainsResult, CoreError> {
    let cfg = SamplerConfig {
        kind: SamplerKind::Ula,
        ..config.clone()
    };
    run_chains(gebm, n_chains, &cfg, seed, |_, _| {})
}

/// Runs `n_chains` independent kinetic chains.
pub fn kla_chains(
    gebm: &Gebm,
    n_chains: usize,
    config: &SamplerConfig,
    seed: u64,
) -> Result<ChainsResult, CoreError> {
    let cfg = SamplerConfig {
        kind: SamplerKind::Kla,
        ..config.clone()
    };
    run_chains(gebm, n_chains, &cfg, seed, |_, _| {})
}

/// Kinetic chains that also return the final momenta (stationarity checks).
pub fn kla_chains_with_momenta(
    gebm: &Gebm,
    n_chains: usize,
    config: &SamplerConfig,
    seed: u64,
) -> Result<(ChainsResult, Tensor), CoreError> {
    // Re-run bookkeeping: the driver owns `v`, so thread it out via a cell.
    let cfg = SamplerConfig {
        kind: SamplerKind::Kla,
        ..config.clone()
    };
    run_chains_with_momenta(gebm, n_chains, &cfg, seed)
}

fn run_chains_with_momenta(
    gebm: &Gebm,
    n_chains: usize,
    config: &SamplerConfig,
    seed: u64,
) -> Result<(ChainsResult, Tensor), CoreError> {
    // Duplicate of the kinetic branch of `run_chains`, kept in lockstep with
    // it by the bit-equality unit test below.
    config.validate()?;
    let q = gebm.latent_dim();
    let mut rngs: Vec<StreamRng> = (0..n_chains)
        .map(|i| StreamRng::new(seed, 1 + i as u64))
        .collect();
    let mut z = Tensor::zeros(n_chains, q);
    for (i, rng) in rngs.iter_mut().enumerate() {
        let row = gebm.base.prior.sample(1, rng);
        z.row_slice_mut(i).copy_from_slice(row.row_slice(0));
    }
    let mut v = Tensor::zeros(n_chains, q);
    let mut lam = config.step_size;
    let mut trace = Vec::new();
    if config.trace_every > 0 {
        record_trace(gebm, &z, 0, lam, &mut trace);
    }
    let mut noise = alloc::vec![0.0_f64; q];
    for t in 1..=config.steps {
        if config.decay_every > 0 && t > 1 && (t - 1) % config.decay_every == 0 {
            lam *= config.decay_factor;
        }
        for i in 0..n_chains {
            let zi = z.row_slice_mut(i);
            for (zj, vj) in zi.iter_mut().zip(v.row_slice(i)) {
                *zj += 0.5 * lam * vj;
            }
        }
        let y = grad_at_step(gebm, &z, t)?;
        let kick = 0.5 * config.inv_mass * lam;
        let ou_decay = math::exp(-config.friction * lam);
        let ou_noise =
            math::sqrt(config.inv_mass * (1.0 - math::exp(-2.0 * config.friction * lam)));
        for i in 0..n_chains {
            let yi = y.row_slice(i);
            let vi = v.row_slice_mut(i);
            for (vj, yj) in vi.iter_mut().zip(yi) {
                *vj += kick * yj;
            }
            rngs[i].fill_normal(&mut noise);
            for (vj, w) in vi.iter_mut().zip(&noise) {
                *vj = ou_decay * *vj + ou_noise * w;
            }
            for (vj, yj) in vi.iter_mut().zip(yi) {
                *vj += kick * yj;
            }
            let zi = z.row_slice_mut(i);
            for (zj, vj) in zi.iter_mut().zip(v.row_slice(i)) {
                *zj += 0.5 * lam * vj;
            }
        }
        if !math::all_finite(z.data()) || !math::all_finite(v.data()) {
            return Err(CoreError::Diverged {
                what: "langevin chain state",
                step: t,
            });
        }
        if config.trace_every > 0 && (t % config.trace_every == 0 || t == config.steps) {
            record_trace(gebm, &z, t, lam, &mut trace);
        }
    }
    let x = gebm.base.push(&z);
    Ok((ChainsResult { z, x, trace }, v))
}

/// Draws `n` model samples: `n` independent chains (kind per config), finals
/// pushed through the generator.
pub fn sample_gebm(
    gebm: &Gebm,
    n: usize,
    config: &SamplerConfig,
    seed: u64,
) -> Result<Tensor, CoreError> {
    let res = run_chains(gebm, n, config, seed, |_, _| {})?;
    Ok(res.x)
}

/// Latent covariance pooled over every chain and every step `t` with
/// `burn_in < t ≤ steps` (about the pooled empirical mean). The pooled
/// count `n_chains · (steps − burn_in)` is returned alongside.
pub fn pooled_moments(
    gebm: &Gebm,
    n_chains: usize,
    config: &SamplerConfig,
    burn_in: usize,
    seed: u64,
) -> Result<(Tensor, usize), CoreError> {
    if burn_in >= config.steps {
        return Err(CoreError::InvalidConfig {
            what: String::from("pooled_moments: burn_in must be < steps"),
        });
    }
    let q = gebm.latent_dim();
    let mut sum = alloc::vec![0.0_f64; q];
    let mut prod = Tensor::zeros(q, q);
    let mut count = 0usize;
    run_chains(gebm, n_chains, config, seed, |t, z| {
        if t <= burn_in {
            return;
        }
        for i in 0..z.rows() {
            let row = z.row_slice(i);
            for (a, ra) in row.iter().enumerate() {
                sum[a] += ra;
                let pa = prod.row_slice_mut(a);
                for (pb, rb) in pa.iter_mut().zip(row) {
                    *pb += ra * rb;
                }
            }
        }
        count += z.rows();
    })?;
    let n = count as f64;
    let mut cov = Tensor::zeros(q, q);
    for a in 0..q {
        for b in 0..q {
            cov.set(a, b, prod.get(a, b) / n - (sum[a] / n) * (sum[b] / n));
        }
    }
    Ok((cov, count))
}

/// Wasserstein-1 decay diagnostic for 1-D models: at each checkpoint `t`,
/// the pooled chain outputs `B(Z_t)` are compared against a reference
/// sample of the exact target by sorted coupling. Returns `(t, W₁)` pairs.
pub fn w1_decay_diagnostic(
    gebm: &Gebm,
    n_chains: usize,
    config: &SamplerConfig,
    checkpoints: &[usize],
    exact_x: &[f64],
    seed: u64,
) -> Result<Vec<(usize, f64)>, CoreError> {
    if gebm.base.data_dim() != 1 {
        return Err(CoreError::InvalidConfig {
            what: String::from("w1 diagnostic requires a 1-D model"),
        });
    }
    if !checkpoints.windows(2).all(|w| w[0] < w[1]) {
        return Err(CoreError::InvalidConfig {
            what: String::from("w1 diagnostic checkpoints must increase"),
        });
    }
    if checkpoints.last().copied().unwrap_or(0) > config.steps {
        return Err(CoreError::InvalidConfig {
            what: String::from("w1 diagnostic checkpoint beyond chain length"),
        });
    }
    let mut series = Vec::with_capacity(checkpoints.len());
    run_chains(gebm, n_chains, config, seed, |t, z| {
        if checkpoints.contains(&t) {
            let x = gebm.base.push(z);
            series.push((t, w1_1d(x.data(), exact_x)));
        }
    })?;
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Activation, Mlp, MlpSpec};
    use crate::params::ParamVector;

    /// Identity generator in `dim` dimensions (linear MLP, W = I, b = 0).
    pub(crate) fn identity_base(dim: usize) -> BaseModel {
        let mlp = Mlp::new(MlpSpec {
            input_dim: dim,
            hidden: alloc::vec![],
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

    pub(crate) fn quadratic_gebm(dim: usize, beta: f64) -> Gebm {
        let energy = Energy::Quadratic { dim, scale: 1.0 };
        let psi = energy.init_params(0);
        Gebm::new(identity_base(dim), energy, EnergyState::new(psi, 0.0), beta)
    }

    #[test]
    fn posterior_grad_at_zero_beta_is_prior_score() {
        let gebm = quadratic_gebm(2, 0.0);
        let z = Tensor::from_vec(2, 2, alloc::vec![0.5, -1.0, 2.0, 0.25]);
        let g = gebm.posterior_grad(&z).unwrap();
        for (gi, zi) in g.data().iter().zip(z.data()) {
            assert_eq!(*gi, -zi);
        }
    }

    #[test]
    fn posterior_grad_quadratic_composite() {
        // E(B(z)) = ½‖z‖², β = 1 → ∇log ν = −2z.
        let gebm = quadratic_gebm(1, 1.0);
        let z = Tensor::col(&[0.7, -0.2, 1.5]);
        let g = gebm.posterior_grad(&z).unwrap();
        for (gi, zi) in g.data().iter().zip(z.data()) {
            assert!((gi + 2.0 * zi).abs() < 1e-14);
        }
    }

    #[test]
    fn posterior_grad_is_affine_in_beta() {
        let mlp = Mlp::new(MlpSpec {
            input_dim: 2,
            hidden: alloc::vec![6],
            output_dim: 2,
            activation: Activation::Tanh,
        });
        let base = BaseModel::new_mlp(mlp, 3);
        let energy = Energy::Mlp(Mlp::new(MlpSpec {
            input_dim: 2,
            hidden: alloc::vec![5],
            output_dim: 1,
            activation: Activation::Tanh,
        }));
        let psi = energy.init_params(4);
        let state = EnergyState::new(psi, 0.0);
        let z = Tensor::from_vec(3, 2, alloc::vec![0.3, -0.6, 1.1, 0.2, -0.4, 0.9]);

        let at = |beta: f64| {
            let g = Gebm::new(base.clone(), energy.clone(), state.clone(), beta);
            g.posterior_grad(&z).unwrap()
        };
        let g0 = at(0.0);
        let g1 = at(1.0);
        let g_half = at(0.5);
        // grad(β) = grad(0) − β·(grad(0) − grad(1)) exactly.
        for i in 0..g0.data().len() {
            let predicted = g0.data()[i] + 0.5 * (g1.data()[i] - g0.data()[i]);
            assert!((g_half.data()[i] - predicted).abs() < 1e-12);
        }
    }

    #[test]
    fn pooled_moments_count_and_covariance() {
        // ν = N(0, ½I); short ULA pooling must land near ½ with an exact
        // pooled count of chains · (steps − burn_in).
        let gebm = quadratic_gebm(2, 1.0);
        let cfg = SamplerConfig {
            kind: SamplerKind::Ula,
            step_size: 5e-3,
            steps: 3000,
            decay_every: 0,
            trace_every: 0,
            ..SamplerConfig::default()
        };
        let (cov, count) = pooled_moments(&gebm, 100, &cfg, 1000, 7).unwrap();
        assert_eq!(count, 100 * 2000);
        for i in 0..2 {
            assert!(
                (cov.get(i, i) - 0.5).abs() < 0.05,
                "pooled var {}",
                cov.get(i, i)
            );
        }
        assert!(cov.get(0, 1).abs() < 0.05);
        assert_eq!(cov.get(0, 1), cov.get(1, 0));
    }

    #[test]
    fn pooled_moments_rejects_burn_in_past_the_chain() {
        let gebm = quadratic_gebm(2, 1.0);
        let cfg = SamplerConfig {
            steps: 10,
            ..SamplerConfig::default()
        };
        let r = pooled_moments(&gebm, 3, &cfg, 10, 0);
        assert!(matches!(r, Err(CoreError::InvalidConfig { .. })));
    }

    #[test]
    fn zero_step_size_freezes_the_chain() {
        let gebm = quadratic_gebm(2, 1.0);
        let cfg = SamplerConfig {
            kind: SamplerKind::Ula,
            step_size: 0.0,
            steps: 50,
            decay_every: 0,
            trace_every: 0,
            ..SamplerConfig::default()
        };
        let res = ula_chains(&gebm, 4, &cfg, 7).unwrap();
        // Z_T must equal Z₀ bit for bit.
        let mut rng = StreamRng::new(7, 1);
        let z0 = gebm.base.prior.sample(1, &mut rng);
        assert_eq!(res.z.row_slice(0), z0.row_slice(0));
    }

    #[test]
    fn batched_chains_match_standalone_chains_bitwise() {
        let gebm = quadratic_gebm(2, 1.0);
        let cfg = SamplerConfig {
            kind: SamplerKind::Kla,
            step_size: 0.01,
            friction: 1.0,
            inv_mass: 1.0,
            steps: 200,
            decay_factor: 0.5,
            decay_every: 50,
            trace_every: 0,
        };
        let batch = kla_chains(&gebm, 5, &cfg, 42).unwrap();
        let solo = kla_chains(&gebm, 1, &cfg, 42).unwrap();
        assert_eq!(batch.z.row_slice(0), solo.z.row_slice(0));
        let tri = kla_chains(&gebm, 3, &cfg, 42).unwrap();
        for i in 0..3 {
            for (a, b) in batch.z.row_slice(i).iter().zip(tri.z.row_slice(i)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // Same for the overdamped driver.
        let cfg_u = SamplerConfig {
            kind: SamplerKind::Ula,
            ..cfg
        };
        let bu = ula_chains(&gebm, 4, &cfg_u, 9).unwrap();
        let su = ula_chains(&gebm, 1, &cfg_u, 9).unwrap();
        assert_eq!(bu.z.row_slice(0), su.z.row_slice(0));
    }

    #[test]
    fn momenta_runner_matches_plain_kinetic_runner() {
        let gebm = quadratic_gebm(2, 1.0);
        let cfg = SamplerConfig {
            kind: SamplerKind::Kla,
            step_size: 0.02,
            friction: 2.0,
            inv_mass: 1.5,
            steps: 150,
            decay_factor: 1.0,
            decay_every: 0,
            trace_every: 25,
        };
        let plain = kla_chains(&gebm, 3, &cfg, 5).unwrap();
        let (with_v, v) = kla_chains_with_momenta(&gebm, 3, &cfg, 5).unwrap();
        assert_eq!(plain, with_v);
        assert_eq!(v.rows(), 3);
    }

    #[test]
    fn decay_schedule_multiplies_at_intervals() {
        let gebm = quadratic_gebm(1, 0.0);
        let cfg = SamplerConfig {
            kind: SamplerKind::Ula,
            step_size: 1e-3,
            steps: 600,
            decay_factor: 0.1,
            decay_every: 200,
            trace_every: 200,
            ..SamplerConfig::default()
        };
        let res = ula_chains(&gebm, 1, &cfg, 1).unwrap();
        let sizes: Vec<f64> = res.trace.iter().map(|r| r.step_size).collect();
        // Rows at steps 0, 200, 400, 600: 200 steps ran at each size.
        assert_eq!(res.trace[0].step, 0);
        assert_eq!(sizes[0], 1e-3);
        assert!((sizes[1] - 1e-3).abs() < 1e-18); // step 200 still at λ₀
        assert!((sizes[2] - 1e-4).abs() < 1e-18);
        assert!((sizes[3] - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn ou_factor_limit_refreshes_momentum() {
        // γλ → ∞: e^{−γλ} → 0 and the noise scale → √u.
        let lam = 1.0_f64;
        let gamma = 1e4_f64;
        let u = 2.0_f64;
        let decay = math::exp(-gamma * lam);
        let scale = math::sqrt(u * (1.0 - math::exp(-2.0 * gamma * lam)));
        assert!(decay < 1e-300);
        assert!((scale - math::sqrt(u)).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = SamplerConfig {
            step_size: -1.0,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig {
            inv_mass: 0.0,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig {
            decay_factor: 0.0,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig {
            decay_factor: 1.5,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(SamplerConfig::default().validate().is_ok());
    }

    #[test]
    fn trace_records_log_nu_and_coords() {
        let gebm = quadratic_gebm(2, 1.0);
        let cfg = SamplerConfig {
            kind: SamplerKind::Ula,
            step_size: 5e-3,
            steps: 40,
            decay_every: 0,
            trace_every: 10,
            ..SamplerConfig::default()
        };
        let res = ula_chains(&gebm, 2, &cfg, 3).unwrap();
        assert_eq!(res.trace.len(), 5); // steps 0, 10, 20, 30, 40
        for row in &res.trace {
            assert_eq!(row.z.len(), 2);
            // log ν = log η − ‖z‖²/2 up to the Gaussian constant.
            let z2: f64 = row.z.iter().map(|v| v * v).sum();
            let expect = -z2 - 1.8378770664093453;
            assert!((row.log_nu - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn diverging_chain_reports_step_index() {
        // A huge step size on a steep quadratic blows up deterministically.
        let energy = Energy::Quadratic { dim: 1, scale: 1e8 };
        let psi = energy.init_params(0);
        let gebm = Gebm::new(identity_base(1), energy, EnergyState::new(psi, 0.0), 1.0);
        let cfg = SamplerConfig {
            kind: SamplerKind::Ula,
            step_size: 10.0,
            steps: 100,
            decay_every: 0,
            trace_every: 0,
            ..SamplerConfig::default()
        };
        match ula_chains(&gebm, 1, &cfg, 0) {
            Err(CoreError::Diverged { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
