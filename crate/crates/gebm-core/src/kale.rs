//! KALE objectives and gradients.
//!
//! KALE (KL Approximate Lower-bound Estimate) measures the divergence between
//! a data distribution `P` and a base `B` by maximizing a Donsker–Varadhan
//! style functional over an energy family:
//!
//! * [`dv_estimate`] — the plug-in estimator
//!   `−mean E(X) − (logsumexp(−E(Y)) − ln M)`;
//! * [`f_objective`] — the variational form
//!   `F̂(E+A) = −mean(E(X)+A) − mean exp(−(E(Y)+A)) + 1`, which lower-bounds
//!   the DV estimate for every `A` and touches it exactly at the empirical
//!   log-partition `Ã = logsumexp(−E(Y)) − ln M`;
//! * [`amortized_a_update`] — a damped Newton step on `A` that tracks `Ã`
//!   across minibatches without re-solving per batch;
//! * [`energy_loss_grad`] — the regularized energy-ascent gradient
//!   `g_ψ = −∇_ψ F̂ + λ_reg ∇_ψ I(ψ)²`, `g_A = exp(A−Ã) − 1`;
//! * [`base_gradient`] — the generator gradient taken through a frozen
//!   critic, `∇_θ [−logsumexp(−Ê*(B_θ(Z)))]`;
//! * [`kale`] / [`kale_fixed_samples`] — the full inner maximization loop.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::math;
use crate::models::{BaseModel, Energy};
use crate::opt::{clip_grad_norm, Adam, AdamConfig};
use crate::params::ParamVector;
use crate::rng::StreamRng;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// The trainable energy side of a GEBM: parameters `ψ` plus the scalar
/// variational log-partition estimate `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyState {
    pub psi: ParamVector,
    pub a: f64,
}

impl EnergyState {
    pub fn new(psi: ParamVector, a: f64) -> Self {
        EnergyState { psi, a }
    }
}

/// Configuration of the energy regularizer
/// `I(ψ)² = ‖ψ‖²/d_ψ + mean_probe ‖∇_x E_ψ‖²`.
///
/// The probe batch is a mixture of data and base rows; `penalty_mixing` is
/// the fraction taken from the data side. The ψ-gradient of the probe term
/// is approximated by symmetric finite differences of step `fd_step` along
/// the current loss-gradient direction (two extra evaluations), since the
/// tape has no second-order mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerConfig {
    pub weight: f64,
    pub l2_enabled: bool,
    pub grad_penalty_enabled: bool,
    pub penalty_mixing: f64,
    pub fd_step: f64,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        RegularizerConfig {
            weight: 0.1,
            l2_enabled: true,
            grad_penalty_enabled: true,
            penalty_mixing: 0.5,
            fd_step: 1e-4,
        }
    }
}

impl RegularizerConfig {
    /// No regularization at all; losses reduce exactly to the bare objective.
    pub fn off() -> Self {
        RegularizerConfig {
            weight: 0.0,
            ..Default::default()
        }
    }

    pub fn with_weight(weight: f64) -> Self {
        RegularizerConfig {
            weight,
            ..Default::default()
        }
    }
}

/// Settings for the inner maximization loop of [`kale`].
#[derive(Debug, Clone, PartialEq)]
pub struct KaleOptConfig {
    /// Number of gradient steps on `ψ`.
    pub steps: usize,
    /// Adam learning rate for `ψ`.
    pub lr: f64,
    /// Step size for the amortized `A` update.
    pub lr_a: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Rows drawn from the data set per step.
    pub batch_n: usize,
    /// Rows drawn from the base per step.
    pub batch_m: usize,
    /// Base rows used for the final value evaluation.
    pub eval_m: usize,
    /// Global gradient-norm clip for `g_ψ`.
    pub clip_norm: f64,
    pub seed: u64,
    pub reg: RegularizerConfig,
    /// Trace every this-many steps (first and last step always traced).
    pub trace_every: usize,
}

impl Default for KaleOptConfig {
    fn default() -> Self {
        KaleOptConfig {
            steps: 400,
            lr: 1e-3,
            lr_a: 0.05,
            beta1: 0.5,
            beta2: 0.9,
            batch_n: 100,
            batch_m: 200,
            eval_m: 2000,
            clip_norm: 10.0,
            seed: 0,
            reg: RegularizerConfig::default(),
            trace_every: 10,
        }
    }
}

/// One objective-trace sample from the inner loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub f_hat: f64,
    pub a: f64,
    pub a_tilde: f64,
}

/// Result of the inner maximization: the final objective value on the
/// evaluation batches, the optimized energy state, and the step trace.
#[derive(Debug, Clone, PartialEq)]
pub struct KaleEstimate {
    pub value: f64,
    pub energy_state: EnergyState,
    pub objective_trace: Vec<TraceRow>,
}

/// A diverged or failed inner loop, with the trace collected up to the abort.
#[derive(Debug, Clone, PartialEq)]
pub struct KaleFailure {
    pub error: CoreError,
    pub trace: Vec<TraceRow>,
}

impl core::fmt::Display for KaleFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "kale optimization aborted: {}", self.error)
    }
}

fn require_nonempty(x: &Tensor, y: &Tensor, op: &str) -> Result<(), CoreError> {
    if x.rows() == 0 || y.rows() == 0 {
        let mut what = String::from(op);
        what.push_str(": empty batch");
        return Err(CoreError::InvalidConfig { what });
    }
    Ok(())
}

/// The plug-in divergence estimator
/// `−mean E(X) − (logsumexp(−E(Y)) − ln M)`, computed through the stabilized
/// logsumexp primitive. Invariant under constant shifts of `E`.
pub fn dv_estimate(
    energy: &Energy,
    psi: &ParamVector,
    x: &Tensor,
    y: &Tensor,
) -> Result<f64, CoreError> {
    require_nonempty(x, y, "dv_estimate")?;
    let ex = energy.eval(psi, x);
    if !math::all_finite(&ex) {
        return Err(CoreError::NonFinite {
            what: "energy values on data batch",
        });
    }
    let at = a_tilde(energy, psi, y)?;
    Ok(-math::mean(&ex) - at)
}

/// Empirical log-partition `Ã = logsumexp(−E(Y)) − ln M` on a base batch.
pub fn a_tilde(energy: &Energy, psi: &ParamVector, y: &Tensor) -> Result<f64, CoreError> {
    if y.rows() == 0 {
        return Err(CoreError::InvalidConfig {
            what: String::from("a_tilde: empty batch"),
        });
    }
    let ey = energy.eval(psi, y);
    if !math::all_finite(&ey) {
        return Err(CoreError::NonFinite {
            what: "energy values on base batch",
        });
    }
    let neg: Vec<f64> = ey.iter().map(|v| -v).collect();
    Ok(math::logsumexp(&neg) - math::ln(y.rows() as f64))
}

/// The variational objective
/// `F̂(E+A) = −mean(E(X)+A) − mean exp(−(E(Y)+A)) + 1`.
///
/// The exponential is not clamped: an argument beyond the float-64 range is
/// reported as an overflow error, since it signals a grossly mis-scaled `A`.
pub fn f_objective(
    energy: &Energy,
    psi: &ParamVector,
    a: f64,
    x: &Tensor,
    y: &Tensor,
) -> Result<f64, CoreError> {
    require_nonempty(x, y, "f_objective")?;
    let ex = energy.eval(psi, x);
    let ey = energy.eval(psi, y);
    if !math::all_finite(&ex) || !math::all_finite(&ey) || !a.is_finite() {
        return Err(CoreError::NonFinite {
            what: "f_objective inputs",
        });
    }
    let mut sum = 0.0;
    for (i, e) in ey.iter().enumerate() {
        let t = -(e + a);
        if t > math::EXP_OVERFLOW {
            return Err(CoreError::Overflow {
                op: "f_objective exp",
                node: i,
            });
        }
        sum += math::exp(t);
    }
    Ok(-(math::mean(&ex) + a) - sum / ey.len() as f64 + 1.0)
}

/// One amortized update of the log-partition estimate.
///
/// Computes `Ã` on the fresh base batch and applies
/// `A ← A − lr·(exp(A−Ã) − 1)`; with `a = None` (first call) it initializes
/// `A₀ = Ã₀` instead. Returns `(A_new, Ã)`.
pub fn amortized_a_update(
    a: Option<f64>,
    energy: &Energy,
    psi: &ParamVector,
    y: &Tensor,
    lr: f64,
) -> Result<(f64, f64), CoreError> {
    if !(lr > 0.0) {
        return Err(CoreError::InvalidConfig {
            what: String::from("amortized_a_update: lr must be positive"),
        });
    }
    let at = a_tilde(energy, psi, y)?;
    match a {
        None => Ok((at, at)),
        Some(a) => {
            let g = a_grad(a, at)?;
            Ok((a - lr * g, at))
        }
    }
}

/// `g_A = exp(A−Ã) − 1`, the damped-Newton direction on `A`.
fn a_grad(a: f64, at: f64) -> Result<f64, CoreError> {
    let d = a - at;
    if d > math::EXP_OVERFLOW {
        return Err(CoreError::Overflow {
            op: "a_update exp",
            node: 0,
        });
    }
    Ok(math::exp(d) - 1.0)
}

/// Probe-batch mean of `‖∇_x E_ψ(x)‖²`, via tape input gradients.
/// Constant energies (no path from input to output) contribute zero.
fn probe_grad_sqnorm_mean(
    energy: &Energy,
    psi: &ParamVector,
    probe: &Tensor,
) -> Result<f64, CoreError> {
    let mut tape = Tape::new();
    let g = tape.bind_frozen(psi);
    let xn = tape.input(probe.clone());
    let e = energy.tape_eval(&mut tape, g, xn);
    let root = tape.sum_all(e);
    let grads = tape.backward(root)?;
    match grads.wrt(xn) {
        None => Ok(0.0),
        Some(gx) => {
            let mut acc = 0.0;
            for i in 0..gx.rows() {
                acc += gx.row_slice(i).iter().map(|v| v * v).sum::<f64>();
            }
            Ok(acc / gx.rows() as f64)
        }
    }
}

/// The regularizer value `I(ψ)² = ‖ψ‖²/d_ψ + mean_probe ‖∇_x E_ψ‖²` (the
/// expectation replaced by the probe-batch mean). Parameter-free families
/// contribute no `‖ψ‖²` term.
pub fn regularizer(
    energy: &Energy,
    psi: &ParamVector,
    probe: &Tensor,
) -> Result<f64, CoreError> {
    if probe.rows() == 0 {
        return Err(CoreError::InvalidConfig {
            what: String::from("regularizer: empty probe batch"),
        });
    }
    let l2 = if psi.is_empty() {
        0.0
    } else {
        let ss: f64 = psi.data().iter().map(|v| v * v).sum();
        ss / psi.len() as f64
    };
    Ok(l2 + probe_grad_sqnorm_mean(energy, psi, probe)?)
}

/// Output of [`energy_loss_grad`]: the descent direction for `ψ`, the `A`
/// gradient, and the diagnostics evaluated along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrads {
    /// `−∇_ψ F̂ + λ_reg ∇_ψ I(ψ)²` (descend this to ascend the objective).
    pub g_psi: ParamVector,
    /// `exp(A−Ã) − 1`.
    pub g_a: f64,
    /// `F̂(E_ψ+A)` on the given batches.
    pub f_value: f64,
    /// `Ã` on the given base batch.
    pub a_tilde: f64,
    /// `I(ψ)²` value (0 when the regularizer is fully disabled).
    pub penalty: f64,
}

/// Builds `F̂` on a tape (at fixed `A`) and returns its value together with
/// `∇_ψ F̂`.
fn f_objective_grad(
    energy: &Energy,
    state: &EnergyState,
    x: &Tensor,
    y: &Tensor,
) -> Result<(f64, ParamVector), CoreError> {
    let mut tape = Tape::new();
    let g = tape.bind(&state.psi);
    let xn = tape.constant(x.clone());
    let yn = tape.constant(y.clone());
    let ex = energy.tape_eval(&mut tape, g, xn);
    let ey = energy.tape_eval(&mut tape, g, yn);
    let mean_ex = tape.mean_all(ex);
    let eya = tape.add_const(ey, state.a);
    let neg = tape.neg(eya);
    let ee = tape.exp(neg);
    let mean_ee = tape.mean_all(ee);
    let s = tape.add(mean_ex, mean_ee);
    let ns = tape.neg(s);
    let root = tape.add_const(ns, 1.0 - state.a);
    let value = tape.scalar(root)?;
    let grads = tape.backward(root)?;
    Ok((value, tape.group_grad(&grads, g)))
}

/// The regularized energy-training gradient (one Alg.-style energy step's
/// worth of derivatives, without applying any update).
///
/// `g_ψ = −∇_ψ F̂(E_ψ+A) + λ_reg ∇_ψ I(ψ)²` where the probe-gradient part of
/// `∇I²` uses the finite-difference surrogate described on
/// [`RegularizerConfig`]; `g_A = exp(A−Ã) − 1` with `Ã` from `y_batch`.
pub fn energy_loss_grad(
    energy: &Energy,
    state: &EnergyState,
    x: &Tensor,
    y: &Tensor,
    probe: &Tensor,
    reg: &RegularizerConfig,
) -> Result<EnergyGrads, CoreError> {
    require_nonempty(x, y, "energy_loss_grad")?;
    let (f_value, df) = f_objective_grad(energy, state, x, y)?;
    // Base loss gradient: descend −F̂.
    let mut g_psi = df;
    g_psi.scale(-1.0);

    let mut penalty = 0.0;
    if reg.weight != 0.0 && (reg.l2_enabled || reg.grad_penalty_enabled) {
        let d_psi = state.psi.len();
        // The surrogate below perturbs along the bare loss direction, so
        // capture it before any regularizer contribution lands in g_ψ.
        let dir = g_psi.clone();
        if reg.l2_enabled && d_psi > 0 {
            let inv_d = 1.0 / d_psi as f64;
            let ss: f64 = state.psi.data().iter().map(|v| v * v).sum();
            penalty += ss * inv_d;
            for (gv, pv) in g_psi.data_mut().iter_mut().zip(state.psi.data()) {
                *gv += reg.weight * 2.0 * pv * inv_d;
            }
        }
        if reg.grad_penalty_enabled {
            if probe.rows() == 0 {
                return Err(CoreError::InvalidConfig {
                    what: String::from("energy_loss_grad: empty probe batch"),
                });
            }
            penalty += probe_grad_sqnorm_mean(energy, &state.psi, probe)?;
            if d_psi > 0 {
                // Directional surrogate: perturb ψ along the unit loss
                // direction u, estimate the directional derivative of the
                // probe term, and credit it back along u.
                let norm = dir.l2_norm();
                if norm > 0.0 {
                    let h = reg.fd_step;
                    let mut plus = state.psi.clone();
                    plus.axpy(h / norm, &dir);
                    let mut minus = state.psi.clone();
                    minus.axpy(-h / norm, &dir);
                    let fp = probe_grad_sqnorm_mean(energy, &plus, probe)?;
                    let fm = probe_grad_sqnorm_mean(energy, &minus, probe)?;
                    let slope = (fp - fm) / (2.0 * h);
                    g_psi.axpy(reg.weight * slope / norm, &dir);
                }
            }
        }
    }

    let at = a_tilde(energy, &state.psi, y)?;
    let g_a = a_grad(state.a, at)?;
    Ok(EnergyGrads {
        g_psi,
        g_a,
        f_value,
        a_tilde: at,
        penalty,
    })
}

/// Generator gradient with a frozen critic.
///
/// Differentiates the scalar `−logsumexp(−Ê*(B_θ(Z_{1:M})))` with respect to
/// `θ`; this equals the importance-weighted estimator built from the
/// empirical log-partition `Â* ` on the same latents. Returns the gradient
/// and the objective piece `−Ã(θ) = −logsumexp(−Ê*(B_θ(Z))) + ln M`.
pub fn base_gradient(
    base: &BaseModel,
    energy: &Energy,
    psi_hat: &ParamVector,
    z: &Tensor,
) -> Result<(ParamVector, f64), CoreError> {
    if z.rows() == 0 {
        return Err(CoreError::InvalidConfig {
            what: String::from("base_gradient: empty latent batch"),
        });
    }
    let mut tape = Tape::new();
    let gt = tape.bind(&base.theta);
    let gf = tape.bind_frozen(psi_hat);
    let zn = tape.constant(z.clone());
    let xn = base.tape_push(&mut tape, gt, zn);
    let en = energy.tape_eval(&mut tape, gf, xn);
    let neg = tape.neg(en);
    let lse = tape.logsumexp_all(neg);
    let root = tape.neg(lse);
    let value = tape.scalar(root)? + math::ln(z.rows() as f64);
    let grads = tape.backward(root)?;
    Ok((tape.group_grad(&grads, gt), value))
}

/// Draws `k` rows from `t` uniformly with replacement.
pub(crate) fn sample_rows(t: &Tensor, k: usize, rng: &mut StreamRng) -> Tensor {
    let n = t.rows();
    let idx: Vec<usize> = (0..k).map(|_| rng.below(n)).collect();
    t.select_rows(&idx)
}

/// Builds the penalty probe batch: a `mixing`-weighted mixture of data-batch
/// and base-batch rows (row counts rounded; rows reused cyclically if a side
/// is short).
pub(crate) fn mix_probe(xb: &Tensor, yb: &Tensor, mixing: f64) -> Tensor {
    let total = xb.rows();
    let k = ((mixing * total as f64) + 0.5) as usize;
    let k = k.min(total);
    let mut out = Tensor::zeros(total, xb.cols());
    for i in 0..k {
        out.row_slice_mut(i).copy_from_slice(xb.row_slice(i % xb.rows()));
    }
    for i in k..total {
        out.row_slice_mut(i)
            .copy_from_slice(yb.row_slice((i - k) % yb.rows()));
    }
    out
}

enum YSource<'a> {
    Base(&'a BaseModel),
    Fixed(&'a Tensor),
}

fn run_kale(
    x: &Tensor,
    ysrc: YSource<'_>,
    energy: &Energy,
    cfg: &KaleOptConfig,
) -> Result<KaleEstimate, KaleFailure> {
    let mut trace: Vec<TraceRow> = Vec::new();
    match run_kale_inner(x, ysrc, energy, cfg, &mut trace) {
        Ok((value, state)) => Ok(KaleEstimate {
            value,
            energy_state: state,
            objective_trace: trace,
        }),
        Err(error) => Err(KaleFailure { error, trace }),
    }
}

fn run_kale_inner(
    x: &Tensor,
    ysrc: YSource<'_>,
    energy: &Energy,
    cfg: &KaleOptConfig,
    trace: &mut Vec<TraceRow>,
) -> Result<(f64, EnergyState), CoreError> {
    if cfg.batch_n == 0 || cfg.batch_m == 0 || x.rows() == 0 {
        return Err(CoreError::InvalidConfig {
            what: String::from("kale: empty batch configuration"),
        });
    }
    let mut rng = StreamRng::new(cfg.seed, 0);
    let mut state = EnergyState::new(energy.init_params(cfg.seed), 0.0);
    let dim = state.psi.len();
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: 1e-8,
        },
        dim,
    );
    let mut a_initialized = false;
    for step in 1..=cfg.steps {
        let xb = sample_rows(x, cfg.batch_n, &mut rng);
        let yb = match ysrc {
            YSource::Base(b) => b.sample(cfg.batch_m, &mut rng).1,
            YSource::Fixed(y) => sample_rows(y, cfg.batch_m, &mut rng),
        };
        if !a_initialized {
            state.a = a_tilde(energy, &state.psi, &yb)?;
            a_initialized = true;
        }
        let probe = mix_probe(&xb, &yb, cfg.reg.penalty_mixing);
        let grads = energy_loss_grad(energy, &state, &xb, &yb, &probe, &cfg.reg)?;
        if !grads.f_value.is_finite() {
            return Err(CoreError::Diverged {
                what: "kale objective",
                step,
            });
        }
        let mut g = grads.g_psi;
        clip_grad_norm(&mut g, cfg.clip_norm);
        adam.step(&mut state.psi, &g, 1.0);
        state.a -= cfg.lr_a * grads.g_a;
        if !state.a.is_finite() {
            return Err(CoreError::Diverged {
                what: "log-partition estimate",
                step,
            });
        }
        if step == 1 || step == cfg.steps || step % cfg.trace_every.max(1) == 0 {
            trace.push(TraceRow {
                step,
                f_hat: grads.f_value,
                a: state.a,
                a_tilde: grads.a_tilde,
            });
        }
    }
    // Final value on the full data set against a fresh (or the fixed) base set.
    let value = match ysrc {
        YSource::Base(b) => {
            let y_eval = b.sample(cfg.eval_m, &mut rng).1;
            f_objective(energy, &state.psi, state.a, x, &y_eval)?
        }
        YSource::Fixed(y) => f_objective(energy, &state.psi, state.a, x, y)?,
    };
    Ok((value, state))
}

/// Runs the inner maximization of the variational objective over the energy
/// family by stochastic gradient ascent with amortized `A`, drawing fresh
/// base batches each step.
pub fn kale(
    x_samples: &Tensor,
    base: &BaseModel,
    energy_family: &Energy,
    opt: &KaleOptConfig,
) -> Result<KaleEstimate, KaleFailure> {
    run_kale(x_samples, YSource::Base(base), energy_family, opt)
}

/// Same as [`kale`] but with a fixed base sample set (two-sample form);
/// batches are subsampled from `y_samples` and the final value is evaluated
/// on the full fixed sets.
pub fn kale_fixed_samples(
    x_samples: &Tensor,
    y_samples: &Tensor,
    energy_family: &Energy,
    opt: &KaleOptConfig,
) -> Result<KaleEstimate, KaleFailure> {
    run_kale(x_samples, YSource::Fixed(y_samples), energy_family, opt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Activation, Mlp, MlpSpec};
    use alloc::vec;

    fn batches() -> (Tensor, Tensor) {
        let mut rng = StreamRng::new(11, 0);
        let mut x = Tensor::zeros(8, 2);
        rng.fill_normal(x.data_mut());
        let mut y = Tensor::zeros(13, 2);
        rng.fill_normal(y.data_mut());
        (x, y)
    }

    #[test]
    fn zero_energy_gives_zero_dv() {
        let (x, y) = batches();
        let e = Energy::Zero { dim: 2 };
        let v = dv_estimate(&e, &ParamVector::empty(), &x, &y).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn dv_is_shift_invariant_for_constant_energy() {
        // E ≡ c. The X term contributes −c, the logsumexp term +c.
        let (x, y) = batches();
        let e = Energy::Quadratic { dim: 2, scale: 0.0 };
        let v0 = dv_estimate(&e, &ParamVector::empty(), &x, &y).unwrap();
        assert!(v0.abs() < 1e-15);
    }

    #[test]
    fn f_objective_trivial_cases() {
        let (x, y) = batches();
        let e = Energy::Zero { dim: 2 };
        let p = ParamVector::empty();
        assert_eq!(f_objective(&e, &p, 0.0, &x, &y).unwrap(), 0.0);
        // A = Ã reproduces the DV estimate.
        let at = a_tilde(&e, &p, &y).unwrap();
        let f = f_objective(&e, &p, at, &x, &y).unwrap();
        let dv = dv_estimate(&e, &p, &x, &y).unwrap();
        assert!((f - dv).abs() < 1e-14);
    }

    #[test]
    fn f_objective_overflow_is_an_error() {
        let (x, y) = batches();
        let e = Energy::Zero { dim: 2 };
        let r = f_objective(&e, &ParamVector::empty(), -800.0, &x, &y);
        assert!(matches!(r, Err(CoreError::Overflow { .. })));
    }

    #[test]
    fn amortized_update_arithmetic() {
        let (_, y) = batches();
        let e = Energy::Zero { dim: 2 };
        let p = ParamVector::empty();
        // First call initializes A = Ã = 0 for the zero energy.
        let (a0, at0) = amortized_a_update(None, &e, &p, &y, 1.0).unwrap();
        assert_eq!(a0, 0.0);
        assert_eq!(at0, 0.0);
        // Fixed point: A = Ã stays put.
        let (a1, _) = amortized_a_update(Some(0.0), &e, &p, &y, 1.0).unwrap();
        assert_eq!(a1, 0.0);
        // A = Ã + ln 2 with lr 1 → A − 1.
        let ln2 = math::ln(2.0);
        let (a2, _) = amortized_a_update(Some(ln2), &e, &p, &y, 1.0).unwrap();
        assert!((a2 - (ln2 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn regularizer_linear_energy_closed_form() {
        // E(x) = wᵀx + b with w=(1,1), b=0: the probe term is ‖w‖² exactly.
        let mlp = Mlp::new(MlpSpec {
            input_dim: 2,
            hidden: vec![],
            output_dim: 1,
            activation: Activation::Tanh,
        });
        let e = Energy::Mlp(mlp);
        let mut psi = e.init_params(0);
        psi.block_slice_mut(0).copy_from_slice(&[1.0, 1.0]);
        psi.block_slice_mut(1)[0] = 0.0;
        let (x, _) = batches();
        let v = regularizer(&e, &psi, &x).unwrap();
        let d = psi.len() as f64;
        assert!((v - (2.0 / d + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn regularizer_vanishes_for_constant_energy() {
        let (x, _) = batches();
        let e = Energy::Zero { dim: 2 };
        assert_eq!(regularizer(&e, &ParamVector::empty(), &x).unwrap(), 0.0);
    }

    #[test]
    fn doubling_reg_weight_doubles_the_reg_part() {
        let (x, y) = batches();
        let e = Energy::Mlp(Mlp::new(MlpSpec {
            input_dim: 2,
            hidden: vec![6],
            output_dim: 1,
            activation: Activation::Tanh,
        }));
        let state = EnergyState::new(e.init_params(3), 0.1);
        let probe = mix_probe(&x, &y, 0.5);
        let g0 = energy_loss_grad(&e, &state, &x, &y, &probe, &RegularizerConfig::off())
            .unwrap()
            .g_psi;
        let g1 = energy_loss_grad(&e, &state, &x, &y, &probe, &RegularizerConfig::with_weight(0.1))
            .unwrap()
            .g_psi;
        let g2 = energy_loss_grad(&e, &state, &x, &y, &probe, &RegularizerConfig::with_weight(0.2))
            .unwrap()
            .g_psi;
        for ((a, b), c) in g0.data().iter().zip(g1.data()).zip(g2.data()) {
            let r1 = b - a;
            let r2 = c - a;
            assert!((r2 - 2.0 * r1).abs() < 1e-12 * (1.0 + r1.abs()));
        }
    }

    #[test]
    fn g_a_zero_at_matched_log_partition() {
        let (x, y) = batches();
        let e = Energy::Zero { dim: 2 };
        let state = EnergyState::new(ParamVector::empty(), 0.0);
        let probe = mix_probe(&x, &y, 0.5);
        let g = energy_loss_grad(&e, &state, &x, &y, &probe, &RegularizerConfig::off()).unwrap();
        assert_eq!(g.g_a, 0.0);
        assert!(g.g_psi.is_empty());
    }

    #[test]
    fn constant_energy_gives_zero_base_gradient() {
        let mlp = Mlp::new(MlpSpec {
            input_dim: 1,
            hidden: vec![4],
            output_dim: 1,
            activation: Activation::Tanh,
        });
        let base = BaseModel::new_mlp(mlp, 7);
        let e = Energy::Zero { dim: 1 };
        let mut rng = StreamRng::new(3, 0);
        let z = base.sample_latent(16, &mut rng);
        let (g, v) = base_gradient(&base, &e, &ParamVector::empty(), &z).unwrap();
        assert!(g.data().iter().all(|v| *v == 0.0));
        assert_eq!(v, 0.0);
    }

    #[test]
    fn zero_family_kale_value_is_exactly_zero() {
        let (x, _) = batches();
        let mlp = Mlp::new(MlpSpec {
            input_dim: 2,
            hidden: vec![],
            output_dim: 2,
            activation: Activation::Tanh,
        });
        let base = BaseModel::new_mlp(mlp, 1);
        let e = Energy::Zero { dim: 2 };
        let cfg = KaleOptConfig {
            steps: 5,
            ..Default::default()
        };
        let est = kale(&x, &base, &e, &cfg).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.energy_state.a, 0.0);
        assert!(!est.objective_trace.is_empty());
    }

    #[test]
    fn probe_mixture_takes_rows_from_both_sides() {
        let xb = Tensor::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let yb = Tensor::from_vec(2, 1, vec![-1.0, -2.0]);
        let p = mix_probe(&xb, &yb, 0.5);
        assert_eq!(p.data(), &[1.0, 2.0, -1.0, -2.0]);
        let p_all_x = mix_probe(&xb, &yb, 1.0);
        assert_eq!(p_all_x.data(), &[1.0, 2.0, 3.0, 4.0]);
    }
}
