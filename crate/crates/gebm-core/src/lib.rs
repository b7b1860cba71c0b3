//! Generalized energy-based models, desk scale.
//!
//! A generalized energy-based model (GEBM) couples a trainable *base*
//! distribution `B` (a latent prior pushed through a generator) with a
//! trainable *energy* `E` that re-weights the base:
//!
//! ```text
//! Q(dx) = exp(-E(x) - A) B(dx),      A = log ∫ exp(-E) dB.
//! ```
//!
//! This crate implements the full numeric stack needed to train and sample
//! such models with `f64` precision and bit-reproducible results:
//!
//! * [`tape`] — a small reverse-mode automatic differentiation engine over
//!   dense matrices (define-by-run, tape rebuilt per evaluation),
//! * [`models`] — MLP generators/energies, Gaussian priors, and Real NVP
//!   flows with exact log-densities,
//! * [`kale`] — the KALE divergence (a Donsker–Varadhan-style lower bound on
//!   KL with a variational log-partition) and the gradients used to train
//!   energies and bases against it,
//! * [`rkhs`] — the closed-form kernel version of KALE solved by a damped
//!   Newton method on an M-dimensional dual,
//! * [`samplers`] — overdamped and kinetic Langevin samplers over the latent
//!   posterior, with inverse-temperature scaling of the energy,
//! * [`training`] — Adam-based alternating training of base and energy,
//!   maximum-likelihood and contrastive-divergence baselines, and GEBM
//!   negative-log-likelihood evaluation,
//! * [`metrics`] / [`datasets`] — closed-form divergences, MMD tests,
//!   1-D Wasserstein distances, and the synthetic benchmark datasets.
//!
//! The crate is `no_std` (with `alloc`); everything that touches the file
//! system or wall clock lives in the companion crate `gebm-lab`.
//!
//! # Determinism
//!
//! All randomness flows through [`rng::StreamRng`], a counter-based ChaCha8
//! generator addressed by `(seed, stream)`. Loops iterate in fixed order and
//! no threading is used, so every public routine is bit-reproducible given
//! the same inputs and seeds.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod datasets;
pub mod error;
pub mod fd;
pub mod kale;
pub mod linalg;
pub mod math;
pub mod metrics;
pub mod models;
pub mod opt;
pub mod params;
pub mod rkhs;
pub mod rng;
pub mod samplers;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::CoreError;
pub use params::ParamVector;
pub use tensor::Tensor;
