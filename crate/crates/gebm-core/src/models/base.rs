//! Base models: a latent Gaussian prior pushed through a generator.

use alloc::vec::Vec;

use crate::params::ParamVector;
use crate::rng::StreamRng;
use crate::tape::{GroupId, NodeId, Tape};
use crate::tensor::Tensor;

use super::flow::RealNvpFlow;
use super::mlp::Mlp;
use super::prior::GaussianPrior;

/// The deterministic map `B_θ : R^q → R^d` of a base model.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// A free-form MLP generator (GAN-style; no tractable density).
    Mlp(Mlp),
    /// A Real NVP flow (`q = d`; exact density available).
    Flow(RealNvpFlow),
}

/// A base distribution `B = B_θ # η`: standard normal latents pushed through
/// a generator. Owns its parameters `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseModel {
    pub prior: GaussianPrior,
    pub generator: Generator,
    pub theta: ParamVector,
}

impl BaseModel {
    /// Builds an MLP-generator base with Glorot-initialized parameters.
    pub fn new_mlp(mlp: Mlp, seed: u64) -> Self {
        let theta = mlp.init_params(seed);
        BaseModel {
            prior: GaussianPrior::new(mlp.spec().input_dim),
            generator: Generator::Mlp(mlp),
            theta,
        }
    }

    /// Builds a flow base initialized to the identity (so `B = η` at start).
    pub fn new_flow(flow: RealNvpFlow, seed: u64) -> Self {
        let theta = flow.init_params(seed);
        BaseModel {
            prior: GaussianPrior::new(flow.dim()),
            generator: Generator::Flow(flow),
            theta,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn data_dim(&self) -> usize {
        match &self.generator {
            Generator::Mlp(m) => m.spec().output_dim,
            Generator::Flow(f) => f.dim(),
        }
    }

    /// Draws `n` latents from the prior.
    pub fn sample_latent(&self, n: usize, rng: &mut StreamRng) -> Tensor {
        self.prior.sample(n, rng)
    }

    /// Pushes latents through the generator.
    pub fn push(&self, z: &Tensor) -> Tensor {
        match &self.generator {
            Generator::Mlp(m) => m.forward(&self.theta, z),
            Generator::Flow(f) => f.forward(&self.theta, z).0,
        }
    }

    /// Draws `n` base samples; returns `(latents, data)`.
    pub fn sample(&self, n: usize, rng: &mut StreamRng) -> (Tensor, Tensor) {
        let z = self.sample_latent(n, rng);
        let x = self.push(&z);
        (z, x)
    }

    /// Generator on the tape. `g` must be bound from `θ` (trainably for base
    /// updates, frozen when the base only transports gradients to latents).
    pub fn tape_push(&self, tape: &mut Tape, g: GroupId, z: NodeId) -> NodeId {
        match &self.generator {
            Generator::Mlp(m) => m.tape_forward(tape, g, z),
            Generator::Flow(f) => f.tape_forward(tape, g, z).0,
        }
    }

    /// Per-row negative log-density of the base, if the generator family has
    /// one (flows do; MLP generators do not).
    pub fn neg_log_density(&self, x: &Tensor) -> Option<Vec<f64>> {
        match &self.generator {
            Generator::Mlp(_) => None,
            Generator::Flow(f) => Some(f.neg_log_density(&self.theta, x)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::mlp::{Activation, MlpSpec};

    /// A 1-D linear generator `B_θ(z) = θ z` with `θ = 2`.
    fn linear_base() -> BaseModel {
        let mlp = Mlp::new(MlpSpec {
            input_dim: 1,
            hidden: alloc::vec![],
            output_dim: 1,
            activation: Activation::Tanh,
        });
        let mut base = BaseModel::new_mlp(mlp, 0);
        base.theta.block_slice_mut(0)[0] = 2.0;
        base.theta.block_slice_mut(1)[0] = 0.0;
        base
    }

    #[test]
    fn linear_generator_scales_latents() {
        let base = linear_base();
        let z = Tensor::col(&[1.0, -0.5]);
        let x = base.push(&z);
        assert_eq!(x.data(), &[2.0, -1.0]);
    }

    #[test]
    fn sample_uses_prior_then_push() {
        let base = linear_base();
        let mut rng_a = StreamRng::new(5, 0);
        let (z, x) = base.sample(4, &mut rng_a);
        let mut rng_b = StreamRng::new(5, 0);
        let z_direct = base.prior.sample(4, &mut rng_b);
        assert_eq!(z, z_direct);
        for (zi, xi) in z.data().iter().zip(x.data()) {
            assert_eq!(*xi, 2.0 * zi);
        }
    }
}
