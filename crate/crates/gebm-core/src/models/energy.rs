//! Energy families `E_ψ : R^d → R`.

use alloc::vec;
use alloc::vec::Vec;

use crate::params::ParamVector;
use crate::tape::{GroupId, NodeId, Tape};
use crate::tensor::Tensor;

use super::flow::RealNvpFlow;
use super::mlp::Mlp;

/// A parametric energy family. The trainable parameters `ψ` live in a
/// [`ParamVector`] owned by the caller (see `kale::EnergyState`).
#[derive(Debug, Clone, PartialEq)]
pub enum Energy {
    /// A scalar-output MLP: `E_ψ(x) = f_ψ(x)`.
    Mlp(Mlp),
    /// `E(x) = scale · ½‖x‖²`; parameter-free, with tractable posteriors
    /// over Gaussian bases — the workhorse of sampler tests.
    Quadratic { dim: usize, scale: f64 },
    /// `E(x) = 0`; parameter-free. Makes the GEBM collapse to its base.
    Zero { dim: usize },
    /// Density-estimation energy `E_ψ(x) = h_ψ(x) − r(x)`, where `h_ψ` is
    /// the negative log-density of a trainable flow and `r` that of a frozen
    /// reference flow (kept in sync with the base by the training loop).
    /// `ψ` consists of the `h` flow's parameters only.
    FlowDiff {
        h: RealNvpFlow,
        r: RealNvpFlow,
        r_params: ParamVector,
    },
}

impl Energy {
    /// Input dimension the energy expects.
    pub fn dim(&self) -> usize {
        match self {
            Energy::Mlp(mlp) => mlp.spec().input_dim,
            Energy::Quadratic { dim, .. } | Energy::Zero { dim } => *dim,
            Energy::FlowDiff { h, .. } => h.dim(),
        }
    }

    /// Builds `ψ` at its initial value. Parameter-free families return an
    /// empty vector.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        match self {
            Energy::Mlp(mlp) => {
                assert_eq!(mlp.spec().output_dim, 1, "energy MLP must be scalar-output");
                mlp.init_params(seed)
            }
            Energy::Quadratic { .. } | Energy::Zero { .. } => ParamVector::empty(),
            Energy::FlowDiff { h, .. } => h.init_params(seed),
        }
    }

    /// Replaces the frozen reference flow parameters of a
    /// [`Energy::FlowDiff`] (no-op panic otherwise).
    pub fn set_reference_params(&mut self, params: ParamVector) {
        match self {
            Energy::FlowDiff { r_params, .. } => *r_params = params,
            _ => panic!("set_reference_params on a non-FlowDiff energy"),
        }
    }

    /// Per-row energies, plain path.
    pub fn eval(&self, psi: &ParamVector, x: &Tensor) -> Vec<f64> {
        assert_eq!(x.cols(), self.dim(), "energy eval: dim mismatch");
        match self {
            Energy::Mlp(mlp) => mlp.forward(psi, x).into_vec(),
            Energy::Quadratic { scale, .. } => (0..x.rows())
                .map(|i| {
                    let sq: f64 = x.row_slice(i).iter().map(|v| v * v).sum();
                    0.5 * scale * sq
                })
                .collect(),
            Energy::Zero { .. } => vec![0.0; x.rows()],
            Energy::FlowDiff { h, r, r_params } => {
                let hv = h.neg_log_density(psi, x);
                let rv = r.neg_log_density(r_params, x);
                hv.iter().zip(rv.iter()).map(|(a, b)| a - b).collect()
            }
        }
    }

    /// Per-row energies on the tape (`n×1` node). `g` must be a group bound
    /// (trainably or frozen) from a `ψ` with this family's layout.
    pub fn tape_eval(&self, tape: &mut Tape, g: GroupId, x: NodeId) -> NodeId {
        match self {
            Energy::Mlp(mlp) => mlp.tape_forward(tape, g, x),
            Energy::Quadratic { scale, .. } => {
                let sq = tape.mul(x, x);
                let rs = tape.row_sum(sq);
                tape.scale(rs, 0.5 * scale)
            }
            Energy::Zero { .. } => {
                let n = tape.shape(x).0;
                tape.constant(Tensor::zeros(n, 1))
            }
            Energy::FlowDiff { h, r, r_params } => {
                let hv = h.tape_neg_log_density(tape, g, x);
                let gr = tape.bind_frozen(r_params);
                let rv = r.tape_neg_log_density(tape, gr, x);
                tape.sub(hv, rv)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::mlp::{Activation, MlpSpec};
    use crate::rng::StreamRng;

    #[test]
    fn quadratic_matches_hand_values() {
        let e = Energy::Quadratic { dim: 2, scale: 2.0 };
        let x = Tensor::from_vec(2, 2, vec![1.0, 2.0, 0.0, -3.0]);
        let v = e.eval(&ParamVector::empty(), &x);
        assert_eq!(v, vec![5.0, 9.0]);
    }

    #[test]
    fn tape_and_plain_agree_for_mlp_energy() {
        let e = Energy::Mlp(Mlp::new(MlpSpec {
            input_dim: 2,
            hidden: vec![5],
            output_dim: 1,
            activation: Activation::LeakyRelu(0.2),
        }));
        let psi = e.init_params(4);
        let mut rng = StreamRng::new(8, 0);
        let mut x = Tensor::zeros(6, 2);
        rng.fill_normal(x.data_mut());
        let plain = e.eval(&psi, &x);
        let mut tape = Tape::new();
        let g = tape.bind(&psi);
        let xn = tape.input(x);
        let en = e.tape_eval(&mut tape, g, xn);
        let taped = tape.value(en).unwrap();
        for (i, &v) in plain.iter().enumerate() {
            assert!((v - taped.get(i, 0)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_energy_has_no_gradient_path() {
        let e = Energy::Zero { dim: 2 };
        let psi = e.init_params(0);
        assert!(psi.is_empty());
        let mut tape = Tape::new();
        let g = tape.bind(&psi);
        let xn = tape.input(Tensor::from_vec(1, 2, vec![1.0, 2.0]));
        let en = e.tape_eval(&mut tape, g, xn);
        let root = tape.sum_all(en);
        let grads = tape.backward(root).unwrap();
        assert!(grads.wrt(xn).is_none());
    }
}
