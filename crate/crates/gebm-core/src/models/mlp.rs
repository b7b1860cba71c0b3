//! Multilayer perceptrons over batched rows.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::params::ParamVector;
use crate::rng::StreamRng;
use crate::tape::{GroupId, NodeId, Tape};
use crate::tensor::Tensor;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Tanh,
    /// Leaky ReLU with the given negative-side slope.
    LeakyRelu(f64),
}

/// Architecture of an MLP: `input_dim → hidden… → output_dim`, with the
/// activation applied after every hidden layer and a linear output layer.
///
/// `hidden` may be empty, in which case the network is a single affine map —
/// handy both as a minimal trainable model and for wiring exact identity or
/// constant maps in tests.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

/// An MLP. Holds only the architecture; parameters travel separately as a
/// [`ParamVector`] whose layout is defined by [`Mlp::param_shapes`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Self {
        assert!(spec.input_dim > 0, "MlpSpec: input_dim must be positive");
        assert!(spec.output_dim > 0, "MlpSpec: output_dim must be positive");
        assert!(
            spec.hidden.iter().all(|&h| h > 0),
            "MlpSpec: hidden widths must be positive"
        );
        Mlp { spec }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Layer dimensions as `(fan_in, fan_out)` pairs, input to output.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.spec.input_dim;
        for &h in &self.spec.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.spec.output_dim));
        dims
    }

    /// Parameter blocks: `w{l}` stored `(fan_out, fan_in)` and `b{l}` stored
    /// `(1, fan_out)`, per layer.
    pub fn param_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut shapes = Vec::new();
        for (l, (fan_in, fan_out)) in self.layer_dims().into_iter().enumerate() {
            shapes.push((format!("w{l}"), fan_out, fan_in));
            shapes.push((format!("b{l}"), 1, fan_out));
        }
        shapes
    }

    /// Glorot-uniform initialization: weights uniform on `(-a, a)` with
    /// `a = sqrt(6 / (fan_in + fan_out))`, biases zero. Draws are made in a
    /// fixed layer-by-layer, row-major order from the given generator.
    pub fn init_params_with(&self, rng: &mut StreamRng, zero_output_layer: bool) -> ParamVector {
        let mut params = ParamVector::zeros_from_shapes(&self.param_shapes());
        let dims = self.layer_dims();
        let last = dims.len() - 1;
        for (l, (fan_in, fan_out)) in dims.into_iter().enumerate() {
            let a = math::sqrt(6.0 / (fan_in + fan_out) as f64);
            let idx = params.find_block(&format!("w{l}")).unwrap();
            let w = params.block_slice_mut(idx);
            for v in w.iter_mut() {
                // Always consume the draw so zeroing the output layer does
                // not shift the stream feeding the other layers.
                let u = rng.uniform_in(-a, a);
                *v = if zero_output_layer && l == last { 0.0 } else { u };
            }
        }
        params
    }

    /// Glorot-uniform initialization from a seed (stream 0).
    pub fn init_params(&self, seed: u64) -> ParamVector {
        self.init_params_with(&mut StreamRng::new(seed, 0), false)
    }

    /// Plain forward pass: `x` is `n×input_dim`, result `n×output_dim`.
    pub fn forward(&self, params: &ParamVector, x: &Tensor) -> Tensor {
        self.forward_at(params, 0, x)
    }

    /// Forward pass reading this MLP's blocks starting at `block_offset`
    /// inside a larger parameter vector (used when several networks share
    /// one flat vector, as in flows).
    pub fn forward_at(&self, params: &ParamVector, block_offset: usize, x: &Tensor) -> Tensor {
        assert_eq!(x.cols(), self.spec.input_dim, "Mlp::forward: input dim");
        let n_layers = self.layer_dims().len();
        let mut h = x.clone();
        for l in 0..n_layers {
            let w = params.block_tensor(block_offset + 2 * l);
            let b = params.block_tensor(block_offset + 2 * l + 1);
            let mut z = h.matmul_nt(&w);
            for i in 0..z.rows() {
                for j in 0..z.cols() {
                    let v = z.get(i, j) + b.get(0, j);
                    z.set(i, j, v);
                }
            }
            if l + 1 < n_layers {
                z = match self.spec.activation {
                    Activation::Tanh => z.map(math::tanh),
                    Activation::LeakyRelu(s) => {
                        z.map(|v| if v > 0.0 { v } else { s * v })
                    }
                };
            }
            h = z;
        }
        h
    }

    /// Tape forward pass recording the same arithmetic as [`Mlp::forward`].
    /// `g` must be a group bound from a parameter vector with this MLP's
    /// layout.
    pub fn tape_forward(&self, tape: &mut Tape, g: GroupId, x: NodeId) -> NodeId {
        self.tape_forward_at(tape, g, 0, x)
    }

    /// Tape forward pass reading blocks starting at `block_offset` in the
    /// bound group (see [`Mlp::forward_at`]).
    pub fn tape_forward_at(
        &self,
        tape: &mut Tape,
        g: GroupId,
        block_offset: usize,
        x: NodeId,
    ) -> NodeId {
        let n_layers = self.layer_dims().len();
        let mut h = x;
        for l in 0..n_layers {
            let w = tape.param(g, block_offset + 2 * l);
            let b = tape.param(g, block_offset + 2 * l + 1);
            let z = tape.matmul_nt(h, w);
            let z = tape.add_row(z, b);
            h = if l + 1 < n_layers {
                match self.spec.activation {
                    Activation::Tanh => tape.tanh(z),
                    Activation::LeakyRelu(s) => tape.leaky_relu(z, s),
                }
            } else {
                z
            };
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Mlp {
        Mlp::new(MlpSpec {
            input_dim: 2,
            hidden: alloc::vec![3],
            output_dim: 1,
            activation: Activation::Tanh,
        })
    }

    #[test]
    fn param_layout_matches_architecture() {
        let shapes = tiny().param_shapes();
        assert_eq!(
            shapes,
            alloc::vec![
                ("w0".into(), 3usize, 2usize),
                ("b0".into(), 1, 3),
                ("w1".into(), 1, 3),
                ("b1".into(), 1, 1),
            ]
        );
    }

    #[test]
    fn init_respects_glorot_bounds_and_zero_biases() {
        let mlp = tiny();
        let p = mlp.init_params(3);
        let a0 = (6.0f64 / 5.0).sqrt();
        for &w in p.block_slice(0) {
            assert!(w.abs() < a0 && w != 0.0);
        }
        assert!(p.block_slice(1).iter().all(|&b| b == 0.0));
        assert!(p.block_slice(3).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_output_variant_only_zeroes_last_weight_block() {
        let mlp = tiny();
        let p = mlp.init_params_with(&mut StreamRng::new(3, 0), true);
        assert!(p.block_slice(0).iter().any(|&w| w != 0.0));
        assert!(p.block_slice(2).iter().all(|&w| w == 0.0));
        // Identical draw order: the hidden layer matches the plain init.
        let q = mlp.init_params(3);
        assert_eq!(p.block_slice(0), q.block_slice(0));
    }

    #[test]
    fn plain_and_tape_forward_agree() {
        let mlp = tiny();
        let p = mlp.init_params(11);
        let x = Tensor::from_vec(4, 2, alloc::vec![0.1, -0.2, 1.0, 0.5, -1.5, 2.0, 0.0, 0.0]);
        let plain = mlp.forward(&p, &x);
        let mut tape = Tape::new();
        let g = tape.bind(&p);
        let xn = tape.input(x);
        let y = mlp.tape_forward(&mut tape, g, xn);
        let taped = tape.value(y).unwrap();
        for (a, b) in plain.data().iter().zip(taped.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_hidden_is_a_single_affine_map() {
        let lin = Mlp::new(MlpSpec {
            input_dim: 2,
            hidden: alloc::vec![],
            output_dim: 2,
            activation: Activation::Tanh,
        });
        let mut p = lin.init_params(0);
        p.set_block(0, &Tensor::eye(2));
        p.set_block(1, &Tensor::row(&[0.0, 0.0]));
        let x = Tensor::from_vec(2, 2, alloc::vec![1.0, 2.0, -3.0, 4.0]);
        assert_eq!(lin.forward(&p, &x), x);
    }
}
