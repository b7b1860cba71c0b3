//! Real NVP normalizing flows built from affine coupling layers.
//!
//! Layer `l` splits coordinates by an alternating even/odd mask: even layers
//! pass the even-indexed coordinates through and transform the odd ones, odd
//! layers swap the roles. The transformed block is scaled and shifted by two
//! MLPs fed with the pass-through block:
//!
//! ```text
//! x_tr = z_tr ⊙ exp(s(z_id)) + t(z_id),      log-scale s = bound·tanh(raw).
//! ```
//!
//! The Jacobian is triangular, so the forward log-determinant is `Σ s` and
//! both directions cost one pass. Output layers of `s` and `t` are zero at
//! initialization, making the initial flow the exact identity.
//!
//! In one dimension a coupling layer has nothing to condition on; layers
//! whose pass-through block is empty degrade to unconditioned affine maps
//! with learned constant shift and log-scale (and layers with nothing to
//! transform are no-ops). A 1-D flow is therefore an exact affine family —
//! enough to represent any Gaussian.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::params::ParamVector;
use crate::rng::StreamRng;
use crate::tape::{GroupId, NodeId, Tape};
use crate::tensor::Tensor;

use super::mlp::{Activation, Mlp, MlpSpec};

/// Architecture of a Real NVP flow.
#[derive(Debug, Clone, PartialEq)]
pub struct RealNvpSpec {
    pub dim: usize,
    pub num_layers: usize,
    /// Hidden widths of the per-layer scale and shift MLPs.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Bound on the log-scale: `s = scale_bound · tanh(raw)`.
    pub scale_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum LayerKind {
    /// Nothing to transform (1-D layers whose mask passes everything).
    Noop,
    /// Empty pass-through block: learned constant shift / raw log-scale.
    Unconditioned { shift_block: usize, sraw_block: usize },
    /// Full coupling: `s`/`t` MLPs reading the pass-through block.
    Coupled {
        s_net: Mlp,
        t_net: Mlp,
        s_start: usize,
        t_start: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    idx_id: Vec<usize>,
    idx_tr: Vec<usize>,
    kind: LayerKind,
}

/// A Real NVP flow. Architecture only; parameters travel as a
/// [`ParamVector`] with the layout from [`RealNvpFlow::param_shapes`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealNvpFlow {
    spec: RealNvpSpec,
    layers: Vec<Layer>,
    shapes: Vec<(String, usize, usize)>,
}

impl RealNvpFlow {
    pub fn new(spec: RealNvpSpec) -> Self {
        assert!(spec.dim > 0, "RealNvpSpec: dim must be positive");
        assert!(spec.num_layers > 0, "RealNvpSpec: need at least one layer");
        assert!(spec.scale_bound > 0.0, "RealNvpSpec: scale_bound must be positive");
        let mut layers = Vec::with_capacity(spec.num_layers);
        let mut shapes: Vec<(String, usize, usize)> = Vec::new();
        for l in 0..spec.num_layers {
            let evens: Vec<usize> = (0..spec.dim).step_by(2).collect();
            let odds: Vec<usize> = (1..spec.dim).step_by(2).collect();
            let (idx_id, idx_tr) = if l % 2 == 0 {
                (evens, odds)
            } else {
                (odds, evens)
            };
            let kind = if idx_tr.is_empty() {
                LayerKind::Noop
            } else if idx_id.is_empty() {
                let shift_block = shapes.len();
                shapes.push((format!("l{l}_shift"), 1, idx_tr.len()));
                let sraw_block = shapes.len();
                shapes.push((format!("l{l}_sraw"), 1, idx_tr.len()));
                LayerKind::Unconditioned {
                    shift_block,
                    sraw_block,
                }
            } else {
                let net_spec = MlpSpec {
                    input_dim: idx_id.len(),
                    hidden: spec.hidden.clone(),
                    output_dim: idx_tr.len(),
                    activation: spec.activation,
                };
                let s_net = Mlp::new(net_spec.clone());
                let t_net = Mlp::new(net_spec);
                let s_start = shapes.len();
                for (name, r, c) in s_net.param_shapes() {
                    shapes.push((format!("l{l}_s_{name}"), r, c));
                }
                let t_start = shapes.len();
                for (name, r, c) in t_net.param_shapes() {
                    shapes.push((format!("l{l}_t_{name}"), r, c));
                }
                LayerKind::Coupled {
                    s_net,
                    t_net,
                    s_start,
                    t_start,
                }
            };
            layers.push(Layer {
                idx_id,
                idx_tr,
                kind,
            });
        }
        RealNvpFlow {
            spec,
            layers,
            shapes,
        }
    }

    pub fn spec(&self) -> &RealNvpSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn param_shapes(&self) -> Vec<(String, usize, usize)> {
        self.shapes.clone()
    }

    /// Initializes parameters so the flow is the exact identity: coupling
    /// nets get Glorot hidden layers with zeroed output layers; constant
    /// shift/log-scale blocks start at zero.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = StreamRng::new(seed, 0);
        let mut params = ParamVector::zeros_from_shapes(&self.shapes);
        for layer in &self.layers {
            if let LayerKind::Coupled {
                s_net,
                t_net,
                s_start,
                t_start,
            } = &layer.kind
            {
                for (net, start) in [(s_net, *s_start), (t_net, *t_start)] {
                    let sub = net.init_params_with(&mut rng, true);
                    for (i, _) in sub.blocks().iter().enumerate() {
                        let src = sub.block_slice(i).to_vec();
                        params.block_slice_mut(start + i).copy_from_slice(&src);
                    }
                }
            }
        }
        params
    }

    #[inline]
    fn bound_scale(&self, raw: f64) -> f64 {
        self.spec.scale_bound * math::tanh(raw)
    }

    /// Generator direction `z → x`. Returns the image and the per-row
    /// forward log-determinant `log |det ∂x/∂z|`.
    pub fn forward(&self, params: &ParamVector, z: &Tensor) -> (Tensor, Vec<f64>) {
        assert_eq!(z.cols(), self.spec.dim, "flow forward: dim mismatch");
        let n = z.rows();
        let mut x = z.clone();
        let mut logdet = vec![0.0; n];
        for layer in &self.layers {
            self.apply_layer(params, layer, &mut x, &mut logdet, false);
        }
        (x, logdet)
    }

    /// Normalizing direction `x → z`. Returns the preimage and the same
    /// forward log-determinant `log |det ∂x/∂z|` evaluated at `z = f⁻¹(x)`.
    pub fn inverse(&self, params: &ParamVector, x: &Tensor) -> (Tensor, Vec<f64>) {
        assert_eq!(x.cols(), self.spec.dim, "flow inverse: dim mismatch");
        let n = x.rows();
        let mut z = x.clone();
        let mut logdet = vec![0.0; n];
        for layer in self.layers.iter().rev() {
            self.apply_layer(params, layer, &mut z, &mut logdet, true);
        }
        (z, logdet)
    }

    fn apply_layer(
        &self,
        params: &ParamVector,
        layer: &Layer,
        x: &mut Tensor,
        logdet: &mut [f64],
        invert: bool,
    ) {
        let n = x.rows();
        match &layer.kind {
            LayerKind::Noop => {}
            LayerKind::Unconditioned {
                shift_block,
                sraw_block,
            } => {
                let shift = params.block_slice(*shift_block);
                let sraw = params.block_slice(*sraw_block);
                for i in 0..n {
                    for (j, &c) in layer.idx_tr.iter().enumerate() {
                        let s = self.bound_scale(sraw[j]);
                        let v = x.get(i, c);
                        let w = if invert {
                            (v - shift[j]) * math::exp(-s)
                        } else {
                            v * math::exp(s) + shift[j]
                        };
                        x.set(i, c, w);
                        logdet[i] += s;
                    }
                }
            }
            LayerKind::Coupled {
                s_net,
                t_net,
                s_start,
                t_start,
            } => {
                let id = x.select_cols(&layer.idx_id);
                let sraw = s_net.forward_at(params, *s_start, &id);
                let t = t_net.forward_at(params, *t_start, &id);
                for i in 0..n {
                    for (j, &c) in layer.idx_tr.iter().enumerate() {
                        let s = self.bound_scale(sraw.get(i, j));
                        let v = x.get(i, c);
                        let w = if invert {
                            (v - t.get(i, j)) * math::exp(-s)
                        } else {
                            v * math::exp(s) + t.get(i, j)
                        };
                        x.set(i, c, w);
                        logdet[i] += s;
                    }
                }
            }
        }
    }

    /// Per-row negative log-density `r(x) = -log q(x)` of the pushforward of
    /// a standard normal through the flow:
    /// `r(x) = ½‖z‖² + (d/2)·ln 2π + log|det ∂x/∂z|` at `z = f⁻¹(x)`.
    pub fn neg_log_density(&self, params: &ParamVector, x: &Tensor) -> Vec<f64> {
        let (z, logdet) = self.inverse(params, x);
        let half_const = 0.5 * self.spec.dim as f64 * math::LN_2PI;
        (0..x.rows())
            .map(|i| {
                let sq: f64 = z.row_slice(i).iter().map(|v| v * v).sum();
                0.5 * sq + half_const + logdet[i]
            })
            .collect()
    }

    /// Draws `n` samples by pushing prior latents through the flow.
    pub fn sample(&self, params: &ParamVector, n: usize, rng: &mut StreamRng) -> Tensor {
        let mut z = Tensor::zeros(n, self.spec.dim);
        rng.fill_normal(z.data_mut());
        self.forward(params, &z).0
    }

    /// Tape version of the generator direction. Returns `(x, logdet)` nodes
    /// with shapes `n×d` and `n×1`.
    pub fn tape_forward(
        &self,
        tape: &mut Tape,
        g: GroupId,
        z: NodeId,
    ) -> (NodeId, NodeId) {
        let n = tape.shape(z).0;
        let mut x = z;
        let mut ld = tape.constant(Tensor::zeros(n, 1));
        for layer in &self.layers {
            let (nx, nld) = self.tape_layer(tape, g, layer, x, n, false);
            x = nx;
            if let Some(nld) = nld {
                ld = tape.add(ld, nld);
            }
        }
        (x, ld)
    }

    /// Tape version of the normalizing direction. Returns `(z, logdet)`
    /// nodes; `logdet` is the forward log-determinant at the preimage.
    pub fn tape_inverse(
        &self,
        tape: &mut Tape,
        g: GroupId,
        x: NodeId,
    ) -> (NodeId, NodeId) {
        let n = tape.shape(x).0;
        let mut z = x;
        let mut ld = tape.constant(Tensor::zeros(n, 1));
        for layer in self.layers.iter().rev() {
            let (nz, nld) = self.tape_layer(tape, g, layer, z, n, true);
            z = nz;
            if let Some(nld) = nld {
                ld = tape.add(ld, nld);
            }
        }
        (z, ld)
    }

    /// One coupling layer on the tape; returns the new state node and the
    /// layer's `n×1` log-determinant contribution (if any).
    fn tape_layer(
        &self,
        tape: &mut Tape,
        g: GroupId,
        layer: &Layer,
        x: NodeId,
        n: usize,
        invert: bool,
    ) -> (NodeId, Option<NodeId>) {
        let d = self.spec.dim;
        let bound = self.spec.scale_bound;
        match &layer.kind {
            LayerKind::Noop => (x, None),
            LayerKind::Unconditioned {
                shift_block,
                sraw_block,
            } => {
                let tr = tape.gather_cols(x, &layer.idx_tr);
                let shift = tape.param(g, *shift_block);
                let sraw = tape.param(g, *sraw_block);
                let s = tape.tanh(sraw);
                let s = tape.scale(s, bound);
                let y = if invert {
                    let neg_shift = tape.neg(shift);
                    let centered = tape.add_row(tr, neg_shift);
                    let neg_s = tape.neg(s);
                    let es = tape.exp(neg_s);
                    tape.mul_row(centered, es)
                } else {
                    let es = tape.exp(s);
                    let scaled = tape.mul_row(tr, es);
                    tape.add_row(scaled, shift)
                };
                let out = if layer.idx_id.is_empty() && layer.idx_tr.len() == d {
                    // Fast path: the transform touched every column.
                    self.reorder_full(tape, y, &layer.idx_tr, d)
                } else {
                    let id = tape.gather_cols(x, &layer.idx_id);
                    tape.interleave_cols(id, &layer.idx_id, y, &layer.idx_tr, d)
                };
                // Per-row log-det: Σ_j s_j, identical across rows.
                let s_sum = tape.row_sum(s);
                let zeros = tape.constant(Tensor::zeros(n, 1));
                let ld = tape.add_scalar(zeros, s_sum);
                (out, Some(ld))
            }
            LayerKind::Coupled {
                s_net,
                t_net,
                s_start,
                t_start,
            } => {
                let id = tape.gather_cols(x, &layer.idx_id);
                let tr = tape.gather_cols(x, &layer.idx_tr);
                let sraw = s_net.tape_forward_at(tape, g, *s_start, id);
                let s = tape.tanh(sraw);
                let s = tape.scale(s, bound);
                let t = t_net.tape_forward_at(tape, g, *t_start, id);
                let y = if invert {
                    let centered = tape.sub(tr, t);
                    let neg_s = tape.neg(s);
                    let es = tape.exp(neg_s);
                    tape.mul(centered, es)
                } else {
                    let es = tape.exp(s);
                    let scaled = tape.mul(tr, es);
                    tape.add(scaled, t)
                };
                let out = tape.interleave_cols(id, &layer.idx_id, y, &layer.idx_tr, d);
                let ld = tape.row_sum(s);
                (out, Some(ld))
            }
        }
    }

    /// Rebuilds column order when a transform covered all `d` columns.
    fn reorder_full(&self, tape: &mut Tape, y: NodeId, idx: &[usize], d: usize) -> NodeId {
        if idx.iter().enumerate().all(|(j, &c)| j == c) {
            return y;
        }
        let empty = tape.gather_cols(y, &[]);
        tape.interleave_cols(empty, &[], y, idx, d)
    }

    /// Tape version of [`RealNvpFlow::neg_log_density`] (`n×1` node).
    pub fn tape_neg_log_density(&self, tape: &mut Tape, g: GroupId, x: NodeId) -> NodeId {
        let (z, ld) = self.tape_inverse(tape, g, x);
        let sq = tape.mul(z, z);
        let rs = tape.row_sum(sq);
        let half = tape.scale(rs, 0.5);
        let with_const = tape.add_const(half, 0.5 * self.spec.dim as f64 * math::LN_2PI);
        tape.add(with_const, ld)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_flow(dim: usize) -> RealNvpFlow {
        RealNvpFlow::new(RealNvpSpec {
            dim,
            num_layers: 4,
            hidden: vec![8],
            activation: Activation::Tanh,
            scale_bound: 2.0,
        })
    }

    fn perturbed_params(flow: &RealNvpFlow, seed: u64) -> ParamVector {
        let mut p = flow.init_params(seed);
        let mut rng = StreamRng::new(seed ^ 0xabcd, 1);
        for v in p.data_mut().iter_mut() {
            *v += 0.2 * rng.normal();
        }
        p
    }

    #[test]
    fn identity_at_init() {
        let flow = small_flow(2);
        let p = flow.init_params(7);
        let z = Tensor::from_vec(3, 2, vec![0.5, -1.0, 2.0, 0.1, 0.0, 0.0]);
        let (x, ld) = flow.forward(&p, &z);
        assert_eq!(x, z);
        assert!(ld.iter().all(|&v| v == 0.0));
        // r(0) in 2-D for the identity flow is exactly ln(2π).
        let r = flow.neg_log_density(&p, &Tensor::from_vec(1, 2, vec![0.0, 0.0]));
        assert!((r[0] - math::LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn forward_inverse_round_trip() {
        for dim in [1usize, 2, 3] {
            let flow = small_flow(dim);
            let p = perturbed_params(&flow, 13);
            let mut rng = StreamRng::new(99, 0);
            let mut z = Tensor::zeros(16, dim);
            rng.fill_normal(z.data_mut());
            let (x, ld_f) = flow.forward(&p, &z);
            let (z_back, ld_i) = flow.inverse(&p, &x);
            for (a, b) in z.data().iter().zip(z_back.data()) {
                assert!((a - b).abs() < 1e-10, "dim {dim}: {a} vs {b}");
            }
            for (a, b) in ld_f.iter().zip(ld_i.iter()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tape_paths_match_plain_paths() {
        let flow = small_flow(2);
        let p = perturbed_params(&flow, 21);
        let mut rng = StreamRng::new(3, 0);
        let mut z = Tensor::zeros(5, 2);
        rng.fill_normal(z.data_mut());
        let (x_plain, ld_plain) = flow.forward(&p, &z);

        let mut tape = Tape::new();
        let g = tape.bind(&p);
        let zn = tape.input(z.clone());
        let (xn, ldn) = flow.tape_forward(&mut tape, g, zn);
        let xt = tape.value(xn).unwrap();
        let ldt = tape.value(ldn).unwrap();
        for (a, b) in x_plain.data().iter().zip(xt.data()) {
            assert!((a - b).abs() < 1e-13);
        }
        for (i, &v) in ld_plain.iter().enumerate() {
            assert!((v - ldt.get(i, 0)).abs() < 1e-13);
        }

        let r_plain = flow.neg_log_density(&p, &x_plain);
        let mut tape2 = Tape::new();
        let g2 = tape2.bind(&p);
        let xn2 = tape2.input(x_plain);
        let rn = flow.tape_neg_log_density(&mut tape2, g2, xn2);
        let rt = tape2.value(rn).unwrap();
        for (i, &v) in r_plain.iter().enumerate() {
            assert!((v - rt.get(i, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_flow_is_affine_but_trainable() {
        let flow = small_flow(1);
        let mut p = flow.init_params(0);
        // Two unconditioned layers (l=1, l=3); set one to scale e^1 shift 3.
        let sraw = p.find_block("l1_sraw").unwrap();
        p.block_slice_mut(sraw)[0] = f64::INFINITY.min(100.0); // tanh -> 1, s = 2
        let shift = p.find_block("l1_shift").unwrap();
        p.block_slice_mut(shift)[0] = 3.0;
        let z = Tensor::col(&[0.0, 1.0]);
        let (x, ld) = flow.forward(&p, &z);
        let e2 = math::exp(2.0);
        assert!((x.get(0, 0) - 3.0).abs() < 1e-12);
        assert!((x.get(1, 0) - (e2 + 3.0)).abs() < 1e-12);
        assert!((ld[0] - 2.0).abs() < 1e-12);
    }
}
