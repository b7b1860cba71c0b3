//! Reverse-mode automatic differentiation over dense matrices.
//!
//! The engine is define-by-run: client code rebuilds a fresh [`Tape`] for
//! every evaluation, pushing operations that are executed eagerly (forward
//! values are computed at record time). [`Tape::backward`] then walks the
//! recorded program once in reverse, accumulating adjoints in a fixed order,
//! so gradients are bit-reproducible across runs.
//!
//! Design points:
//!
//! * Values are [`Tensor`]s; scalars are `1×1`. A batch of `n` points lives
//!   in an `n×d` matrix, one point per row.
//! * Model parameters enter through [`Tape::bind`], which registers every
//!   block of a [`ParamVector`] as a tracked leaf and returns a [`GroupId`];
//!   [`Tape::bind_frozen`] registers the same blocks as constants, which
//!   prunes them (and any work feeding only them) from the backward pass.
//! * `ln` and `exp` validate their inputs at record time. A violation
//!   poisons the tape with the offending node index; later operations become
//!   no-ops and [`Tape::value`] / [`Tape::backward`] report the first error.
//!   Numerical failures are therefore diagnosed where they happen instead of
//!   surfacing as NaN many steps later.
//! * `logsumexp` is a first-class primitive with the max-shift rule, so
//!   objectives that need `log Σ exp` never form the raw exponentials.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::math;
use crate::params::{BlockSpec, ParamVector};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Handle to a bound parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupId(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Tracked leaf: gradient w.r.t. this node is available after backward.
    Input,
    /// Untracked leaf: never differentiated, pruned from backward.
    Const,
    /// Tracked leaf belonging to a bound parameter group.
    Param,
    /// Placeholder pushed after the tape is poisoned.
    Dead,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `x (n×d) + r (1×d)`, row broadcast.
    AddRow(usize, usize),
    /// `x (n×d) ⊙ r (1×d)`, row broadcast.
    MulRow(usize, usize),
    /// `x + s` with `s` a `1×1` node broadcast over `x`.
    AddScalar(usize, usize),
    /// `c * x` with a compile-time constant `c`.
    Scale(usize, f64),
    /// `x + c` with a compile-time constant `c`.
    AddConst(usize),
    Neg(usize),
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    Abs(usize),
    LeakyRelu(usize, f64),
    /// Elementwise max; ties route the gradient to the first operand.
    MaxElem(usize, usize),
    /// `x (n×k) · wᵀ` with `w (m×k)`: the linear-layer product.
    MatMulNT(usize, usize),
    SumAll(usize),
    MeanAll(usize),
    /// Row sums: `n×d → n×1`.
    RowSum(usize),
    /// `log Σ exp` over every entry: `→ 1×1`, max-shifted.
    LogSumExpAll(usize),
    /// Column selection: keeps `idx` (in order) from an `n×d` input.
    GatherCols(usize, Vec<usize>),
    /// Merges two column blocks back into an `n×d` matrix.
    InterleaveCols {
        a: usize,
        idx_a: Vec<usize>,
        b: usize,
        idx_b: Vec<usize>,
        cols: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    out: Tensor,
    needs_grad: bool,
}

#[derive(Debug, Clone)]
struct GroupMeta {
    blocks: Vec<BlockSpec>,
    node_ids: Vec<usize>,
    trainable: bool,
}

/// Adjoints produced by [`Tape::backward`].
///
/// Holds one optional tensor per tape node: `None` means the node does not
/// influence the root (or was pruned as constant).
#[derive(Debug)]
pub struct Grads {
    adj: Vec<Option<Tensor>>,
}

impl Grads {
    /// Adjoint of an arbitrary node, if it received one.
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.adj.get(id.0).and_then(|a| a.as_ref())
    }
}

/// An eager reverse-mode tape. See the module docs.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    groups: Vec<GroupMeta>,
    err: Option<CoreError>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            groups: Vec::new(),
            err: None,
        }
    }

    /// First recorded error, if the tape is poisoned.
    pub fn error(&self) -> Option<&CoreError> {
        self.err.as_ref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn poison(&mut self, e: CoreError) -> NodeId {
        if self.err.is_none() {
            self.err = Some(e);
        }
        self.push(Op::Dead, Tensor::zeros(0, 0), false)
    }

    fn push(&mut self, op: Op, out: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            out,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn dead(&mut self) -> NodeId {
        self.push(Op::Dead, Tensor::zeros(0, 0), false)
    }

    #[inline]
    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Tracked data leaf (gradients w.r.t. it are available).
    pub fn input(&mut self, t: Tensor) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        self.push(Op::Input, t, true)
    }

    /// Untracked data leaf.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        self.push(Op::Const, t, false)
    }

    /// Convenience: a `1×1` constant.
    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    /// Registers every block of `params` as a tracked leaf.
    pub fn bind(&mut self, params: &ParamVector) -> GroupId {
        self.bind_impl(params, true)
    }

    /// Registers every block of `params` as a constant. The blocks are
    /// excluded from backward, so gradient work feeding only them is pruned.
    pub fn bind_frozen(&mut self, params: &ParamVector) -> GroupId {
        self.bind_impl(params, false)
    }

    fn bind_impl(&mut self, params: &ParamVector, trainable: bool) -> GroupId {
        let mut node_ids = Vec::with_capacity(params.num_blocks());
        for i in 0..params.num_blocks() {
            let t = params.block_tensor(i);
            let id = if self.err.is_some() {
                self.dead()
            } else if trainable {
                self.push(Op::Param, t, true)
            } else {
                self.push(Op::Const, t, false)
            };
            node_ids.push(id.0);
        }
        self.groups.push(GroupMeta {
            blocks: params.blocks().to_vec(),
            node_ids,
            trainable,
        });
        GroupId(self.groups.len() - 1)
    }

    /// The leaf node of block `i` in a bound group.
    pub fn param(&self, g: GroupId, i: usize) -> NodeId {
        NodeId(self.groups[g.0].node_ids[i])
    }

    /// Shape of a node's forward value. On a poisoned tape, placeholder
    /// nodes report `(0, 0)`; their values are never read.
    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].out.shape()
    }

    fn shape_err(
        &mut self,
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    ) -> NodeId {
        self.poison(CoreError::ShapeMismatch { op, expected, got })
    }

    // ---- elementwise binary ----------------------------------------------

    fn binary_same_shape(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(usize, usize) -> Op,
    ) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let (sa, sb) = (self.nodes[a.0].out.shape(), self.nodes[b.0].out.shape());
        if sa != sb {
            return self.shape_err(name, sa, sb);
        }
        let va = self.nodes[a.0].out.data();
        let vb = self.nodes[b.0].out.data();
        let data: Vec<f64> = va.iter().zip(vb.iter()).map(|(&x, &y)| f(x, y)).collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(op(a.0, b.0), Tensor::from_vec(sa.0, sa.1, data), ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn max_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape("max_elem", a, b, math::fmax, Op::MaxElem)
    }

    // ---- broadcasts -------------------------------------------------------

    fn rowwise(
        &mut self,
        name: &'static str,
        x: NodeId,
        r: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(usize, usize) -> Op,
    ) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let (n, d) = self.nodes[x.0].out.shape();
        let sr = self.nodes[r.0].out.shape();
        if sr != (1, d) {
            return self.shape_err(name, (1, d), sr);
        }
        let xv = self.nodes[x.0].out.data();
        let rv = self.nodes[r.0].out.data();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                data.push(f(xv[i * d + j], rv[j]));
            }
        }
        let ng = self.ng(x) || self.ng(r);
        self.push(op(x.0, r.0), Tensor::from_vec(n, d, data), ng)
    }

    /// `x (n×d) + r (1×d)`, broadcasting the row over the batch.
    pub fn add_row(&mut self, x: NodeId, r: NodeId) -> NodeId {
        self.rowwise("add_row", x, r, |a, b| a + b, Op::AddRow)
    }

    /// `x (n×d) ⊙ r (1×d)`, broadcasting the row over the batch.
    pub fn mul_row(&mut self, x: NodeId, r: NodeId) -> NodeId {
        self.rowwise("mul_row", x, r, |a, b| a * b, Op::MulRow)
    }

    /// `x + s`, broadcasting a `1×1` node over `x`.
    pub fn add_scalar(&mut self, x: NodeId, s: NodeId) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let ss = self.nodes[s.0].out.shape();
        if ss != (1, 1) {
            return self.shape_err("add_scalar", (1, 1), ss);
        }
        let sv = self.nodes[s.0].out.scalar_value();
        let out = self.nodes[x.0].out.map(|v| v + sv);
        let ng = self.ng(x) || self.ng(s);
        self.push(Op::AddScalar(x.0, s.0), out, ng)
    }

    // ---- affine with literals --------------------------------------------

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let out = self.nodes[x.0].out.map(|v| c * v);
        let ng = self.ng(x);
        self.push(Op::Scale(x.0, c), out, ng)
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let out = self.nodes[x.0].out.map(|v| v + c);
        let ng = self.ng(x);
        self.push(Op::AddConst(x.0), out, ng)
    }

    // ---- unary ------------------------------------------------------------

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let out = self.nodes[x.0].out.map(|v| -v);
        let ng = self.ng(x);
        self.push(Op::Neg(x.0), out, ng)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let out = self.nodes[x.0].out.map(math::tanh);
        let ng = self.ng(x);
        self.push(Op::Tanh(x.0), out, ng)
    }

    /// Elementwise `exp`. Inputs above `ln(f64::MAX)` (or NaN) poison the
    /// tape with an overflow/domain error rather than producing `inf`.
    pub fn exp(&mut self, x: NodeId) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let node = self.nodes.len();
        for &v in self.nodes[x.0].out.data() {
            if v.is_nan() {
                return self.poison(CoreError::Domain { op: "exp", node });
            }
            if v > math::EXP_OVERFLOW {
                return self.poison(CoreError::Overflow { op: "exp", node });
            }
        }
        let out = self.nodes[x.0].out.map(math::exp);
        let ng = self.ng(x);
        self.push(Op::Exp(x.0), out, ng)
    }

    /// Elementwise natural log. Non-positive or NaN inputs poison the tape.
    pub fn ln(&mut self, x: NodeId) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let node = self.nodes.len();
        for &v in self.nodes[x.0].out.data() {
            if !(v > 0.0) {
                return self.poison(CoreError::Domain { op: "ln", node });
            }
        }
        let out = self.nodes[x.0].out.map(math::ln);
        let ng = self.ng(x);
        self.push(Op::Ln(x.0), out, ng)
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let out = self.nodes[x.0].out.map(math::abs);
        let ng = self.ng(x);
        self.push(Op::Abs(x.0), out, ng)
    }

    /// Leaky ReLU with the given negative-side slope.
    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let out = self.nodes[x.0].out.map(|v| if v > 0.0 { v } else { slope * v });
        let ng = self.ng(x);
        self.push(Op::LeakyRelu(x.0, slope), out, ng)
    }

    // ---- linear algebra ----------------------------------------------------

    /// `x (n×k) · wᵀ` with `w` stored `(m, k)`: the linear-layer product.
    pub fn matmul_nt(&mut self, x: NodeId, w: NodeId) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let (sx, sw) = (self.nodes[x.0].out.shape(), self.nodes[w.0].out.shape());
        if sx.1 != sw.1 {
            return self.shape_err("matmul_nt", (sx.0, sx.1), sw);
        }
        let out = self.nodes[x.0].out.matmul_nt(&self.nodes[w.0].out);
        let ng = self.ng(x) || self.ng(w);
        self.push(Op::MatMulNT(x.0, w.0), out, ng)
    }

    // ---- reductions --------------------------------------------------------

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let s: f64 = self.nodes[x.0].out.data().iter().sum();
        let ng = self.ng(x);
        self.push(Op::SumAll(x.0), Tensor::scalar(s), ng)
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let d = self.nodes[x.0].out.data();
        let s: f64 = d.iter().sum();
        let m = s / d.len().max(1) as f64;
        let ng = self.ng(x);
        self.push(Op::MeanAll(x.0), Tensor::scalar(m), ng)
    }

    /// Row sums: `n×d → n×1`.
    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let (n, d) = self.nodes[x.0].out.shape();
        let xv = self.nodes[x.0].out.data();
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            data.push(xv[i * d..(i + 1) * d].iter().sum());
        }
        let ng = self.ng(x);
        self.push(Op::RowSum(x.0), Tensor::from_vec(n, 1, data), ng)
    }

    /// `log Σ exp` over every entry of `x`, with the max-shift rule.
    pub fn logsumexp_all(&mut self, x: NodeId) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let node = self.nodes.len();
        let d = self.nodes[x.0].out.data();
        if d.is_empty() || d.iter().any(|v| v.is_nan()) {
            return self.poison(CoreError::Domain {
                op: "logsumexp",
                node,
            });
        }
        let v = math::logsumexp(d);
        let ng = self.ng(x);
        self.push(Op::LogSumExpAll(x.0), Tensor::scalar(v), ng)
    }

    // ---- column plumbing ---------------------------------------------------

    /// Keeps columns `idx` of an `n×d` input, in the given order.
    pub fn gather_cols(&mut self, x: NodeId, idx: &[usize]) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let (n, d) = self.nodes[x.0].out.shape();
        if idx.iter().any(|&c| c >= d) {
            return self.shape_err("gather_cols", (n, d), (n, idx.len()));
        }
        let xv = self.nodes[x.0].out.data();
        let k = idx.len();
        let mut data = Vec::with_capacity(n * k);
        for i in 0..n {
            for &c in idx {
                data.push(xv[i * d + c]);
            }
        }
        let ng = self.ng(x);
        self.push(Op::GatherCols(x.0, idx.to_vec()), Tensor::from_vec(n, k, data), ng)
    }

    /// Scatters two column blocks back into an `n×cols` matrix. `idx_a` and
    /// `idx_b` must partition `0..cols`.
    pub fn interleave_cols(
        &mut self,
        a: NodeId,
        idx_a: &[usize],
        b: NodeId,
        idx_b: &[usize],
        cols: usize,
    ) -> NodeId {
        if self.err.is_some() {
            return self.dead();
        }
        let (na, ka) = self.nodes[a.0].out.shape();
        let (nb, kb) = self.nodes[b.0].out.shape();
        let mut seen = vec![false; cols];
        let valid = na == nb
            && ka == idx_a.len()
            && kb == idx_b.len()
            && ka + kb == cols
            && idx_a.iter().chain(idx_b.iter()).all(|&c| {
                if c >= cols || seen[c] {
                    false
                } else {
                    seen[c] = true;
                    true
                }
            });
        if !valid {
            return self.shape_err("interleave_cols", (na, cols), (nb, ka + kb));
        }
        let av = self.nodes[a.0].out.data();
        let bv = self.nodes[b.0].out.data();
        let mut data = vec![0.0; na * cols];
        for i in 0..na {
            for (j, &c) in idx_a.iter().enumerate() {
                data[i * cols + c] = av[i * ka + j];
            }
            for (j, &c) in idx_b.iter().enumerate() {
                data[i * cols + c] = bv[i * kb + j];
            }
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(
            Op::InterleaveCols {
                a: a.0,
                idx_a: idx_a.to_vec(),
                b: b.0,
                idx_b: idx_b.to_vec(),
                cols,
            },
            Tensor::from_vec(na, cols, data),
            ng,
        )
    }

    // ---- reading results ---------------------------------------------------

    /// Forward value of a node, or the tape's first recorded error.
    pub fn value(&self, id: NodeId) -> Result<&Tensor, CoreError> {
        if let Some(e) = &self.err {
            return Err(e.clone());
        }
        Ok(&self.nodes[id.0].out)
    }

    /// Forward value of a `1×1` node.
    pub fn scalar(&self, id: NodeId) -> Result<f64, CoreError> {
        let t = self.value(id)?;
        if t.shape() != (1, 1) {
            return Err(CoreError::ShapeMismatch {
                op: "scalar",
                expected: (1, 1),
                got: t.shape(),
            });
        }
        Ok(t.scalar_value())
    }

    /// Runs the reverse sweep from a scalar root and returns all adjoints.
    ///
    /// Nodes that do not require gradients (constants and anything feeding
    /// only constants) are skipped entirely.
    pub fn backward(&self, root: NodeId) -> Result<Grads, CoreError> {
        if let Some(e) = &self.err {
            return Err(e.clone());
        }
        let rt = &self.nodes[root.0];
        if rt.out.shape() != (1, 1) {
            return Err(CoreError::ShapeMismatch {
                op: "backward root",
                expected: (1, 1),
                got: rt.out.shape(),
            });
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let g = match adj[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(i, &g, &mut adj);
            adj[i] = Some(g);
        }
        Ok(Grads { adj })
    }

    /// Adds `delta ⊙ scale-free contribution` into the adjoint slot of `to`,
    /// skipping nodes that do not need gradients.
    fn add_adj(&self, adj: &mut [Option<Tensor>], to: usize, delta: Tensor) {
        if !self.nodes[to].needs_grad {
            return;
        }
        match &mut adj[to] {
            Some(t) => t.axpy(1.0, &delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn accumulate(&self, i: usize, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let val = |id: usize| &self.nodes[id].out;
        match &self.nodes[i].op {
            Op::Input | Op::Const | Op::Param | Op::Dead => {}
            Op::Add(a, b) => {
                self.add_adj(adj, *a, g.clone());
                self.add_adj(adj, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.add_adj(adj, *a, g.clone());
                self.add_adj(adj, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.nodes[*a].needs_grad {
                    let mut d = g.clone();
                    for (x, &y) in d.data_mut().iter_mut().zip(val(*b).data()) {
                        *x *= y;
                    }
                    self.add_adj(adj, *a, d);
                }
                if self.nodes[*b].needs_grad {
                    let mut d = g.clone();
                    for (x, &y) in d.data_mut().iter_mut().zip(val(*a).data()) {
                        *x *= y;
                    }
                    self.add_adj(adj, *b, d);
                }
            }
            Op::AddRow(x, r) => {
                self.add_adj(adj, *x, g.clone());
                if self.nodes[*r].needs_grad {
                    let (n, d) = g.shape();
                    let mut row = Tensor::zeros(1, d);
                    for i in 0..n {
                        for j in 0..d {
                            row.data_mut()[j] += g.get(i, j);
                        }
                    }
                    self.add_adj(adj, *r, row);
                }
            }
            Op::MulRow(x, r) => {
                let (n, d) = g.shape();
                if self.nodes[*x].needs_grad {
                    let rv = val(*r);
                    let mut dx = g.clone();
                    for i in 0..n {
                        for j in 0..d {
                            let v = dx.get(i, j) * rv.get(0, j);
                            dx.set(i, j, v);
                        }
                    }
                    self.add_adj(adj, *x, dx);
                }
                if self.nodes[*r].needs_grad {
                    let xv = val(*x);
                    let mut dr = Tensor::zeros(1, d);
                    for i in 0..n {
                        for j in 0..d {
                            dr.data_mut()[j] += g.get(i, j) * xv.get(i, j);
                        }
                    }
                    self.add_adj(adj, *r, dr);
                }
            }
            Op::AddScalar(x, s) => {
                self.add_adj(adj, *x, g.clone());
                if self.nodes[*s].needs_grad {
                    let total: f64 = g.data().iter().sum();
                    self.add_adj(adj, *s, Tensor::scalar(total));
                }
            }
            Op::Scale(x, c) => {
                let c = *c;
                self.add_adj(adj, *x, g.map(|v| c * v));
            }
            Op::AddConst(x) => self.add_adj(adj, *x, g.clone()),
            Op::Neg(x) => self.add_adj(adj, *x, g.map(|v| -v)),
            Op::Tanh(x) => {
                let y = &self.nodes[i].out;
                let mut d = g.clone();
                for (gv, &yv) in d.data_mut().iter_mut().zip(y.data()) {
                    *gv *= 1.0 - yv * yv;
                }
                self.add_adj(adj, *x, d);
            }
            Op::Exp(x) => {
                let y = &self.nodes[i].out;
                let mut d = g.clone();
                for (gv, &yv) in d.data_mut().iter_mut().zip(y.data()) {
                    *gv *= yv;
                }
                self.add_adj(adj, *x, d);
            }
            Op::Ln(x) => {
                let mut d = g.clone();
                for (gv, &xv) in d.data_mut().iter_mut().zip(val(*x).data()) {
                    *gv /= xv;
                }
                self.add_adj(adj, *x, d);
            }
            Op::Abs(x) => {
                let mut d = g.clone();
                for (gv, &xv) in d.data_mut().iter_mut().zip(val(*x).data()) {
                    *gv *= if xv > 0.0 {
                        1.0
                    } else if xv < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
                self.add_adj(adj, *x, d);
            }
            Op::LeakyRelu(x, slope) => {
                let slope = *slope;
                let mut d = g.clone();
                for (gv, &xv) in d.data_mut().iter_mut().zip(val(*x).data()) {
                    *gv *= if xv > 0.0 { 1.0 } else { slope };
                }
                self.add_adj(adj, *x, d);
            }
            Op::MaxElem(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if self.nodes[*a].needs_grad {
                    let mut d = g.clone();
                    for ((gv, &x), &y) in
                        d.data_mut().iter_mut().zip(va.data()).zip(vb.data())
                    {
                        if !(x >= y) {
                            *gv = 0.0;
                        }
                    }
                    self.add_adj(adj, *a, d);
                }
                if self.nodes[*b].needs_grad {
                    let mut d = g.clone();
                    for ((gv, &x), &y) in
                        d.data_mut().iter_mut().zip(va.data()).zip(vb.data())
                    {
                        if x >= y {
                            *gv = 0.0;
                        }
                    }
                    self.add_adj(adj, *b, d);
                }
            }
            Op::MatMulNT(x, w) => {
                // out = x · wᵀ ⇒ dx = g · w, dw = gᵀ · x.
                if self.nodes[*x].needs_grad {
                    self.add_adj(adj, *x, g.matmul(val(*w)));
                }
                if self.nodes[*w].needs_grad {
                    self.add_adj(adj, *w, g.matmul_tn(val(*x)));
                }
            }
            Op::SumAll(x) => {
                let gv = g.scalar_value();
                let (n, d) = val(*x).shape();
                self.add_adj(adj, *x, Tensor::from_vec(n, d, vec![gv; n * d]));
            }
            Op::MeanAll(x) => {
                let (n, d) = val(*x).shape();
                let gv = g.scalar_value() / (n * d).max(1) as f64;
                self.add_adj(adj, *x, Tensor::from_vec(n, d, vec![gv; n * d]));
            }
            Op::RowSum(x) => {
                let (n, d) = val(*x).shape();
                let mut dx = Tensor::zeros(n, d);
                for i in 0..n {
                    let gi = g.get(i, 0);
                    for j in 0..d {
                        dx.set(i, j, gi);
                    }
                }
                self.add_adj(adj, *x, dx);
            }
            Op::LogSumExpAll(x) => {
                // d lse / d x_i = exp(x_i - lse); the shift makes this the
                // normalized softmax, so no overflow is possible here.
                let lse = self.nodes[i].out.scalar_value();
                let gv = g.scalar_value();
                let xin = val(*x);
                let (n, d) = xin.shape();
                let data: Vec<f64> = xin
                    .data()
                    .iter()
                    .map(|&v| gv * math::exp(v - lse))
                    .collect();
                self.add_adj(adj, *x, Tensor::from_vec(n, d, data));
            }
            Op::GatherCols(x, idx) => {
                let (n, d) = val(*x).shape();
                let mut dx = Tensor::zeros(n, d);
                for i in 0..n {
                    for (j, &c) in idx.iter().enumerate() {
                        let v = dx.get(i, c) + g.get(i, j);
                        dx.set(i, c, v);
                    }
                }
                self.add_adj(adj, *x, dx);
            }
            Op::InterleaveCols {
                a,
                idx_a,
                b,
                idx_b,
                cols,
            } => {
                let n = g.rows();
                let _ = cols;
                if self.nodes[*a].needs_grad {
                    let mut da = Tensor::zeros(n, idx_a.len());
                    for i in 0..n {
                        for (j, &c) in idx_a.iter().enumerate() {
                            da.set(i, j, g.get(i, c));
                        }
                    }
                    self.add_adj(adj, *a, da);
                }
                if self.nodes[*b].needs_grad {
                    let mut db = Tensor::zeros(n, idx_b.len());
                    for i in 0..n {
                        for (j, &c) in idx_b.iter().enumerate() {
                            db.set(i, j, g.get(i, c));
                        }
                    }
                    self.add_adj(adj, *b, db);
                }
            }
        }
    }

    /// Assembles the adjoints of a bound group into a [`ParamVector`] with
    /// the group's layout. Blocks that never received gradient are zero.
    ///
    /// Panics if the group was bound with [`Tape::bind_frozen`].
    pub fn group_grad(&self, grads: &Grads, g: GroupId) -> ParamVector {
        let meta = &self.groups[g.0];
        assert!(
            meta.trainable,
            "group_grad on a frozen parameter group"
        );
        let mut out = ParamVector::zeros_from_shapes(
            &meta
                .blocks
                .iter()
                .map(|b| (b.name.clone(), b.rows, b.cols))
                .collect::<Vec<_>>(),
        );
        for (i, &nid) in meta.node_ids.iter().enumerate() {
            if let Some(a) = &grads.adj[nid] {
                out.block_slice_mut(i).copy_from_slice(a.data());
            }
        }
        out
    }
}
