//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation as a node holding its output value
//! and whatever the backward pass needs. Nodes are appended in evaluation
//! order, so the node index is a valid topological order and `backward`
//! simply walks the tape in reverse.
//!
//! Floating-point summation order inside every kernel is fixed (row-major
//! over outputs, then row-major over the reduction indices), so two
//! evaluations of the same graph are bit-identical.

mod conv;
mod elementwise;
mod linalg;
mod norm;
mod reduce;
mod resample;
mod shape;

use std::fmt;

pub use conv::{ActiveSiteMask, ConvGeom};
pub use elementwise::{gelu, sigmoid};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Every differentiable operation the graph can record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Scale,
    AddChannel,
    MulChannel,
    AddLast,
    MulLast,
    Matmul,
    Transpose,
    Reshape,
    Concat,
    Narrow,
    Sum,
    Mean,
    Abs,
    Sigmoid,
    Relu,
    Gelu,
    SoftmaxRows,
    LayerNormRows,
    InstanceNorm,
    InstanceStd,
    Conv2d,
    Conv2dSparse,
    Conv1d,
    MaxOverAxis,
    UpsampleNearest2,
    UpsampleBilinear2,
}

impl OpKind {
    pub const ALL: [OpKind; 29] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::AddChannel,
        OpKind::MulChannel,
        OpKind::AddLast,
        OpKind::MulLast,
        OpKind::Matmul,
        OpKind::Transpose,
        OpKind::Reshape,
        OpKind::Concat,
        OpKind::Narrow,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::Abs,
        OpKind::Sigmoid,
        OpKind::Relu,
        OpKind::Gelu,
        OpKind::SoftmaxRows,
        OpKind::LayerNormRows,
        OpKind::InstanceNorm,
        OpKind::InstanceStd,
        OpKind::Conv2d,
        OpKind::Conv2dSparse,
        OpKind::Conv1d,
        OpKind::MaxOverAxis,
        OpKind::UpsampleNearest2,
        OpKind::UpsampleBilinear2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::AddChannel => "add_channel",
            OpKind::MulChannel => "mul_channel",
            OpKind::AddLast => "add_last",
            OpKind::MulLast => "mul_last",
            OpKind::Matmul => "matmul",
            OpKind::Transpose => "transpose",
            OpKind::Reshape => "reshape",
            OpKind::Concat => "concat",
            OpKind::Narrow => "narrow",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Abs => "abs",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Relu => "relu",
            OpKind::Gelu => "gelu",
            OpKind::SoftmaxRows => "softmax_rows",
            OpKind::LayerNormRows => "layer_norm_rows",
            OpKind::InstanceNorm => "instance_norm",
            OpKind::InstanceStd => "instance_std",
            OpKind::Conv2d => "conv2d",
            OpKind::Conv2dSparse => "conv2d_sparse",
            OpKind::Conv1d => "conv1d_channels",
            OpKind::MaxOverAxis => "max_over_axis",
            OpKind::UpsampleNearest2 => "upsample_nearest2",
            OpKind::UpsampleBilinear2 => "upsample_bilinear2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddChannel(Var, Var),
    MulChannel(Var, Var),
    AddLast(Var, Var),
    MulLast(Var, Var),
    Matmul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Narrow { x: Var, axis: usize, start: usize },
    Sum(Var),
    Mean(Var),
    Abs(Var),
    Sigmoid(Var),
    Relu(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNormRows { x: Var, inv_std: Vec<f64> },
    InstanceNorm { x: Var, stats: norm::NormStats },
    InstanceStd { x: Var, stats: norm::NormStats },
    Conv2d { x: Var, w: Var, geom: ConvGeom },
    Conv2dSparse { x: Var, w: Var, mask: ActiveSiteMask, groups: usize },
    Conv1d { x: Var, w: Var },
    MaxOverAxis { x: Var, argmax: Vec<usize> },
    UpsampleNearest2(Var),
    UpsampleBilinear2(Var),
}

impl Op {
    fn kind(&self) -> Option<OpKind> {
        Some(match self {
            Op::Leaf => return None,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::AddChannel(..) => OpKind::AddChannel,
            Op::MulChannel(..) => OpKind::MulChannel,
            Op::AddLast(..) => OpKind::AddLast,
            Op::MulLast(..) => OpKind::MulLast,
            Op::Matmul(..) => OpKind::Matmul,
            Op::Transpose(..) => OpKind::Transpose,
            Op::Reshape(..) => OpKind::Reshape,
            Op::Concat { .. } => OpKind::Concat,
            Op::Narrow { .. } => OpKind::Narrow,
            Op::Sum(..) => OpKind::Sum,
            Op::Mean(..) => OpKind::Mean,
            Op::Abs(..) => OpKind::Abs,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::Relu(..) => OpKind::Relu,
            Op::Gelu(..) => OpKind::Gelu,
            Op::SoftmaxRows(..) => OpKind::SoftmaxRows,
            Op::LayerNormRows { .. } => OpKind::LayerNormRows,
            Op::InstanceNorm { .. } => OpKind::InstanceNorm,
            Op::InstanceStd { .. } => OpKind::InstanceStd,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::Conv2dSparse { .. } => OpKind::Conv2dSparse,
            Op::Conv1d { .. } => OpKind::Conv1d,
            Op::MaxOverAxis { .. } => OpKind::MaxOverAxis,
            Op::UpsampleNearest2(..) => OpKind::UpsampleNearest2,
            Op::UpsampleBilinear2(..) => OpKind::UpsampleBilinear2,
        })
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddChannel(a, b)
            | Op::MulChannel(a, b)
            | Op::AddLast(a, b)
            | Op::MulLast(a, b)
            | Op::Matmul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Abs(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Gelu(a)
            | Op::SoftmaxRows(a)
            | Op::UpsampleNearest2(a)
            | Op::UpsampleBilinear2(a) => vec![*a],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Narrow { x, .. }
            | Op::LayerNormRows { x, .. }
            | Op::InstanceNorm { x, .. }
            | Op::InstanceStd { x, .. }
            | Op::MaxOverAxis { x, .. } => vec![*x],
            Op::Conv2d { x, w, .. } | Op::Conv2dSparse { x, w, .. } | Op::Conv1d { x, w } => {
                vec![*x, *w]
            }
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording of one forward evaluation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; receives a gradient from `backward`.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Leaf excluded from gradient propagation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Kind of the operation that produced `v`, `None` for leaves.
    pub fn op_kind(&self, v: Var) -> Option<OpKind> {
        self.nodes[v.0].op.kind()
    }

    pub(crate) fn push(&mut self, op: Op, value: Tensor) -> Var {
        let requires_grad = op.inputs().iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// Reverse-mode accumulation from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad && !matches!(node.op, Op::Leaf) {
                self.propagate(idx, &upstream, &mut grads);
            }
            grads[idx] = Some(upstream);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let y = node.value.data();
        let mut acc = Accumulator { graph: self, grads };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc.add(*a, dy);
                acc.add(*b, dy);
            }
            Op::Sub(a, b) => {
                acc.add(*a, dy);
                acc.add_with(*b, |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g -= d));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.data(*a), self.data(*b));
                acc.add_with(*a, |g| {
                    g.iter_mut().zip(dy).zip(bv).for_each(|((g, d), b)| *g += d * b)
                });
                acc.add_with(*b, |g| {
                    g.iter_mut().zip(dy).zip(av).for_each(|((g, d), a)| *g += d * a)
                });
            }
            Op::Scale(a, c) => {
                acc.add_with(*a, |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += c * d))
            }
            Op::AddChannel(x, b) => elementwise::add_channel_backward(&mut acc, *x, *b, dy),
            Op::MulChannel(x, s) => elementwise::mul_channel_backward(&mut acc, *x, *s, dy),
            Op::AddLast(x, b) => elementwise::add_last_backward(&mut acc, *x, *b, dy),
            Op::MulLast(x, s) => elementwise::mul_last_backward(&mut acc, *x, *s, dy),
            Op::Matmul(a, b) => linalg::matmul_backward(&mut acc, *a, *b, dy),
            Op::Transpose(a) => linalg::transpose_backward(&mut acc, *a, dy),
            Op::Reshape(a) => acc.add(*a, dy),
            Op::Concat { inputs, axis } => shape::concat_backward(&mut acc, inputs, *axis, dy),
            Op::Narrow { x, axis, start } => {
                shape::narrow_backward(&mut acc, *x, *axis, *start, node.value.shape(), dy)
            }
            Op::Sum(a) => acc.add_with(*a, |g| g.iter_mut().for_each(|g| *g += dy[0])),
            Op::Mean(a) => {
                let n = self.value(*a).numel() as f64;
                acc.add_with(*a, |g| g.iter_mut().for_each(|g| *g += dy[0] / n))
            }
            Op::Abs(a) => {
                let av = self.data(*a);
                acc.add_with(*a, |g| {
                    g.iter_mut().zip(dy).zip(av).for_each(|((g, d), x)| *g += d * x.signum_or_zero())
                })
            }
            Op::Sigmoid(a) => acc.add_with(*a, |g| {
                g.iter_mut().zip(dy).zip(y).for_each(|((g, d), s)| *g += d * s * (1.0 - s))
            }),
            Op::Relu(a) => {
                let av = self.data(*a);
                acc.add_with(*a, |g| {
                    g.iter_mut()
                        .zip(dy)
                        .zip(av)
                        .for_each(|((g, d), x)| *g += if *x > 0.0 { *d } else { 0.0 })
                })
            }
            Op::Gelu(a) => {
                let av = self.data(*a);
                acc.add_with(*a, |g| {
                    g.iter_mut()
                        .zip(dy)
                        .zip(av)
                        .for_each(|((g, d), x)| *g += d * elementwise::gelu_grad(*x))
                })
            }
            Op::SoftmaxRows(a) => reduce::softmax_rows_backward(&mut acc, *a, y, dy),
            Op::LayerNormRows { x, inv_std } => {
                norm::layer_norm_backward(&mut acc, *x, y, inv_std, dy)
            }
            Op::InstanceNorm { x, stats } => norm::instance_norm_backward(&mut acc, *x, y, stats, dy),
            Op::InstanceStd { x, stats } => norm::instance_std_backward(&mut acc, *x, stats, dy),
            Op::Conv2d { x, w, geom } => conv::conv2d_backward(&mut acc, *x, *w, geom, None, dy),
            Op::Conv2dSparse { x, w, mask, groups } => {
                let geom = ConvGeom::same(self.shape(*w), *groups);
                conv::conv2d_backward(&mut acc, *x, *w, &geom, Some(mask), dy)
            }
            Op::Conv1d { x, w } => conv::conv1d_backward(&mut acc, *x, *w, dy),
            Op::MaxOverAxis { x, argmax } => acc.add_with(*x, |g| {
                for (d, &src) in dy.iter().zip(argmax) {
                    g[src] += d;
                }
            }),
            Op::UpsampleNearest2(a) => resample::nearest2_backward(&mut acc, *a, dy),
            Op::UpsampleBilinear2(a) => resample::bilinear2_backward(&mut acc, *a, dy),
        }
    }
}

/// Adds contributions into the gradient buffers of a node's inputs.
pub(crate) struct Accumulator<'a> {
    graph: &'a Graph,
    grads: &'a mut [Option<Vec<f64>>],
}

impl<'a> Accumulator<'a> {
    fn add(&mut self, v: Var, contribution: &[f64]) {
        self.add_with(v, |g| g.iter_mut().zip(contribution).for_each(|(g, c)| *g += c));
    }

    fn add_with(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.graph.nodes[v.0].requires_grad {
            return;
        }
        let n = self.graph.nodes[v.0].value.numel();
        let slot = self.grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(slot);
    }

    fn graph(&self) -> &'a Graph {
        self.graph
    }
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not
    /// influence the loss.
    pub fn get(&self, graph: &Graph, v: Var) -> Tensor {
        let shape = graph.shape(v).to_vec();
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::from_parts(shape, g.clone()),
            None => Tensor::zeros(&shape),
        }
    }

    /// Whether any gradient reached `v`.
    pub fn reached(&self, v: Var) -> bool {
        matches!(self.grads.get(v.0), Some(Some(_)))
    }
}
