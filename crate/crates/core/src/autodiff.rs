//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation in creation order, which is already a
//! topological order. [`Graph::backward`] walks the tape once in reverse and
//! returns a [`Gradients`] map. Every op validates shapes and rejects
//! non-finite results at the point they are produced.

use crate::error::{Error, Result};
use crate::tensor::{matmul_nt, matmul_tn, Tensor};

/// Slope used by every leaky ReLU in the crate.
pub const LEAKY_SLOPE: f32 = 0.2;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Relu,
    LeakyRelu,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Hadamard,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    /// Mean of absolute values.
    L1Mean,
    /// Euclidean norm.
    L2Norm,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Scale(Var, f32),
    AddScalar(Var),
    Transpose(Var),
    BroadcastRows(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    Reduce(Reduce, Var, Option<usize>),
    SoftmaxCrossEntropy(Var, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

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

    /// A trainable leaf; receives a gradient from [`Graph::backward`].
    pub fn param(&mut self, value: &Tensor) -> Var {
        self.push(value.clone(), Op::Leaf, true)
    }

    /// A leaf that is treated as a constant.
    pub fn constant(&mut self, value: &Tensor) -> Var {
        self.push(value.clone(), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.record("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let value = match kind {
            Binary::Add => x.zip_map(y, |p, q| p + q),
            Binary::Sub => x.zip_map(y, |p, q| p - q),
            Binary::Hadamard => x.zip_map(y, |p, q| p * q),
            Binary::Div => x.zip_map(y, |p, q| p / q),
        }?;
        self.record("elementwise", value, Op::Binary(kind, a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Hadamard, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Result<Var> {
        let x = self.value(a);
        let value = match kind {
            Unary::Relu => x.map(|v| v.max(0.0)),
            Unary::LeakyRelu => x.map(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v }),
            Unary::Sigmoid => x.map(sigmoid),
        };
        self.record("activation", value, Op::Unary(kind, a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, a)
    }

    pub fn leaky_relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::LeakyRelu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Result<Var> {
        let value = self.value(a).map(|v| v * c);
        self.record("scale", value, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f32) -> Result<Var> {
        let value = self.value(a).map(|v| v + c);
        self.record("add_scalar", value, Op::AddScalar(a), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.record("transpose", value, Op::Transpose(a), &[a])
    }

    /// Repeats a `1×n` row `rows` times.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let x = self.value(a);
        if x.rows() != 1 {
            return Err(Error::shape("broadcast_rows", &x.shape(), &[1, x.cols()]));
        }
        let mut data = Vec::with_capacity(rows * x.cols());
        for _ in 0..rows {
            data.extend_from_slice(x.data());
        }
        let value = Tensor::from_vec(rows, x.cols(), data);
        self.record("broadcast_rows", value, Op::BroadcastRows(a), &[a])
    }

    /// `x + b` where `b` is a `1×n` bias row.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let rows = self.shape(x)[0];
        let b = self.broadcast_rows(bias, rows)?;
        self.add(x, b)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).concat_cols(self.value(b))?;
        self.record("concat_cols", value, Op::ConcatCols(a, b), &[a, b])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(a).slice_cols(start, end)?;
        self.record("slice_cols", value, Op::SliceCols(a, start), &[a])
    }

    /// Reduces over all elements (`axis = None`, giving `1×1`), over rows
    /// (`Some(0)`, giving `1×n`) or over columns (`Some(1)`, giving `m×1`).
    /// Accumulation happens in `f64`.
    pub fn reduce(&mut self, kind: Reduce, a: Var, axis: Option<usize>) -> Result<Var> {
        let x = self.value(a);
        let [m, n] = x.shape();
        let (groups, count) = match axis {
            None => (1, m * n),
            Some(0) => (n, m),
            Some(1) => (m, n),
            Some(ax) => return Err(Error::InvalidArgument(format!("axis {ax} out of range"))),
        };
        if count == 0 {
            return Err(Error::EmptyReduction { op: "reduce" });
        }
        let data = x.data();
        let elem = |g: usize, t: usize| -> f64 {
            let v = match axis {
                None => data[t],
                Some(0) => data[t * n + g],
                _ => data[g * n + t],
            };
            v as f64
        };
        let out: Vec<f32> = (0..groups)
            .map(|g| {
                let acc: f64 = match kind {
                    Reduce::Sum | Reduce::Mean => (0..count).map(|t| elem(g, t)).sum(),
                    Reduce::L1Mean => (0..count).map(|t| elem(g, t).abs()).sum(),
                    Reduce::L2Norm => (0..count).map(|t| elem(g, t).powi(2)).sum(),
                };
                (match kind {
                    Reduce::Sum => acc,
                    Reduce::Mean | Reduce::L1Mean => acc / count as f64,
                    Reduce::L2Norm => acc.sqrt(),
                }) as f32
            })
            .collect();
        let value = match axis {
            None => Tensor::from_vec(1, 1, out),
            Some(0) => Tensor::from_vec(1, n, out),
            _ => Tensor::from_vec(m, 1, out),
        };
        self.record("reduce", value, Op::Reduce(kind, a, axis), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.reduce(Reduce::Sum, a, None)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.reduce(Reduce::Mean, a, None)
    }

    pub fn l1_mean(&mut self, a: Var) -> Result<Var> {
        self.reduce(Reduce::L1Mean, a, None)
    }

    /// Mean softmax cross-entropy of `logits` (`m×C`) against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        let [m, c] = x.shape();
        if labels.len() != m {
            return Err(Error::shape(
                "softmax_cross_entropy",
                &[m, c],
                &[labels.len()],
            ));
        }
        if m == 0 {
            return Err(Error::EmptyReduction {
                op: "softmax_cross_entropy",
            });
        }
        let mut total = 0.0f64;
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::InvalidArgument(format!("label {y} >= {c} classes")));
            }
            let row = x.row(i);
            total += log_sum_exp(row) - row[y] as f64;
        }
        let value = Tensor::scalar((total / m as f64) as f32);
        self.record(
            "softmax_cross_entropy",
            value,
            Op::SoftmaxCrossEntropy(logits, labels.to_vec()),
            &[logits],
        )
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let shape = node.value.shape();
            let up = Tensor::from_vec(shape[0], shape[1], upstream);
            self.backprop_node(node, &up, &mut grads);
            grads[idx] = Some(up.into_vec());
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn backprop_node(&self, node: &Node, up: &Tensor, grads: &mut [Option<Vec<f32>>]) {
        let mut acc = |v: Var, f: &dyn Fn(usize) -> f32| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let len = self.nodes[v.0].value.len();
            let g = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            for (i, gi) in g.iter_mut().enumerate() {
                *gi += f(i);
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let u = up.data();

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    let da = matmul_nt(up, val(*b));
                    acc(*a, &|i| da.data()[i]);
                }
                if self.nodes[b.0].requires_grad {
                    let db = matmul_tn(val(*a), up);
                    acc(*b, &|i| db.data()[i]);
                }
            }
            Op::Binary(kind, a, b) => {
                let (x, y) = (val(*a).data(), val(*b).data());
                match kind {
                    Binary::Add => {
                        acc(*a, &|i| u[i]);
                        acc(*b, &|i| u[i]);
                    }
                    Binary::Sub => {
                        acc(*a, &|i| u[i]);
                        acc(*b, &|i| -u[i]);
                    }
                    Binary::Hadamard => {
                        acc(*a, &|i| u[i] * y[i]);
                        acc(*b, &|i| u[i] * x[i]);
                    }
                    Binary::Div => {
                        acc(*a, &|i| u[i] / y[i]);
                        acc(*b, &|i| -u[i] * x[i] / (y[i] * y[i]));
                    }
                }
            }
            Op::Unary(kind, a) => {
                let x = val(*a).data();
                let out = node.value.data();
                match kind {
                    Unary::Relu => acc(*a, &|i| if x[i] > 0.0 { u[i] } else { 0.0 }),
                    Unary::LeakyRelu => acc(*a, &|i| {
                        if x[i] > 0.0 {
                            u[i]
                        } else {
                            LEAKY_SLOPE * u[i]
                        }
                    }),
                    Unary::Sigmoid => acc(*a, &|i| u[i] * out[i] * (1.0 - out[i])),
                }
            }
            Op::Scale(a, c) => acc(*a, &|i| c * u[i]),
            Op::AddScalar(a) => acc(*a, &|i| u[i]),
            Op::Transpose(a) => {
                let t = up.transpose();
                acc(*a, &|i| t.data()[i]);
            }
            Op::BroadcastRows(a) => {
                let n = up.cols();
                let mut col = vec![0.0f64; n];
                for r in 0..up.rows() {
                    for (cj, v) in col.iter_mut().zip(up.row(r)) {
                        *cj += *v as f64;
                    }
                }
                acc(*a, &|j| col[j] as f32);
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (val(*a).cols(), val(*b).cols());
                let w = ca + cb;
                acc(*a, &|i| u[(i / ca) * w + i % ca]);
                acc(*b, &|i| u[(i / cb) * w + ca + i % cb]);
            }
            Op::SliceCols(a, start) => {
                let full = val(*a).cols();
                let (w, s) = (up.cols(), *start);
                acc(*a, &|i| {
                    let (r, c) = (i / full, i % full);
                    if c >= s && c < s + w {
                        u[r * w + c - s]
                    } else {
                        0.0
                    }
                });
            }
            Op::Reduce(kind, a, axis) => {
                let xt = val(*a);
                let x = xt.data();
                let out = node.value.data();
                let n = xt.cols();
                let group = |i: usize| match axis {
                    None => 0,
                    Some(0) => i % n,
                    _ => i / n,
                };
                let count = match axis {
                    None => xt.len(),
                    Some(0) => xt.rows(),
                    _ => n,
                } as f32;
                match kind {
                    Reduce::Sum => acc(*a, &|i| u[group(i)]),
                    Reduce::Mean => acc(*a, &|i| u[group(i)] / count),
                    Reduce::L1Mean => acc(*a, &|i| {
                        let s = if x[i] > 0.0 {
                            1.0
                        } else if x[i] < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        s * u[group(i)] / count
                    }),
                    Reduce::L2Norm => acc(*a, &|i| {
                        let norm = out[group(i)];
                        if norm > 0.0 {
                            u[group(i)] * x[i] / norm
                        } else {
                            0.0
                        }
                    }),
                }
            }
            Op::SoftmaxCrossEntropy(a, labels) => {
                let logits = val(*a);
                let [m, c] = logits.shape();
                let scale = u[0] / m as f32;
                let mut g = vec![0.0f32; m * c];
                for (i, &y) in labels.iter().enumerate() {
                    let row = logits.row(i);
                    let lse = log_sum_exp(row);
                    for j in 0..c {
                        let p = ((row[j] as f64) - lse).exp() as f32;
                        g[i * c + j] = scale * (p - if j == y { 1.0 } else { 0.0 });
                    }
                }
                acc(*a, &|i| g[i]);
            }
        }
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when `v` did not
    /// contribute to the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        let [r, c] = self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::from_vec(r, c, g.clone()),
            None => Tensor::zeros(r, c),
        }
    }
}

pub fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(row: &[f32]) -> f64 {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let s: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
    max + s.ln()
}
