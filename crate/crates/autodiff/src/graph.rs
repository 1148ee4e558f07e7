use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{gemm, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Reduce or operate down each column.
    Rows,
    /// Reduce or operate along each row.
    Cols,
}

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Softmax(Var, Axis),
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Tensor,
        rstd: Vec<f64>,
    },
    Dropout(Var, Tensor),
    Concat(Vec<Var>, Axis),
    Slice {
        x: Var,
        axis: Axis,
        start: usize,
    },
    GatherRows(Var, Vec<usize>),
    Pick(Var, Vec<usize>),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    SumAlong(Var, Axis),
    Minimum(Var, Var),
    Clamp(Var, f64, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records forward computations so that gradients can be pulled back from a
/// scalar loss. A graph supports exactly one backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
    consumed: bool,
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient with respect to an arbitrary recorded node, if it received one.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient for a parameter summed over every leaf that loaded it.
    pub fn param(&self, id: ParamId) -> Option<Tensor> {
        let mut total: Option<Tensor> = None;
        for (pid, var) in &self.params {
            if *pid != id {
                continue;
            }
            if let Some(g) = self.wrt(*var) {
                match &mut total {
                    Some(t) => t.add_assign(g),
                    None => total = Some(g.clone()),
                }
            }
        }
        total
    }
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        })
    }
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = x.cols();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn finish(&mut self, name: &'static str, value: Tensor, op: Op, rg: bool) -> Result<Var> {
        check_finite(name, &value)?;
        Ok(self.push(value, op, rg))
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Loads a parameter from `store` as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let var = self.push(store.get(id).clone(), Op::Leaf, true);
        self.params.push((id, var));
        var
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.finish("matmul", value, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let value = x.zip_map(y, |p, q| p + q);
        let rg = self.rg(a) || self.rg(b);
        self.finish("add", value, Op::Add(a, b), rg)
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                left: xv.shape(),
                right: rv.shape(),
            });
        }
        let mut value = xv.clone();
        let cols = xv.cols();
        for chunk in value.data_mut().chunks_mut(cols.max(1)) {
            for (v, b) in chunk.iter_mut().zip(rv.data()) {
                *v += b;
            }
        }
        let rg = self.rg(x) || self.rg(row);
        self.finish("add_row", value, Op::AddRow(x, row), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let value = x.zip_map(y, |p, q| p - q);
        let rg = self.rg(a) || self.rg(b);
        self.finish("sub", value, Op::Sub(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let value = x.zip_map(y, |p, q| p * q);
        let rg = self.rg(a) || self.rg(b);
        self.finish("mul", value, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.rg(x);
        self.finish("scale", value, Op::Scale(x, factor), rg)
    }

    pub fn add_scalar(&mut self, x: Var, offset: f64) -> Result<Var> {
        let value = self.value(x).map(|v| v + offset);
        let rg = self.rg(x);
        self.finish("add_scalar", value, Op::AddScalar(x), rg)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.finish("relu", value, Op::Relu(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(f64::tanh);
        let rg = self.rg(x);
        self.finish("tanh", value, Op::Tanh(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        let rg = self.rg(x);
        self.finish("sigmoid", value, Op::Sigmoid(x), rg)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(f64::exp);
        let rg = self.rg(x);
        self.finish("exp", value, Op::Exp(x), rg)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(f64::ln);
        let rg = self.rg(x);
        self.finish("log", value, Op::Log(x), rg)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v * v);
        let rg = self.rg(x);
        self.finish("square", value, Op::Square(x), rg)
    }

    /// Softmax along `axis`: [`Axis::Cols`] normalizes each row.
    pub fn softmax(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let value = match axis {
            Axis::Cols => softmax_rows(self.value(x)),
            Axis::Rows => softmax_rows(&self.value(x).transpose()).transpose(),
        };
        let rg = self.rg(x);
        self.finish("softmax", value, Op::Softmax(x, axis), rg)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let mut value = self.value(x).clone();
        let cols = value.cols();
        for row in value.data_mut().chunks_mut(cols.max(1)) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let rg = self.rg(x);
        self.finish("log_softmax", value, Op::LogSoftmax(x), rg)
    }

    /// Row-wise layer normalization with `1 x n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let (gv, bv) = (self.value(gain), self.value(bias));
        for p in [gv, bv] {
            if p.shape() != [1, xv.cols()] {
                return Err(Error::ShapeMismatch {
                    op: "layer_norm",
                    left: xv.shape(),
                    right: p.shape(),
                });
            }
        }
        let cols = xv.cols();
        let mut normalized = xv.clone();
        let mut rstd = Vec::with_capacity(xv.rows());
        for row in normalized.data_mut().chunks_mut(cols.max(1)) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * r;
            }
            rstd.push(r);
        }
        let mut value = normalized.clone();
        for row in value.data_mut().chunks_mut(cols.max(1)) {
            for ((v, g), b) in row.iter_mut().zip(gv.data()).zip(bv.data()) {
                *v = *v * g + b;
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        self.finish(
            "layer_norm",
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                rstd,
            },
            rg,
        )
    }

    /// Inverted dropout. Returns `x` itself when `train` is false or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, train: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument {
                op: "dropout",
                reason: format!("probability {p} outside [0, 1)"),
            });
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let xv = self.value(x);
        let mask = Tensor::from_vec(
            xv.rows(),
            xv.cols(),
            (0..xv.len())
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                .collect(),
        )?;
        let value = xv.zip_map(&mask, |a, m| a * m);
        let rg = self.rg(x);
        self.finish("dropout", value, Op::Dropout(x, mask), rg)
    }

    /// Concatenates along `axis`: [`Axis::Rows`] stacks vertically.
    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = match parts.first() {
            Some(v) => self.value(*v).shape(),
            None => {
                return Err(Error::InvalidArgument {
                    op: "concat",
                    reason: "no inputs".into(),
                })
            }
        };
        for p in parts {
            let s = self.value(*p).shape();
            let ok = match axis {
                Axis::Rows => s[1] == first[1],
                Axis::Cols => s[0] == first[0],
            };
            if !ok {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: first,
                    right: s,
                });
            }
        }
        let value = match axis {
            Axis::Rows => {
                let rows = parts.iter().map(|p| self.value(*p).rows()).sum();
                let mut data = Vec::with_capacity(rows * first[1]);
                for p in parts {
                    data.extend_from_slice(self.value(*p).data());
                }
                Tensor::from_vec(rows, first[1], data)?
            }
            Axis::Cols => {
                let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
                let mut data = Vec::with_capacity(first[0] * cols);
                for r in 0..first[0] {
                    for p in parts {
                        data.extend_from_slice(self.value(*p).row(r));
                    }
                }
                Tensor::from_vec(first[0], cols, data)?
            }
        };
        let rg = parts.iter().any(|p| self.rg(*p));
        self.finish("concat", value, Op::Concat(parts.to_vec(), axis), rg)
    }

    /// Takes `len` rows (or columns) starting at `start`.
    pub fn slice(&mut self, x: Var, axis: Axis, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let extent = match axis {
            Axis::Rows => xv.rows(),
            Axis::Cols => xv.cols(),
        };
        if start + len > extent {
            return Err(Error::InvalidArgument {
                op: "slice",
                reason: format!(
                    "range {start}..{} exceeds {extent} for shape {:?}",
                    start + len,
                    xv.shape()
                ),
            });
        }
        let value = match axis {
            Axis::Rows => Tensor::from_vec(
                len,
                xv.cols(),
                xv.data()[start * xv.cols()..(start + len) * xv.cols()].to_vec(),
            )?,
            Axis::Cols => {
                let mut data = Vec::with_capacity(xv.rows() * len);
                for r in 0..xv.rows() {
                    data.extend_from_slice(&xv.row(r)[start..start + len]);
                }
                Tensor::from_vec(xv.rows(), len, data)?
            }
        };
        let rg = self.rg(x);
        self.finish("slice", value, Op::Slice { x, axis, start }, rg)
    }

    /// Selects rows by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let mut data = Vec::with_capacity(indices.len() * xv.cols());
        for &i in indices {
            if i >= xv.rows() {
                return Err(Error::InvalidArgument {
                    op: "gather_rows",
                    reason: format!("row {i} out of {}", xv.rows()),
                });
            }
            data.extend_from_slice(xv.row(i));
        }
        let value = Tensor::from_vec(indices.len(), xv.cols(), data)?;
        let rg = self.rg(x);
        self.finish("gather_rows", value, Op::GatherRows(x, indices.to_vec()), rg)
    }

    /// Picks one column per row, producing an `m x 1` column.
    pub fn pick(&mut self, x: Var, columns: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if columns.len() != xv.rows() || columns.iter().any(|&c| c >= xv.cols()) {
            return Err(Error::InvalidArgument {
                op: "pick",
                reason: format!("{} indices for shape {:?}", columns.len(), xv.shape()),
            });
        }
        let data = columns.iter().enumerate().map(|(r, &c)| xv.get(r, c)).collect();
        let value = Tensor::from_vec(columns.len(), 1, data)?;
        let rg = self.rg(x);
        self.finish("pick", value, Op::Pick(x, columns.to_vec()), rg)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transpose();
        let rg = self.rg(x);
        self.finish("transpose", value, Op::Transpose(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.finish("sum", value, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::InvalidArgument {
                op: "mean",
                reason: "empty tensor".into(),
            });
        }
        let value = Tensor::scalar(xv.sum() / xv.len() as f64);
        let rg = self.rg(x);
        self.finish("mean", value, Op::Mean(x), rg)
    }

    /// Sums along `axis`: [`Axis::Cols`] yields an `m x 1` column of row sums.
    pub fn sum_along(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let xv = self.value(x);
        let value = match axis {
            Axis::Cols => Tensor::from_vec(xv.rows(), 1, (0..xv.rows()).map(|r| xv.row(r).iter().sum()).collect())?,
            Axis::Rows => {
                let mut out = Tensor::zeros(1, xv.cols());
                for r in 0..xv.rows() {
                    for (o, v) in out.data_mut().iter_mut().zip(xv.row(r)) {
                        *o += v;
                    }
                }
                out
            }
        };
        let rg = self.rg(x);
        self.finish("sum_along", value, Op::SumAlong(x, axis), rg)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("minimum", x, y)?;
        let value = x.zip_map(y, f64::min);
        let rg = self.rg(a) || self.rg(b);
        self.finish("minimum", value, Op::Minimum(a, b), rg)
    }

    /// Clamps into `[lo, hi]`; the gradient passes where `lo <= x <= hi`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi {
            return Err(Error::InvalidArgument {
                op: "clamp",
                reason: format!("lo {lo} > hi {hi}"),
            });
        }
        let value = self.value(x).map(|v| v.clamp(lo, hi));
        let rg = self.rg(x);
        self.finish("clamp", value, Op::Clamp(x, lo, hi), rg)
    }

    /// Reverse sweep from a `1 x 1` loss. Consumes the graph.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        let shape = self.value(loss).shape();
        if shape != [1, 1] {
            return Err(Error::NotScalar { shape });
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &upstream, &mut grads)?;
            grads[idx] = Some(upstream);
        }
        Ok(Gradients {
            grads,
            params: std::mem::take(&mut self.params),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, g: Tensor) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, up: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    gemm(false, up, true, bv, &mut ga);
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                    gemm(true, av, false, up, &mut gb);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, up.clone());
                self.accumulate(grads, *b, up.clone());
            }
            Op::AddRow(x, row) => {
                self.accumulate(grads, *x, up.clone());
                if self.rg(*row) {
                    let mut g = Tensor::zeros(1, up.cols());
                    for r in 0..up.rows() {
                        for (o, v) in g.data_mut().iter_mut().zip(up.row(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *row, g);
                }
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, up.clone());
                self.accumulate(grads, *b, up.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, up.zip_map(bv, |g, y| g * y));
                self.accumulate(grads, *b, up.zip_map(av, |g, x| g * x));
            }
            Op::Scale(x, factor) => {
                let f = *factor;
                self.accumulate(grads, *x, up.map(|g| g * f));
            }
            Op::AddScalar(x) => self.accumulate(grads, *x, up.clone()),
            Op::Relu(x) => {
                let g = up.zip_map(self.value(*x), |g, v| if v > 0.0 { g } else { 0.0 });
                self.accumulate(grads, *x, g);
            }
            Op::Tanh(x) => self.accumulate(grads, *x, up.zip_map(out, |g, y| g * (1.0 - y * y))),
            Op::Sigmoid(x) => self.accumulate(grads, *x, up.zip_map(out, |g, y| g * y * (1.0 - y))),
            Op::Exp(x) => self.accumulate(grads, *x, up.zip_map(out, |g, y| g * y)),
            Op::Log(x) => self.accumulate(grads, *x, up.zip_map(self.value(*x), |g, v| g / v)),
            Op::Square(x) => self.accumulate(grads, *x, up.zip_map(self.value(*x), |g, v| 2.0 * g * v)),
            Op::Softmax(x, axis) => {
                let (y, u) = match axis {
                    Axis::Cols => (out.clone(), up.clone()),
                    Axis::Rows => (out.transpose(), up.transpose()),
                };
                let mut g = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = y.row(r).iter().zip(u.row(r)).map(|(a, b)| a * b).sum();
                    for c in 0..y.cols() {
                        g.set(r, c, y.get(r, c) * (u.get(r, c) - dot));
                    }
                }
                let g = if *axis == Axis::Rows { g.transpose() } else { g };
                self.accumulate(grads, *x, g);
            }
            Op::LogSoftmax(x) => {
                let mut g = up.clone();
                for r in 0..out.rows() {
                    let total: f64 = up.row(r).iter().sum();
                    for c in 0..out.cols() {
                        g.set(r, c, up.get(r, c) - out.get(r, c).exp() * total);
                    }
                }
                self.accumulate(grads, *x, g);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                rstd,
            } => {
                let gv = self.value(*gain);
                let cols = out.cols();
                let n = cols as f64;
                if self.rg(*x) {
                    let mut gx = Tensor::zeros(out.rows(), cols);
                    for r in 0..out.rows() {
                        let xhat = normalized.row(r);
                        let dxhat: Vec<f64> = up.row(r).iter().zip(gv.data()).map(|(u, g)| u * g).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / n;
                        let mean_dx = dxhat.iter().zip(xhat).map(|(d, h)| d * h).sum::<f64>() / n;
                        for c in 0..cols {
                            gx.set(r, c, rstd[r] * (dxhat[c] - mean_d - xhat[c] * mean_dx));
                        }
                    }
                    self.accumulate(grads, *x, gx);
                }
                if self.rg(*gain) {
                    let mut gg = Tensor::zeros(1, cols);
                    for r in 0..out.rows() {
                        for c in 0..cols {
                            gg.data_mut()[c] += up.get(r, c) * normalized.get(r, c);
                        }
                    }
                    self.accumulate(grads, *gain, gg);
                }
                if self.rg(*bias) {
                    let mut gb = Tensor::zeros(1, cols);
                    for r in 0..out.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(up.row(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *bias, gb);
                }
            }
            Op::Dropout(x, mask) => self.accumulate(grads, *x, up.zip_map(mask, |g, m| g * m)),
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for p in parts {
                    let shape = self.value(*p).shape();
                    let g = match axis {
                        Axis::Rows => {
                            let len = shape[0];
                            let t = Tensor::from_vec(
                                len,
                                up.cols(),
                                up.data()[offset * up.cols()..(offset + len) * up.cols()].to_vec(),
                            )?;
                            offset += len;
                            t
                        }
                        Axis::Cols => {
                            let len = shape[1];
                            let mut data = Vec::with_capacity(shape[0] * len);
                            for r in 0..up.rows() {
                                data.extend_from_slice(&up.row(r)[offset..offset + len]);
                            }
                            offset += len;
                            Tensor::from_vec(shape[0], len, data)?
                        }
                    };
                    self.accumulate(grads, *p, g);
                }
            }
            Op::Slice { x, axis, start } => {
                if self.rg(*x) {
                    let xv = self.value(*x);
                    let mut g = Tensor::zeros(xv.rows(), xv.cols());
                    match axis {
                        Axis::Rows => {
                            let c = xv.cols();
                            g.data_mut()[start * c..start * c + up.len()].copy_from_slice(up.data());
                        }
                        Axis::Cols => {
                            for r in 0..up.rows() {
                                for c in 0..up.cols() {
                                    g.set(r, start + c, up.get(r, c));
                                }
                            }
                        }
                    }
                    self.accumulate(grads, *x, g);
                }
            }
            Op::GatherRows(x, indices) => {
                if self.rg(*x) {
                    let xv = self.value(*x);
                    let mut g = Tensor::zeros(xv.rows(), xv.cols());
                    let c = xv.cols();
                    for (r, &i) in indices.iter().enumerate() {
                        for (o, v) in g.data_mut()[i * c..(i + 1) * c].iter_mut().zip(up.row(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *x, g);
                }
            }
            Op::Pick(x, columns) => {
                if self.rg(*x) {
                    let xv = self.value(*x);
                    let mut g = Tensor::zeros(xv.rows(), xv.cols());
                    for (r, &c) in columns.iter().enumerate() {
                        g.set(r, c, up.get(r, 0));
                    }
                    self.accumulate(grads, *x, g);
                }
            }
            Op::Transpose(x) => self.accumulate(grads, *x, up.transpose()),
            Op::Sum(x) => {
                let s = self.value(*x).shape();
                self.accumulate(grads, *x, Tensor::filled(s[0], s[1], up.item()));
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let v = up.item() / xv.len() as f64;
                self.accumulate(grads, *x, Tensor::filled(xv.rows(), xv.cols(), v));
            }
            Op::SumAlong(x, axis) => {
                let s = self.value(*x).shape();
                let mut g = Tensor::zeros(s[0], s[1]);
                for r in 0..s[0] {
                    for c in 0..s[1] {
                        let v = match axis {
                            Axis::Cols => up.get(r, 0),
                            Axis::Rows => up.get(0, c),
                        };
                        g.set(r, c, v);
                    }
                }
                self.accumulate(grads, *x, g);
            }
            Op::Minimum(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut ga = up.clone();
                let mut gb = up.clone();
                for i in 0..up.len() {
                    if av.data()[i] <= bv.data()[i] {
                        gb.data_mut()[i] = 0.0;
                    } else {
                        ga.data_mut()[i] = 0.0;
                    }
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Clamp(x, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                let g = up.zip_map(self.value(*x), |g, v| if v >= lo && v <= hi { g } else { 0.0 });
                self.accumulate(grads, *x, g);
            }
        }
        Ok(())
    }
}
