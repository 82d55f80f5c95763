//! Define-by-run reverse-mode automatic differentiation over real tensors.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value,
//! so node order is already a topological order and [`Graph::backward`]
//! walks it in reverse. Nodes that do not depend on a trainable leaf are
//! skipped during the backward pass.

use std::cell::RefCell;
use std::sync::Arc;

use super::tensor::{invert, matmul_at_acc, matmul_bt_acc, matmul_into, Tensor};
use crate::error::{Error, Result};

/// Variance floor for layer normalization; constant rows normalize to zero.
pub const LAYER_NORM_VAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Tanh,
    /// tanh approximation of the Gaussian error linear unit
    Gelu,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    Transpose(usize),
    SumAll(usize),
    SumAxis(usize, usize),
    Unary(usize, Unary),
    SoftmaxRows(usize),
    LayerNormRows(usize),
    Reshape(usize),
    Gather(usize, Arc<Vec<usize>>),
    Concat(Vec<usize>, usize),
    Inverse(usize),
    SteArgmax(usize, f64),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Tape of operations for one forward/backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct DiffTensor<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for DiffTensor<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffTensor").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> DiffTensor<'_> {
        self.push_arc(Arc::new(value), op, requires_grad)
    }

    fn push_arc(&self, value: Arc<Tensor>, op: Op, requires_grad: bool) -> DiffTensor<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, requires_grad });
        DiffTensor { graph: self, id: nodes.len() - 1 }
    }

    /// Trainable leaf.
    pub fn param(&self, value: Arc<Tensor>) -> DiffTensor<'_> {
        self.push_arc(value, Op::Leaf, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&self, value: Tensor) -> DiffTensor<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, v: f64) -> DiffTensor<'_> {
        self.constant(Tensor::scalar(v))
    }

    fn value(&self, id: usize) -> Arc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Concatenates 2-D tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat<'g>(&'g self, parts: &[DiffTensor<'g>], axis: usize) -> Result<DiffTensor<'g>> {
        if parts.is_empty() {
            return Err(Error::Shape("concat of zero tensors".into()));
        }
        let values: Vec<Arc<Tensor>> = parts.iter().map(|p| self.value(p.id)).collect();
        let dims: Vec<(usize, usize)> = values.iter().map(|v| v.dims2()).collect::<Result<_>>()?;
        let (out_shape, data) = match axis {
            0 => {
                let cols = dims[0].1;
                if dims.iter().any(|d| d.1 != cols) {
                    return Err(Error::Shape(format!("row concat with mismatched widths {dims:?}")));
                }
                let rows: usize = dims.iter().map(|d| d.0).sum();
                let data = values.iter().flat_map(|v| v.data().iter().copied()).collect();
                (vec![rows, cols], data)
            }
            1 => {
                let rows = dims[0].0;
                if dims.iter().any(|d| d.0 != rows) {
                    return Err(Error::Shape(format!("column concat with mismatched heights {dims:?}")));
                }
                let cols: usize = dims.iter().map(|d| d.1).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for (v, d) in values.iter().zip(&dims) {
                        data.extend_from_slice(&v.data()[r * d.1..(r + 1) * d.1]);
                    }
                }
                (vec![rows, cols], data)
            }
            _ => return Err(Error::Shape(format!("concat axis {axis} unsupported"))),
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = self.requires(&ids);
        Ok(self.push(Tensor::new(out_shape, data)?, Op::Concat(ids, axis), rg))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: DiffTensor<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(gy) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                backprop(&nodes, id, &gy, &mut grads);
            }
            grads[id] = Some(gy);
        }
        Ok(Gradients { grads })
    }
}

/// Accumulated gradients, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `x`, zeros if `x` did not
    /// influence it.
    pub fn get(&self, x: DiffTensor<'_>) -> Vec<f64> {
        match &self.grads[x.id] {
            Some(g) => g.clone(),
            None => vec![0.0; x.graph.value(x.id).len()],
        }
    }

    pub(crate) fn take(&mut self, x: DiffTensor<'_>) -> Option<Vec<f64>> {
        self.grads[x.id].take()
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], nodes: &[Node], id: usize, f: impl FnOnce(&mut [f64])) {
    if !nodes[id].requires_grad {
        return;
    }
    let slot = grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()]);
    f(slot);
}

fn backprop(nodes: &[Node], id: usize, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let y = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            acc(grads, nodes, *a, |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x += d));
            acc(grads, nodes, *b, |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x += d));
        }
        Op::Sub(a, b) => {
            acc(grads, nodes, *a, |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x += d));
            acc(grads, nodes, *b, |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x -= d));
        }
        Op::Mul(a, b) => {
            let (va, vb) = (nodes[*a].value.clone(), nodes[*b].value.clone());
            acc(grads, nodes, *a, |g| {
                for ((x, d), w) in g.iter_mut().zip(gy).zip(vb.data()) {
                    *x += d * w;
                }
            });
            acc(grads, nodes, *b, |g| {
                for ((x, d), w) in g.iter_mut().zip(gy).zip(va.data()) {
                    *x += d * w;
                }
            });
        }
        Op::Div(a, b) => {
            let vb = nodes[*b].value.clone();
            acc(grads, nodes, *a, |g| {
                for ((x, d), w) in g.iter_mut().zip(gy).zip(vb.data()) {
                    *x += d / w;
                }
            });
            acc(grads, nodes, *b, |g| {
                for (((x, d), w), q) in g.iter_mut().zip(gy).zip(vb.data()).zip(y.data()) {
                    *x -= d * q / w;
                }
            });
        }
        Op::Scale(a, s) => acc(grads, nodes, *a, |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x += s * d)),
        Op::AddScalar(a) | Op::Reshape(a) => {
            acc(grads, nodes, *a, |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x += d))
        }
        Op::MatMul(a, b) => {
            let (va, vb) = (nodes[*a].value.clone(), nodes[*b].value.clone());
            let (n, k) = va.dims2().unwrap();
            let m = vb.dims2().unwrap().1;
            acc(grads, nodes, *a, |g| matmul_bt_acc(gy, vb.data(), g, n, m, k));
            acc(grads, nodes, *b, |g| matmul_at_acc(va.data(), gy, g, n, k, m));
        }
        Op::Transpose(a) => {
            let (r, c) = nodes[*a].value.dims2().unwrap();
            acc(grads, nodes, *a, |g| {
                for i in 0..r {
                    for j in 0..c {
                        g[i * c + j] += gy[j * r + i];
                    }
                }
            });
        }
        Op::SumAll(a) => acc(grads, nodes, *a, |g| g.iter_mut().for_each(|x| *x += gy[0])),
        Op::SumAxis(a, axis) => {
            let (r, c) = nodes[*a].value.dims2().unwrap();
            acc(grads, nodes, *a, |g| {
                for i in 0..r {
                    for j in 0..c {
                        g[i * c + j] += if *axis == 0 { gy[j] } else { gy[i] };
                    }
                }
            });
        }
        Op::Unary(a, kind) => {
            let va = nodes[*a].value.clone();
            acc(grads, nodes, *a, |g| {
                for (((x, d), &xi), &yi) in g.iter_mut().zip(gy).zip(va.data()).zip(y.data()) {
                    let dydx = match kind {
                        Unary::Exp => yi,
                        Unary::Ln => 1.0 / xi,
                        Unary::Sqrt => 0.5 / yi,
                        Unary::Sin => xi.cos(),
                        Unary::Cos => -xi.sin(),
                        Unary::Tanh => 1.0 - yi * yi,
                        Unary::Gelu => gelu_grad(xi),
                    };
                    *x += d * dydx;
                }
            });
        }
        Op::SoftmaxRows(a) => {
            let (r, c) = y.dims2().unwrap();
            acc(grads, nodes, *a, |g| softmax_backward(y.data(), gy, g, r, c, 1.0));
        }
        Op::SteArgmax(a, t) => {
            let va = nodes[*a].value.clone();
            let (r, c) = va.dims2().unwrap();
            let s = softmax_rows(&va.map(|x| x / t).into_data(), r, c);
            acc(grads, nodes, *a, |g| softmax_backward(&s, gy, g, r, c, 1.0 / t));
        }
        Op::LayerNormRows(a) => {
            let va = nodes[*a].value.clone();
            let (r, c) = va.dims2().unwrap();
            acc(grads, nodes, *a, |g| {
                for i in 0..r {
                    let x = &va.data()[i * c..(i + 1) * c];
                    let (_, var) = mean_var(x);
                    let yhat = &y.data()[i * c..(i + 1) * c];
                    let d = &gy[i * c..(i + 1) * c];
                    let inv_std = 1.0 / var.max(LAYER_NORM_VAR_FLOOR).sqrt();
                    let mean_d = d.iter().sum::<f64>() / c as f64;
                    let mean_dy = if var > LAYER_NORM_VAR_FLOOR {
                        d.iter().zip(yhat).map(|(p, q)| p * q).sum::<f64>() / c as f64
                    } else {
                        0.0
                    };
                    for j in 0..c {
                        g[i * c + j] += inv_std * (d[j] - mean_d - yhat[j] * mean_dy);
                    }
                }
            });
        }
        Op::Gather(a, idx) => acc(grads, nodes, *a, |g| {
            for (&i, d) in idx.iter().zip(gy) {
                g[i] += d;
            }
        }),
        Op::Concat(parts, axis) => {
            let dims: Vec<(usize, usize)> = parts.iter().map(|p| nodes[*p].value.dims2().unwrap()).collect();
            let total_cols: usize = dims.iter().map(|d| d.1).sum();
            let mut row_off = 0;
            let mut col_off = 0;
            for (p, (r, c)) in parts.iter().zip(&dims) {
                acc(grads, nodes, *p, |g| {
                    if *axis == 0 {
                        let start = row_off * c;
                        g.iter_mut().zip(&gy[start..start + r * c]).for_each(|(x, d)| *x += d);
                    } else {
                        for i in 0..*r {
                            for j in 0..*c {
                                g[i * c + j] += gy[i * total_cols + col_off + j];
                            }
                        }
                    }
                });
                row_off += r;
                col_off += c;
            }
        }
        Op::Inverse(a) => {
            // dA = -Yᵀ dY Yᵀ
            let n = y.dims2().unwrap().0;
            let yt = transpose(y.data(), n, n);
            let mut tmp = vec![0.0; n * n];
            matmul_into(&yt, gy, &mut tmp, n, n, n);
            let mut out = vec![0.0; n * n];
            matmul_into(&tmp, &yt, &mut out, n, n, n);
            acc(grads, nodes, *a, |g| g.iter_mut().zip(&out).for_each(|(x, d)| *x -= d));
        }
    }
}

fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

pub(crate) fn softmax_rows(x: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &x[i * c..(i + 1) * c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..c {
            let e = (row[j] - max).exp();
            out[i * c + j] = e;
            sum += e;
        }
        out[i * c..(i + 1) * c].iter_mut().for_each(|v| *v /= sum);
    }
    out
}

fn softmax_backward(s: &[f64], gy: &[f64], g: &mut [f64], r: usize, c: usize, scale: f64) {
    for i in 0..r {
        let srow = &s[i * c..(i + 1) * c];
        let drow = &gy[i * c..(i + 1) * c];
        let dot: f64 = srow.iter().zip(drow).map(|(a, b)| a * b).sum();
        for j in 0..c {
            g[i * c + j] += scale * srow[j] * (drow[j] - dot);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl<'g> DiffTensor<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.graph.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn same_graph(&self, other: &DiffTensor<'g>) -> Result<()> {
        if !std::ptr::eq(self.graph, other.graph) {
            return Err(Error::Shape("operands live on different graphs".into()));
        }
        Ok(())
    }

    fn binary(&self, other: &DiffTensor<'g>, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<DiffTensor<'g>> {
        self.same_graph(other)?;
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(Error::Shape(format!("elementwise op on {:?} and {:?}", a.shape(), b.shape())));
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        let rg = self.graph.requires(&[self.id, other.id]);
        Ok(self.graph.push(Tensor::new(a.shape().to_vec(), data)?, op, rg))
    }

    pub fn add(&self, other: &DiffTensor<'g>) -> Result<DiffTensor<'g>> {
        self.binary(other, Op::Add(self.id, other.id), |x, y| x + y)
    }

    pub fn sub(&self, other: &DiffTensor<'g>) -> Result<DiffTensor<'g>> {
        self.binary(other, Op::Sub(self.id, other.id), |x, y| x - y)
    }

    pub fn mul(&self, other: &DiffTensor<'g>) -> Result<DiffTensor<'g>> {
        self.binary(other, Op::Mul(self.id, other.id), |x, y| x * y)
    }

    pub fn div(&self, other: &DiffTensor<'g>) -> Result<DiffTensor<'g>> {
        self.binary(other, Op::Div(self.id, other.id), |x, y| x / y)
    }

    fn unary_value(&self, value: Tensor, op: Op) -> DiffTensor<'g> {
        let rg = self.graph.requires(&[self.id]);
        self.graph.push(value, op, rg)
    }

    pub fn scale(&self, s: f64) -> DiffTensor<'g> {
        self.unary_value(self.value().map(|x| x * s), Op::Scale(self.id, s))
    }

    pub fn neg(&self) -> DiffTensor<'g> {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, s: f64) -> DiffTensor<'g> {
        self.unary_value(self.value().map(|x| x + s), Op::AddScalar(self.id))
    }

    pub fn apply(&self, kind: Unary) -> DiffTensor<'g> {
        let f = |x: f64| match kind {
            Unary::Exp => x.exp(),
            Unary::Ln => x.ln(),
            Unary::Sqrt => x.sqrt(),
            Unary::Sin => x.sin(),
            Unary::Cos => x.cos(),
            Unary::Tanh => x.tanh(),
            Unary::Gelu => gelu(x),
        };
        self.unary_value(self.value().map(f), Op::Unary(self.id, kind))
    }

    pub fn exp(&self) -> DiffTensor<'g> {
        self.apply(Unary::Exp)
    }

    pub fn ln(&self) -> DiffTensor<'g> {
        self.apply(Unary::Ln)
    }

    pub fn sqrt(&self) -> DiffTensor<'g> {
        self.apply(Unary::Sqrt)
    }

    pub fn sin(&self) -> DiffTensor<'g> {
        self.apply(Unary::Sin)
    }

    pub fn cos(&self) -> DiffTensor<'g> {
        self.apply(Unary::Cos)
    }

    pub fn tanh(&self) -> DiffTensor<'g> {
        self.apply(Unary::Tanh)
    }

    pub fn gelu(&self) -> DiffTensor<'g> {
        self.apply(Unary::Gelu)
    }

    pub fn square(&self) -> Result<DiffTensor<'g>> {
        self.mul(self)
    }

    pub fn matmul(&self, other: &DiffTensor<'g>) -> Result<DiffTensor<'g>> {
        self.same_graph(other)?;
        let (a, b) = (self.value(), other.value());
        let (n, k) = a.dims2()?;
        let (k2, m) = b.dims2()?;
        if k != k2 || a.shape().len() != 2 || b.shape().len() != 2 {
            return Err(Error::Shape(format!("matmul of {:?} and {:?}", a.shape(), b.shape())));
        }
        let mut out = vec![0.0; n * m];
        matmul_into(a.data(), b.data(), &mut out, n, k, m);
        let rg = self.graph.requires(&[self.id, other.id]);
        Ok(self.graph.push(Tensor::new(vec![n, m], out)?, Op::MatMul(self.id, other.id), rg))
    }

    pub fn transpose(&self) -> Result<DiffTensor<'g>> {
        let a = self.value();
        let (r, c) = a.dims2()?;
        Ok(self.unary_value(Tensor::new(vec![c, r], transpose(a.data(), r, c))?, Op::Transpose(self.id)))
    }

    pub fn sum(&self) -> DiffTensor<'g> {
        let s = self.value().data().iter().sum();
        self.unary_value(Tensor::scalar(s), Op::SumAll(self.id))
    }

    pub fn mean(&self) -> DiffTensor<'g> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sums a matrix over `axis`: 0 collapses rows (→ `cols`), 1 collapses
    /// columns (→ `rows`).
    pub fn sum_axis(&self, axis: usize) -> Result<DiffTensor<'g>> {
        let a = self.value();
        let (r, c) = a.dims2()?;
        let d = a.data();
        let out: Vec<f64> = match axis {
            0 => (0..c).map(|j| (0..r).map(|i| d[i * c + j]).sum()).collect(),
            1 => (0..r).map(|i| d[i * c..(i + 1) * c].iter().sum()).collect(),
            _ => return Err(Error::Shape(format!("sum over axis {axis} of a matrix"))),
        };
        let n = out.len();
        Ok(self.unary_value(Tensor::new(vec![n], out)?, Op::SumAxis(self.id, axis)))
    }

    pub fn softmax_rows(&self) -> Result<DiffTensor<'g>> {
        let a = self.value();
        let (r, c) = a.dims2()?;
        let out = softmax_rows(a.data(), r, c);
        Ok(self.unary_value(Tensor::new(a.shape().to_vec(), out)?, Op::SoftmaxRows(self.id)))
    }

    /// Row-wise standardization without affine parameters.
    pub fn layer_norm_rows(&self) -> Result<DiffTensor<'g>> {
        let a = self.value();
        let (r, c) = a.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let x = &a.data()[i * c..(i + 1) * c];
            let (mean, var) = mean_var(x);
            let inv_std = 1.0 / var.max(LAYER_NORM_VAR_FLOOR).sqrt();
            for j in 0..c {
                out[i * c + j] = if var > LAYER_NORM_VAR_FLOOR { (x[j] - mean) * inv_std } else { 0.0 };
            }
        }
        Ok(self.unary_value(Tensor::new(a.shape().to_vec(), out)?, Op::LayerNormRows(self.id)))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<DiffTensor<'g>> {
        let v = self.value().reshaped(shape)?;
        Ok(self.unary_value(v, Op::Reshape(self.id)))
    }

    /// `out.flat[i] = self.flat[indices[i]]`, reshaped to `shape`.
    pub fn gather(&self, indices: Arc<Vec<usize>>, shape: &[usize]) -> Result<DiffTensor<'g>> {
        let a = self.value();
        if let Some(&bad) = indices.iter().find(|&&i| i >= a.len()) {
            return Err(Error::Shape(format!("gather index {bad} out of {} values", a.len())));
        }
        let data = indices.iter().map(|&i| a.data()[i]).collect();
        let v = Tensor::new(shape.to_vec(), data)?;
        Ok(self.unary_value(v, Op::Gather(self.id, indices)))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<DiffTensor<'g>> {
        let (r, c) = self.value().dims2()?;
        if start + len > c {
            return Err(Error::Shape(format!("column slice {start}..{} of width {c}", start + len)));
        }
        let idx = (0..r).flat_map(|i| (start..start + len).map(move |j| i * c + j)).collect();
        self.gather(Arc::new(idx), &[r, len])
    }

    /// Rows `start..start + len` of a matrix.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<DiffTensor<'g>> {
        let (r, c) = self.value().dims2()?;
        if start + len > r {
            return Err(Error::Shape(format!("row slice {start}..{} of height {r}", start + len)));
        }
        let idx = (start * c..(start + len) * c).collect();
        self.gather(Arc::new(idx), &[len, c])
    }

    /// Repeats a length-`d` vector as `n` rows of an `(n × d)` matrix.
    pub fn broadcast_rows(&self, n: usize) -> Result<DiffTensor<'g>> {
        let d = self.value().len();
        let idx = (0..n).flat_map(|_| 0..d).collect();
        self.gather(Arc::new(idx), &[n, d])
    }

    /// Repeats a length-`n` vector as `d` columns of an `(n × d)` matrix.
    pub fn broadcast_cols(&self, d: usize) -> Result<DiffTensor<'g>> {
        let n = self.value().len();
        let idx = (0..n).flat_map(|i| std::iter::repeat_n(i, d)).collect();
        self.gather(Arc::new(idx), &[n, d])
    }

    /// Matrix inverse with gradient `−A⁻ᵀ Ḡ A⁻ᵀ`.
    pub fn inverse(&self) -> Result<DiffTensor<'g>> {
        let a = self.value();
        let (r, c) = a.dims2()?;
        if r != c || a.shape().len() != 2 {
            return Err(Error::Shape(format!("inverse of non-square {:?}", a.shape())));
        }
        let inv = invert(a.data(), r)?;
        Ok(self.unary_value(Tensor::new(vec![r, r], inv)?, Op::Inverse(self.id)))
    }

    /// Straight-through argmax: forward is the row-wise one-hot of the
    /// maximum (ties to the lowest index); backward is the Jacobian of
    /// `softmax(logits / temperature)`.
    pub fn ste_argmax(&self, temperature: f64) -> Result<DiffTensor<'g>> {
        let a = self.value();
        let (r, c) = a.dims2()?;
        if !(temperature > 0.0) {
            return Err(Error::Domain(format!("STE temperature must be positive, got {temperature}")));
        }
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            out[i * c + argmax(&a.data()[i * c..(i + 1) * c])] = 1.0;
        }
        Ok(self.unary_value(Tensor::new(a.shape().to_vec(), out)?, Op::SteArgmax(self.id, temperature)))
    }
}

/// Index of the first maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}
