//! Reverse-mode differentiation over tensor-valued nodes.
//!
//! Every op appends one node holding its output, so node indices are already
//! a topological order and `backward` is a single reverse sweep.

use std::borrow::Cow;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    Conv1d { x: Var, w: Var, b: Var },
    Dense { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Dropout { x: Var, mask: Vec<f64> },
    MeanTime(Var),
    Row { x: Var, t: usize },
    Slice { x: Var, start: usize },
    Concat(Vec<Var>),
    Sum(Var),
    SquaredError { pred: Var, target: f64 },
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

/// Gradients of a scalar with respect to every node that needs one.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(usize, Var)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient per parameter id in `0..n_params`. Parameters that were not
    /// used, or that the loss does not depend on, get zeros of `shapes[id]`.
    pub fn params(&self, shapes: &[&[usize]]) -> Vec<Tensor> {
        let mut out: Vec<Option<Tensor>> = vec![None; shapes.len()];
        for &(id, var) in &self.params {
            if let Some(g) = &self.grads[var.0] {
                match &mut out[id] {
                    Some(acc) => acc.data_mut().iter_mut().zip(g).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(Tensor::new(shapes[id].to_vec(), g.clone()).expect("gradient shape")),
                }
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(id, g)| {
                g.unwrap_or_else(|| {
                    log::warn!("parameter {id} is disconnected from the loss; its gradient is zero");
                    Tensor::zeros(shapes[id])
                })
            })
            .collect()
    }
}

fn shape_err(op: &str, detail: String) -> Error {
    Error::Shape(format!("{op}: {detail}"))
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value: Cow::Owned(value), op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A constant; no gradient flows into it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value: Cow::Owned(value), op: Op::Input, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf holding a borrowed parameter tensor.
    pub fn param(&mut self, id: usize, value: &'p Tensor) -> Var {
        self.nodes.push(Node { value: Cow::Borrowed(value), op: Op::Param(id), requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf owning its value.
    pub fn leaf(&mut self, id: usize, value: Tensor) -> Var {
        self.nodes.push(Node { value: Cow::Owned(value), op: Op::Param(id), requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Stride-1 convolution with zero "same" padding.
    /// `x: [L, C_in]`, `w: [width, C_in, F]`, `b: [F]` give `[L, F]`, with
    /// `out[t, f] = b[f] + sum_{i,c} x[t + i - width/2, c] * w[i, c, f]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (l, c_in) = self.value(x).dims2().ok_or_else(|| shape_err("conv1d", "input must be [L, C]".into()))?;
        let (width, wc, f) =
            self.value(w).dims3().ok_or_else(|| shape_err("conv1d", "kernels must be [w, C, F]".into()))?;
        if wc != c_in || self.value(b).shape() != [f] {
            return Err(shape_err(
                "conv1d",
                format!(
                    "input {:?}, kernels {:?}, bias {:?}",
                    self.value(x).shape(),
                    self.value(w).shape(),
                    self.value(b).shape()
                ),
            ));
        }
        let (xs, ws, bs) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let offset = width / 2;
        let mut out = Vec::with_capacity(l * f);
        for _ in 0..l {
            out.extend_from_slice(bs);
        }
        for t in 0..l {
            let row = &mut out[t * f..(t + 1) * f];
            for i in 0..width {
                let Some(src) = (t + i).checked_sub(offset).filter(|&s| s < l) else { continue };
                for c in 0..c_in {
                    let xv = xs[src * c_in + c];
                    if xv == 0.0 {
                        continue;
                    }
                    let k = &ws[(i * c_in + c) * f..(i * c_in + c + 1) * f];
                    row.iter_mut().zip(k).for_each(|(o, kv)| *o += xv * kv);
                }
            }
        }
        let value = Tensor::new(vec![l, f], out)?;
        Ok(self.push(value, Op::Conv1d { x, w, b }, &[x, w, b]))
    }

    /// Affine map `x W + b` with `x: [n]`, `W: [n, m]`, `b: [m]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let n = self.value(x).len();
        let (wn, m) = self.value(w).dims2().ok_or_else(|| shape_err("dense", "weights must be [n, m]".into()))?;
        if self.value(x).rank() != 1 || wn != n || b.is_some_and(|b| self.value(b).shape() != [m]) {
            return Err(shape_err(
                "dense",
                format!("input {:?}, weights {:?}", self.value(x).shape(), self.value(w).shape()),
            ));
        }
        let mut out = match b {
            Some(b) => self.value(b).data().to_vec(),
            None => vec![0.0; m],
        };
        let (xs, ws) = (self.value(x).data(), self.value(w).data());
        for (i, &xv) in xs.iter().enumerate() {
            out.iter_mut().zip(&ws[i * m..(i + 1) * m]).for_each(|(o, wv)| *o += xv * wv);
        }
        let inputs: Vec<Var> = std::iter::once(x).chain(Some(w)).chain(b).collect();
        Ok(self.push(Tensor::vector(out), Op::Dense { x, w, b }, &inputs))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, [Var; 2])> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(name, format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        Ok((Tensor::new(va.shape().to_vec(), data)?, [a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, inputs) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b), &inputs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, inputs) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b), &inputs))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(x);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| f(a)).collect()).expect("same shape");
        self.push(value, op, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |a| a.max(0.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), |a| 1.0 / (1.0 + (-a).exp()))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    /// Inverted dropout: each element is zeroed with probability `rate` and
    /// survivors are scaled by `1 / (1 - rate)`. Rate 0 returns `x` itself.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> =
            (0..self.value(x).len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
        let v = self.value(x);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().zip(&mask).map(|(a, m)| a * m).collect())?;
        Ok(self.push(value, Op::Dropout { x, mask }, &[x]))
    }

    /// Mean over the first axis of `[L, F]`, giving `[F]`.
    pub fn mean_time(&mut self, x: Var) -> Result<Var> {
        let (l, f) = self.value(x).dims2().ok_or_else(|| shape_err("mean_time", "input must be [L, F]".into()))?;
        let mut out = vec![0.0; f];
        for row in self.value(x).data().chunks(f) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|o| *o /= l as f64);
        Ok(self.push(Tensor::vector(out), Op::MeanTime(x), &[x]))
    }

    /// Row `t` of `[L, C]`, giving `[C]`.
    pub fn row(&mut self, x: Var, t: usize) -> Result<Var> {
        let (l, c) = self.value(x).dims2().ok_or_else(|| shape_err("row", "input must be [L, C]".into()))?;
        if t >= l {
            return Err(shape_err("row", format!("index {t} out of {l}")));
        }
        let value = Tensor::vector(self.value(x).data()[t * c..(t + 1) * c].to_vec());
        Ok(self.push(value, Op::Row { x, t }, &[x]))
    }

    /// Elements `start..start + len` of a vector.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(x);
        if v.rank() != 1 || len == 0 || start + len > v.len() {
            return Err(shape_err("slice", format!("{start}..{} of {:?}", start + len, v.shape())));
        }
        let value = Tensor::vector(v.data()[start..start + len].to_vec());
        Ok(self.push(value, Op::Slice { x, start }, &[x]))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() || parts.iter().any(|&p| self.value(p).rank() != 1) {
            return Err(shape_err("concat", "expects one or more vectors".into()));
        }
        let data: Vec<f64> = parts.iter().flat_map(|&p| self.value(p).data().iter().copied()).collect();
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), parts))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// `(pred - target)^2` for a one-element `pred`.
    pub fn squared_error(&mut self, pred: Var, target: f64) -> Result<Var> {
        let p =
            self.value(pred).item().ok_or_else(|| shape_err("squared_error", "prediction must be scalar".into()))?;
        Ok(self.push(Tensor::scalar((p - target).powi(2)), Op::SquaredError { pred, target }, &[pred]))
    }

    /// Gradients of the scalar `loss` with respect to every node it depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).item().is_none() {
            return Err(shape_err("backward", format!("loss must be scalar, got {:?}", self.value(loss).shape())));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let params = self.nodes[..n]
            .iter()
            .enumerate()
            .filter_map(|(i, node)| match node.op {
                Op::Param(id) => Some((id, Var(i))),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if self.nodes[v.0].requires_grad {
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
                f(slot);
            }
        };
        match op {
            Op::Input | Op::Param(_) => {}
            Op::Conv1d { x, w, b } => {
                let (l, c_in) = self.value(*x).dims2().unwrap();
                let (width, _, f) = self.value(*w).dims3().unwrap();
                let offset = width / 2;
                let (xs, ws) = (self.value(*x).data(), self.value(*w).data());
                acc(*b, &mut |gb| {
                    for row in g.chunks(f) {
                        gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                });
                acc(*w, &mut |gw| {
                    for t in 0..l {
                        let gr = &g[t * f..(t + 1) * f];
                        for i in 0..width {
                            let Some(src) = (t + i).checked_sub(offset).filter(|&s| s < l) else { continue };
                            for c in 0..c_in {
                                let xv = xs[src * c_in + c];
                                let k = &mut gw[(i * c_in + c) * f..(i * c_in + c + 1) * f];
                                k.iter_mut().zip(gr).for_each(|(a, gv)| *a += xv * gv);
                            }
                        }
                    }
                });
                acc(*x, &mut |gx| {
                    for t in 0..l {
                        let gr = &g[t * f..(t + 1) * f];
                        for i in 0..width {
                            let Some(src) = (t + i).checked_sub(offset).filter(|&s| s < l) else { continue };
                            for c in 0..c_in {
                                let k = &ws[(i * c_in + c) * f..(i * c_in + c + 1) * f];
                                gx[src * c_in + c] += k.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                });
            }
            Op::Dense { x, w, b } => {
                let m = g.len();
                let (xs, ws) = (self.value(*x).data(), self.value(*w).data());
                if let Some(b) = b {
                    acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(a, v)| *a += v));
                }
                acc(*w, &mut |gw| {
                    for (i, &xv) in xs.iter().enumerate() {
                        gw[i * m..(i + 1) * m].iter_mut().zip(g).for_each(|(a, v)| *a += xv * v);
                    }
                });
                acc(*x, &mut |gx| {
                    for (i, a) in gx.iter_mut().enumerate() {
                        *a += ws[i * m..(i + 1) * m].iter().zip(g).map(|(wv, v)| wv * v).sum::<f64>();
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(s, v)| *s += v));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(s, v)| *s += v));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |ga| ga.iter_mut().zip(g).zip(vb).for_each(|((s, v), y)| *s += v * y));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).zip(va).for_each(|((s, v), y)| *s += v * y));
            }
            Op::Relu(x) => {
                let xs = self.value(*x).data();
                acc(*x, &mut |gx| {
                    gx.iter_mut().zip(g).zip(xs).for_each(|((s, v), xv)| {
                        if *xv > 0.0 {
                            *s += v
                        }
                    })
                });
            }
            Op::Sigmoid(x) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).zip(out.data()).for_each(|((s, v), y)| *s += v * y * (1.0 - y)));
            }
            Op::Tanh(x) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).zip(out.data()).for_each(|((s, v), y)| *s += v * (1.0 - y * y)));
            }
            Op::Dropout { x, mask } => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).zip(mask).for_each(|((s, v), m)| *s += v * m));
            }
            Op::MeanTime(x) => {
                let (l, f) = self.value(*x).dims2().unwrap();
                acc(*x, &mut |gx| {
                    for row in gx.chunks_mut(f) {
                        row.iter_mut().zip(g).for_each(|(s, v)| *s += v / l as f64);
                    }
                });
            }
            Op::Row { x, t } => {
                let c = g.len();
                acc(*x, &mut |gx| gx[t * c..(t + 1) * c].iter_mut().zip(g).for_each(|(s, v)| *s += v));
            }
            Op::Slice { x, start } => {
                acc(*x, &mut |gx| gx[*start..*start + g.len()].iter_mut().zip(g).for_each(|(s, v)| *s += v));
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    acc(*p, &mut |gp| gp.iter_mut().zip(&g[offset..offset + len]).for_each(|(s, v)| *s += v));
                    offset += len;
                }
            }
            Op::Sum(x) => {
                acc(*x, &mut |gx| gx.iter_mut().for_each(|s| *s += g[0]));
            }
            Op::SquaredError { pred, target } => {
                let p = self.value(*pred).data()[0];
                acc(*pred, &mut |gp| gp[0] += 2.0 * (p - target) * g[0]);
            }
        }
    }
}
