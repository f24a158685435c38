//! Recorded-tape reverse-mode differentiation.
//!
//! Every primitive appends a node holding its forward value and the ids of
//! its inputs. [`Tape::backward`] walks the nodes in reverse insertion order,
//! which is a valid reverse topological order because a node can only refer
//! to nodes recorded before it.

use crate::error::{mismatch, Result, TensorError};
use crate::ops::{self, Activation, Padding};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat(Vec<Var>),
    Select(Var, usize),
    Stack(Vec<Var>),
    Unary(Var, Activation),
    CausalConv {
        x: Var,
        g: Var,
        dilation: usize,
        pad: Padding,
    },
    NormalizeAdjacency(Var),
    RowNormalize(Var),
    Sum(Var),
    Mse(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` if `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).scale(k);
        self.push(v, Op::Scale(a, k))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let v = self.value(x).add_bias(self.value(bias))?;
        Ok(self.push(v, Op::AddBias(x, bias)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose()?;
        Ok(self.push(v, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, items: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor> = items.iter().map(|&v| self.value(v)).collect();
        let v = Tensor::concat_last(&refs)?;
        Ok(self.push(v, Op::Concat(items.to_vec())))
    }

    pub fn select(&mut self, a: Var, index: usize) -> Result<Var> {
        let v = self.value(a).select(index)?;
        Ok(self.push(v, Op::Select(a, index)))
    }

    pub fn stack(&mut self, items: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor> = items.iter().map(|&v| self.value(v)).collect();
        let v = Tensor::stack(&refs)?;
        Ok(self.push(v, Op::Stack(items.to_vec())))
    }

    pub fn activate(&mut self, a: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return a;
        }
        let v = self.value(a).map(|x| act.apply(x));
        self.push(v, Op::Unary(a, act))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activate(a, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activate(a, Activation::Sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activate(a, Activation::Relu)
    }

    /// See [`ops::causal_conv`].
    pub fn causal_conv(&mut self, x: Var, g: Var, dilation: usize, pad: Padding) -> Result<Var> {
        let v = ops::causal_conv(self.value(x), self.value(g), dilation, pad)?;
        Ok(self.push(v, Op::CausalConv { x, g, dilation, pad }))
    }

    /// See [`ops::normalize_adjacency`].
    pub fn normalize_adjacency(&mut self, a: Var) -> Result<Var> {
        let v = ops::normalize_adjacency(self.value(a))?;
        Ok(self.push(v, Op::NormalizeAdjacency(a)))
    }

    /// See [`ops::row_normalize`].
    pub fn row_normalize(&mut self, a: Var) -> Result<Var> {
        let v = ops::row_normalize(self.value(a))?;
        Ok(self.push(v, Op::RowNormalize(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Mean of squared differences, as a scalar.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(mismatch("mse", p.shape(), t.shape()));
        }
        let n = p.len() as f64;
        let s: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(pred, target)))
    }

    /// Back-propagates from `loss`, adding parameter gradients into `store`.
    ///
    /// Gradients accumulate across calls until [`ParamStore::zero_grad`].
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        for (node, g) in self.nodes.iter().zip(&grads.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                store.accumulate(*id, g);
            }
        }
        Ok(grads)
    }

    /// Back-propagates from `loss` without touching any parameter store.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let root = self.nodes.get(loss.0).ok_or(TensorError::UnknownNode(loss.0))?;
        if !root.value.is_scalar() {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(root.value.shape()));

        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &gy, &mut grads)?;
            grads[idx] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, gy: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, gy.clone());
                accumulate(grads, *b, gy.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, gy.clone());
                accumulate(grads, *b, gy.scale(-1.0));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, gy.mul(val(*b))?);
                accumulate(grads, *b, gy.mul(val(*a))?);
            }
            Op::Scale(a, k) => accumulate(grads, *a, gy.scale(*k)),
            Op::AddBias(x, b) => {
                let c = val(*b).len();
                let mut gb = vec![0.0; c];
                for row in gy.data().chunks(c) {
                    for (acc, g) in gb.iter_mut().zip(row) {
                        *acc += g;
                    }
                }
                accumulate(grads, *x, gy.clone());
                accumulate(grads, *b, Tensor::from_parts(vec![c], gb));
            }
            Op::MatMul(a, b) => {
                let ga = gy.matmul(&val(*b).transpose()?)?;
                let gb = val(*a).transpose()?.matmul(gy)?;
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Transpose(a) => accumulate(grads, *a, gy.transpose()?),
            Op::Reshape(a) => accumulate(grads, *a, gy.reshape(val(*a).shape())?),
            Op::Concat(items) => {
                let widths: Vec<usize> = items.iter().map(|v| *val(*v).shape().last().unwrap()).collect();
                let total: usize = widths.iter().sum();
                let rows = gy.len() / total;
                let mut parts: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(rows * w)).collect();
                for row in gy.data().chunks(total) {
                    let mut start = 0;
                    for (part, &w) in parts.iter_mut().zip(&widths) {
                        part.extend_from_slice(&row[start..start + w]);
                        start += w;
                    }
                }
                for (item, part) in items.iter().zip(parts) {
                    accumulate(grads, *item, Tensor::from_parts(val(*item).shape().to_vec(), part));
                }
            }
            Op::Select(a, index) => {
                let src = val(*a);
                let inner = gy.len();
                let mut g = vec![0.0; src.len()];
                g[index * inner..(index + 1) * inner].copy_from_slice(gy.data());
                accumulate(grads, *a, Tensor::from_parts(src.shape().to_vec(), g));
            }
            Op::Stack(items) => {
                for (i, item) in items.iter().enumerate() {
                    accumulate(grads, *item, gy.select(i)?);
                }
            }
            Op::Unary(a, act) => {
                let x = val(*a);
                let data = x
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .zip(gy.data())
                    .map(|((&xi, &yi), &g)| g * act.derivative(xi, yi))
                    .collect();
                accumulate(grads, *a, Tensor::from_parts(x.shape().to_vec(), data));
            }
            Op::CausalConv { x, g, dilation, pad } => {
                let (gx, gg) = ops::causal_conv_backward(val(*x), val(*g), *dilation, *pad, gy)?;
                accumulate(grads, *x, gx);
                accumulate(grads, *g, gg);
            }
            Op::NormalizeAdjacency(a) => {
                accumulate(grads, *a, ops::normalize_adjacency_backward(val(*a), gy)?);
            }
            Op::RowNormalize(a) => {
                accumulate(grads, *a, ops::row_normalize_backward(val(*a), gy)?);
            }
            Op::Sum(a) => {
                let g = gy.data()[0];
                accumulate(grads, *a, Tensor::full(val(*a).shape(), g));
            }
            Op::Mse(p, t) => {
                let (pv, tv) = (val(*p), val(*t));
                let k = 2.0 * gy.data()[0] / pv.len() as f64;
                let gp = pv.zip_map(tv, "mse", |a, b| k * (a - b))?;
                accumulate(grads, *t, gp.scale(-1.0));
                accumulate(grads, *p, gp);
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
