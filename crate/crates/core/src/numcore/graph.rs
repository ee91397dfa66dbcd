//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation eagerly: each call computes its value
//! immediately and appends a node that remembers its inputs. Nodes are only
//! ever appended, so the tape is topologically ordered by construction and
//! [`Graph::backward`] is a single reverse sweep.

use std::collections::BTreeMap;

use super::kernels::{self, LayerNormCache};
use super::params::{ParamId, ParamStore};
use super::{NumError, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var, usize),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        cache: LayerNormCache,
    },
    Conv1d {
        x: Var,
        kernels: Var,
        stride: usize,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Transpose(Var),
    Reshape(Var),
    GatherCols {
        x: Var,
        cols: Vec<usize>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Sum(Var),
    Mean(Var),
    AbsSum(Var),
    Mse(Var, Var),
    Bce {
        pred: Var,
        target: Tensor,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Floating-point operation tally for matrix products, keyed by scope label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlopCounter {
    pub total: u64,
    pub by_scope: BTreeMap<&'static str, u64>,
}

impl FlopCounter {
    pub fn scope(&self, name: &str) -> u64 {
        self.by_scope.get(name).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    flops: FlopCounter,
    scope: Option<&'static str>,
}

/// Gradients of a scalar with respect to every node of a graph.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for every entry of `store`, in store order; unreachable or
    /// untrainable entries get zeros.
    pub fn for_params(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        for &(id, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                out[id.0].add_assign(g);
            }
        }
        out
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<(), NumError> {
    if a.shape() != b.shape() {
        return Err(NumError::Dimension(format!(
            "{what}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
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

    pub fn flops(&self) -> &FlopCounter {
        &self.flops
    }

    /// Sets the label that subsequent matmul FLOPs are attributed to.
    pub fn set_scope(&mut self, scope: Option<&'static str>) -> Option<&'static str> {
        std::mem::replace(&mut self.scope, scope)
    }

    /// Input that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf tied to a parameter id.
    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        self.push(value, Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        let (m, k) = self.value(a).dims2()?;
        let n = out.shape()[1];
        let f = 2 * (m * k * n) as u64;
        self.flops.total += f;
        if let Some(s) = self.scope {
            *self.flops.by_scope.entry(s).or_default() += f;
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// `x[m×n] + bias[n]` broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NumError> {
        let (_, n) = self.value(x).dims2()?;
        let b = self.value(bias);
        if b.len() != n {
            return Err(NumError::Dimension(format!(
                "bias of length {} for {} columns",
                b.len(),
                n
            )));
        }
        let mut out = self.value(x).clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += self.nodes[bias.0].value.data()[i % n];
        }
        let rg = self.needs(&[x, bias]);
        Ok(self.push(out, Op::AddRow(x, bias), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        let rg = self.needs(&[a]);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let rg = self.needs(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.needs(&[a]);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, NumError> {
        let out = kernels::softmax(self.value(a), axis)?;
        let rg = self.needs(&[a]);
        Ok(self.push(out, Op::Softmax(a, axis), rg))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, NumError> {
        let (out, cache) =
            kernels::layer_norm_cached(self.value(x), self.value(gain), self.value(bias))?;
        let rg = self.needs(&[x, gain, bias]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                cache,
            },
            rg,
        ))
    }

    pub fn conv1d(&mut self, x: Var, kernels: Var, stride: usize) -> Result<Var, NumError> {
        let out = kernels::conv1d(self.value(x), self.value(kernels), stride)?;
        let rg = self.needs(&[x, kernels]);
        Ok(self.push(out, Op::Conv1d { x, kernels, stride }, rg))
    }

    /// Column-wise max over the rows of a `P×K` matrix, producing `[K]`.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var, NumError> {
        let (out, argmax) = kernels::global_max_pool_argmax(self.value(x))?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::MaxPool { x, argmax }, rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, NumError> {
        let out = self.value(x).transpose()?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Transpose(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NumError> {
        let out = self.value(x).reshape(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Selects (and possibly reorders) columns of a matrix.
    pub fn gather_cols(&mut self, x: Var, cols: &[usize]) -> Result<Var, NumError> {
        let src = self.value(x);
        let (r, c) = src.dims2()?;
        if let Some(&bad) = cols.iter().find(|&&j| j >= c) {
            return Err(NumError::Dimension(format!("column {bad} out of {c}")));
        }
        let mut out = Vec::with_capacity(r * cols.len());
        for i in 0..r {
            let row = src.row(i);
            out.extend(cols.iter().map(|&j| row[j]));
        }
        let out = Tensor::new(&[r, cols.len()], out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(
            out,
            Op::GatherCols {
                x,
                cols: cols.to_vec(),
            },
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let rows = match parts.first() {
            Some(v) => self.value(*v).dims2()?.0,
            None => return Err(NumError::Dimension("concat of nothing".into())),
        };
        let mut widths = Vec::with_capacity(parts.len());
        for v in parts {
            let (r, c) = self.value(*v).dims2()?;
            if r != rows {
                return Err(NumError::Dimension("concat_cols row counts differ".into()));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for v in parts {
                out.extend_from_slice(self.value(*v).row(i));
            }
        }
        let out = Tensor::new(&[rows, total], out)?;
        let rg = self.needs(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks rows; 1-D inputs are treated as single rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let width = match parts.first() {
            Some(v) => *self.value(*v).shape().last().unwrap_or(&1),
            None => return Err(NumError::Dimension("concat of nothing".into())),
        };
        let mut out = Vec::new();
        for v in parts {
            let t = self.value(*v);
            if t.ndim() > 2 || *t.shape().last().unwrap_or(&1) != width {
                return Err(NumError::Dimension("concat_rows widths differ".into()));
            }
            out.extend_from_slice(t.data());
        }
        let rows = out.len() / width;
        let out = Tensor::new(&[rows, width], out)?;
        let rg = self.needs(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.needs(&[x]);
        self.push(out, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor::scalar(t.sum() / t.len().max(1) as f64);
        let rg = self.needs(&[x]);
        self.push(out, Op::Mean(x), rg)
    }

    /// L1 norm `Σ|x|`.
    pub fn abs_sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).data().iter().map(|v| v.abs()).sum());
        let rg = self.needs(&[x]);
        self.push(out, Op::AbsSum(x), rg)
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, NumError> {
        let v = kernels::mse_loss(self.value(pred), self.value(target))?;
        let rg = self.needs(&[pred, target]);
        Ok(self.push(Tensor::scalar(v), Op::Mse(pred, target), rg))
    }

    /// Mean binary cross-entropy between `pred` (probabilities) and a fixed target.
    pub fn bce(&mut self, pred: Var, target: Tensor) -> Result<Var, NumError> {
        same_shape(self.value(pred), &target, "bce")?;
        let p = self.value(pred);
        let v = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| kernels::bce_loss(p, t))
            .sum::<f64>()
            / p.len().max(1) as f64;
        let rg = self.needs(&[pred]);
        Ok(self.push(Tensor::scalar(v), Op::Bce { pred, target }, rg))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumError> {
        if self.value(loss).len() != 1 {
            return Err(NumError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((id, i)),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    self.accumulate(grads, *a, kernels::matmul_bt(g, val(*b)));
                }
                if self.nodes[b.0].requires_grad {
                    self.accumulate(grads, *b, kernels::matmul_at(val(*a), g));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddRow(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                let n = val(*bias).len();
                let mut gb = vec![0.0; n];
                for (i, v) in g.data().iter().enumerate() {
                    gb[i % n] += v;
                }
                let gb = Tensor::new(val(*bias).shape(), gb).expect("bias grad");
                self.accumulate(grads, *bias, gb);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let ga = g.zip_map(val(*b), |x, y| x * y).expect("mul grad");
                let gb = g.zip_map(val(*a), |x, y| x * y).expect("mul grad");
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.map(|v| v * c)),
            Op::Relu(a) => {
                let ga = g
                    .zip_map(val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 })
                    .expect("relu grad");
                self.accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let ga = g
                    .zip_map(&node.value, |gv, y| gv * y * (1.0 - y))
                    .expect("sigmoid grad");
                self.accumulate(grads, *a, ga);
            }
            Op::Softmax(a, axis) => {
                self.accumulate(grads, *a, kernels::softmax_backward(&node.value, g, *axis));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                cache,
            } => {
                let (dx, dg, db) = kernels::layer_norm_backward(cache, val(*gain), g);
                self.accumulate(grads, *x, dx);
                let dg = dg.reshape(val(*gain).shape()).expect("gain grad");
                let db = db.reshape(val(*bias).shape()).expect("bias grad");
                self.accumulate(grads, *gain, dg);
                self.accumulate(grads, *bias, db);
            }
            Op::Conv1d { x, kernels, stride } => {
                let (gx, gk) = kernels::conv1d_backward(val(*x), val(*kernels), *stride, g);
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *kernels, gk);
            }
            Op::MaxPool { x, argmax } => {
                let src = val(*x);
                let k = src.shape()[1];
                let mut gx = Tensor::zeros(src.shape());
                for (j, &r) in argmax.iter().enumerate() {
                    gx.data_mut()[r * k + j] += g.data()[j];
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Transpose(x) => {
                self.accumulate(grads, *x, g.transpose().expect("transpose grad"));
            }
            Op::Reshape(x) => {
                self.accumulate(grads, *x, g.reshape(val(*x).shape()).expect("reshape grad"));
            }
            Op::GatherCols { x, cols } => {
                let src = val(*x);
                let c = src.shape()[1];
                let mut gx = Tensor::zeros(src.shape());
                let w = cols.len();
                for (i, chunk) in g.data().chunks(w).enumerate() {
                    for (&j, &v) in cols.iter().zip(chunk) {
                        gx.data_mut()[i * c + j] += v;
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::ConcatCols(parts) => {
                let total = g.shape()[1];
                let rows = g.shape()[0];
                let mut offset = 0;
                for v in parts {
                    let c = val(*v).shape()[1];
                    let mut part = Vec::with_capacity(rows * c);
                    for i in 0..rows {
                        part.extend_from_slice(&g.data()[i * total + offset..i * total + offset + c]);
                    }
                    offset += c;
                    let part = Tensor::new(val(*v).shape(), part).expect("concat grad");
                    self.accumulate(grads, *v, part);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for v in parts {
                    let n = val(*v).len();
                    let part = Tensor::new(val(*v).shape(), g.data()[offset..offset + n].to_vec())
                        .expect("concat grad");
                    offset += n;
                    self.accumulate(grads, *v, part);
                }
            }
            Op::Sum(x) => {
                self.accumulate(grads, *x, Tensor::full(val(*x).shape(), g.item()));
            }
            Op::Mean(x) => {
                let n = val(*x).len().max(1) as f64;
                self.accumulate(grads, *x, Tensor::full(val(*x).shape(), g.item() / n));
            }
            Op::AbsSum(x) => {
                let s = g.item();
                self.accumulate(grads, *x, val(*x).map(|v| s * sign(v)));
            }
            Op::Mse(a, b) => {
                let n = val(*a).len().max(1) as f64;
                let s = 2.0 * g.item() / n;
                let diff = val(*a).zip_map(val(*b), |x, y| s * (x - y)).expect("mse grad");
                self.accumulate(grads, *b, diff.map(|v| -v));
                self.accumulate(grads, *a, diff);
            }
            Op::Bce { pred, target } => {
                let p = val(*pred);
                let s = g.item() / p.len().max(1) as f64;
                let gp = p
                    .zip_map(target, |p, t| s * kernels::bce_grad(p, t))
                    .expect("bce grad");
                self.accumulate(grads, *pred, gp);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unrelated_parameter_gets_zero_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(3.0));
        let u = store.add("u", Tensor::scalar(2.0));
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let sq = g.mul(b.var(w), b.var(w)).unwrap();
        let loss = g.scale(sq, 0.5);
        let grads = g.backward(loss).unwrap().for_params(&store);
        assert_eq!(grads[w.0].item(), 3.0);
        assert_eq!(grads[u.0].item(), 0.0);
    }

    #[test]
    fn non_scalar_loss_is_a_contract_error() {
        let mut g = Graph::new();
        let x = g.param(ParamId(0), Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x), Err(NumError::Contract(_))));
    }

    #[test]
    fn max_pool_gradient_is_one_hot() {
        let mut g = Graph::new();
        let x = g.param(
            ParamId(0),
            Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 2.0]]).unwrap(),
        );
        let p = g.global_max_pool(x).unwrap();
        let s = g.sum(p);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn matmul_flops_are_scoped() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[3, 4]));
        let b = g.constant(Tensor::zeros(&[4, 5]));
        g.set_scope(Some("attn"));
        g.matmul(a, b).unwrap();
        g.set_scope(None);
        g.matmul(a, b).unwrap();
        assert_eq!(g.flops().scope("attn"), 120);
        assert_eq!(g.flops().total, 240);
    }
}
