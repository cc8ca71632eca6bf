//! Reverse-mode differentiation over a small, fixed operation set.
//!
//! A [`Tape`] is rebuilt for every loss evaluation. Leaves are either
//! constants or trainable inputs; only nodes reachable from a trainable leaf
//! receive gradients.

use super::matrix::{softmax_in_place, DenseMatrix};
use super::optim::Parameter;
use crate::error::{FggcdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Maximum(Var, Var),
    Exp(Var),
    Log(Var),
    L2NormalizeRows(Var, f64),
    SoftmaxRows(Var, f64),
    LogSoftmaxRows(Var),
    Gather(Var, Vec<usize>),
    RowSum(Var),
    Sum(Var),
    WeightedSum(Var, DenseMatrix),
}

#[derive(Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, value: DenseMatrix, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf initialised from the parameter's current value.
    pub fn param(&mut self, p: &Parameter) -> Var {
        self.push(p.value.clone(), Op::Leaf, true)
    }

    /// A trainable leaf from a raw matrix.
    pub fn input(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::MatMul(a, b), tracked))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_t(self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::MatMulT(a, b), tracked))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let tracked = self.tracked(a);
        self.push(value, Op::Transpose(a), tracked)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Add(a, b), tracked))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Sub(a, b), tracked))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Mul(a, b), tracked))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).scale(factor);
        let tracked = self.tracked(a);
        self.push(value, Op::Scale(a, factor), tracked)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|v| v + c);
        let tracked = self.tracked(a);
        self.push(value, Op::AddScalar(a), tracked)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        let tracked = self.tracked(a);
        self.push(value, Op::Relu(a), tracked)
    }

    /// Elementwise maximum; ties route the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "maximum", f64::max)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Maximum(a, b), tracked))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let tracked = self.tracked(a);
        self.push(value, Op::Exp(a), tracked)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).as_slice().iter().find(|v| !(**v > 0.0)) {
            return Err(FggcdError::InvalidArgument(format!(
                "log of non-positive value {bad}"
            )));
        }
        let value = self.value(a).map(f64::ln);
        let tracked = self.tracked(a);
        Ok(self.push(value, Op::Log(a), tracked))
    }

    pub fn l2_normalize_rows(&mut self, a: Var, eps: f64) -> Var {
        let value = self.value(a).l2_normalize_rows(eps);
        let tracked = self.tracked(a);
        self.push(value, Op::L2NormalizeRows(a, eps), tracked)
    }

    pub fn softmax_rows(&mut self, a: Var, temperature: f64) -> Result<Var> {
        let value = self.value(a).softmax_rows(temperature)?;
        let tracked = self.tracked(a);
        Ok(self.push(value, Op::SoftmaxRows(a, temperature), tracked))
    }

    /// Numerically stable row-wise log-softmax.
    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let tracked = self.tracked(a);
        self.push(value, Op::LogSoftmaxRows(a), tracked)
    }

    /// Builds a `rows x cols` matrix whose entries are `a`'s entries at the
    /// given flat (row-major) indices.
    pub fn gather(&mut self, a: Var, indices: Vec<usize>, rows: usize, cols: usize) -> Result<Var> {
        if indices.len() != rows * cols {
            return Err(FggcdError::InvalidArgument(format!(
                "gather into {rows}x{cols} needs {} indices, got {}",
                rows * cols,
                indices.len()
            )));
        }
        let src = self.value(a).as_slice();
        if let Some(&bad) = indices.iter().find(|&&i| i >= src.len()) {
            return Err(FggcdError::InvalidArgument(format!(
                "gather index {bad} out of range for {} entries",
                src.len()
            )));
        }
        let data = indices.iter().map(|&i| src[i]).collect();
        let value = DenseMatrix::from_vec(rows, cols, data)?;
        let tracked = self.tracked(a);
        Ok(self.push(value, Op::Gather(a, indices), tracked))
    }

    /// Sums each row into an `n x 1` column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = m.row_iter().map(|r| r.iter().sum()).collect();
        let value = DenseMatrix::from_vec(m.rows(), 1, data).expect("row count matches");
        let tracked = self.tracked(a);
        self.push(value, Op::RowSum(a), tracked)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = DenseMatrix::scalar(self.value(a).sum());
        let tracked = self.tracked(a);
        self.push(value, Op::Sum(a), tracked)
    }

    /// Scalar `Σ a ∘ weights` with constant weights (masked reductions, gathers
    /// of single entries, weighted means).
    pub fn weighted_sum(&mut self, a: Var, weights: DenseMatrix) -> Result<Var> {
        let s = self.value(a).hadamard(&weights)?.sum();
        let tracked = self.tracked(a);
        Ok(self.push(DenseMatrix::scalar(s), Op::WeightedSum(a, weights), tracked))
    }

    /// Propagates `d loss / d node` back to every tracked node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = self.value(loss).shape();
        if (rows, cols) != (1, 1) {
            return Err(FggcdError::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseMatrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) -> Result<()> {
        let mut send = |v: Var, contribution: DenseMatrix| -> Result<()> {
            if !self.nodes[v.0].tracked {
                return Ok(());
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contribution),
                slot @ None => {
                    *slot = Some(contribution);
                    Ok(())
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.tracked(*a) {
                    send(*a, g.matmul_t(self.value(*b))?)?;
                }
                if self.tracked(*b) {
                    send(*b, self.value(*a).t_matmul(g)?)?;
                }
            }
            Op::MatMulT(a, b) => {
                if self.tracked(*a) {
                    send(*a, g.matmul(self.value(*b))?)?;
                }
                if self.tracked(*b) {
                    send(*b, g.t_matmul(self.value(*a))?)?;
                }
            }
            Op::Transpose(a) => send(*a, g.transpose())?,
            Op::Add(a, b) => {
                send(*a, g.clone())?;
                send(*b, g.clone())?;
            }
            Op::Sub(a, b) => {
                send(*a, g.clone())?;
                send(*b, g.scale(-1.0))?;
            }
            Op::Mul(a, b) => {
                if self.tracked(*a) {
                    send(*a, g.hadamard(self.value(*b))?)?;
                }
                if self.tracked(*b) {
                    send(*b, g.hadamard(self.value(*a))?)?;
                }
            }
            Op::Scale(a, f) => send(*a, g.scale(*f))?,
            Op::AddScalar(a) => send(*a, g.clone())?,
            Op::Relu(a) => {
                let x = self.value(*a);
                send(*a, g.zip_map(x, "relu", |gv, xv| if xv > 0.0 { gv } else { 0.0 })?)?;
            }
            Op::Maximum(a, b) => {
                let (xa, xb) = (self.value(*a), self.value(*b));
                let mask_a = xa.zip_map(xb, "maximum", |p, q| if p >= q { 1.0 } else { 0.0 })?;
                send(*a, g.hadamard(&mask_a)?)?;
                send(*b, g.hadamard(&mask_a.map(|m| 1.0 - m))?)?;
            }
            Op::Exp(a) => send(*a, g.hadamard(&node.value)?)?,
            Op::Log(a) => send(*a, g.zip_map(self.value(*a), "log", |gv, xv| gv / xv)?)?,
            Op::L2NormalizeRows(a, eps) => {
                let x = self.value(*a);
                let y = &node.value;
                let mut dx = DenseMatrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let n = super::matrix::norm(x.row(r));
                    let (gr, yr) = (g.row(r), y.row(r));
                    let out = dx.row_mut(r);
                    if n > *eps {
                        let proj = super::matrix::dot(gr, yr);
                        for c in 0..out.len() {
                            out[c] = (gr[c] - yr[c] * proj) / n;
                        }
                    } else {
                        for c in 0..out.len() {
                            out[c] = gr[c] / eps;
                        }
                    }
                }
                send(*a, dx)?;
            }
            Op::SoftmaxRows(a, t) => {
                let y = &node.value;
                let mut dx = DenseMatrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (gr, yr) = (g.row(r), y.row(r));
                    let proj = super::matrix::dot(gr, yr);
                    let out = dx.row_mut(r);
                    for c in 0..out.len() {
                        out[c] = yr[c] * (gr[c] - proj) / t;
                    }
                }
                send(*a, dx)?;
            }
            Op::LogSoftmaxRows(a) => {
                let mut p = self.value(*a).clone();
                for r in 0..p.rows() {
                    softmax_in_place(p.row_mut(r), 1.0);
                }
                let mut dx = DenseMatrix::zeros(p.rows(), p.cols());
                for r in 0..p.rows() {
                    let gr = g.row(r);
                    let total: f64 = gr.iter().sum();
                    let pr = p.row(r);
                    let out = dx.row_mut(r);
                    for c in 0..out.len() {
                        out[c] = gr[c] - pr[c] * total;
                    }
                }
                send(*a, dx)?;
            }
            Op::Gather(a, indices) => {
                let (rows, cols) = self.value(*a).shape();
                let mut dx = DenseMatrix::zeros(rows, cols);
                let slots = dx.as_mut_slice();
                for (&i, gv) in indices.iter().zip(g.as_slice()) {
                    slots[i] += gv;
                }
                send(*a, dx)?;
            }
            Op::RowSum(a) => {
                let (rows, cols) = self.value(*a).shape();
                let mut dx = DenseMatrix::zeros(rows, cols);
                for r in 0..rows {
                    let gv = g.get(r, 0);
                    dx.row_mut(r).iter_mut().for_each(|v| *v = gv);
                }
                send(*a, dx)?;
            }
            Op::Sum(a) => {
                let (rows, cols) = self.value(*a).shape();
                send(*a, DenseMatrix::filled(rows, cols, g.get(0, 0)))?;
            }
            Op::WeightedSum(a, w) => send(*a, w.scale(g.get(0, 0)))?,
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds `d loss / d v` into `p.grad`. Untouched leaves contribute zero.
    pub fn accumulate_into(&self, v: Var, p: &mut Parameter) -> Result<()> {
        match self.get(v) {
            Some(g) => p.grad.add_assign(g),
            None => Ok(()),
        }
    }
}
