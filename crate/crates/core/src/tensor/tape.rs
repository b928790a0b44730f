use std::collections::BTreeMap;

use super::{gemm, sigmoid, softplus, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of a user-defined operation.
///
/// Receives the input values, the recorded output and the gradient of the
/// loss with respect to that output; returns one gradient per input
/// (`None` where `needs[i]` is false or the input is not differentiable).
pub trait Backward {
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>>;
}

type DerivFn = Box<dyn Fn(f64) -> f64>;

enum Op {
    Leaf,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Sigmoid(usize),
    Softplus(usize),
    Square(usize),
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    AddRow(usize, usize),
    RepeatRows(usize),
    Sum(usize),
    Mean(usize),
    SliceCols(usize, usize),
    Map(usize, DerivFn),
    Custom(Vec<usize>, Box<dyn Backward>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of operations for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar loss with respect to the leaves of a tape.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: BTreeMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(&v.0)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.remove(&v.0)
    }
}

fn col_sums(g: &Tensor) -> Tensor {
    let (r, c) = g.dims2().expect("2-D gradient");
    let mut out = vec![0.0; c];
    for i in 0..r {
        for (o, x) in out.iter_mut().zip(&g.data()[i * c..(i + 1) * c]) {
            *o += x;
        }
    }
    Tensor::matrix(1, c, out).expect("consistent shape")
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

    /// Drop all recorded nodes so the tape can be reused.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.consumed = false;
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

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable input (a parameter).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), f)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale(a.0, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a.0))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a.0))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a.0))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a.0))
    }

    /// Elementwise `f` with derivative `df`, both supplied by the caller.
    pub fn map(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64 + 'static,
    ) -> Var {
        self.unary(a, f, Op::Map(a.0, Box::new(df)))
    }

    /// `a b` for `a: n x p`, `b: p x q`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a.0, b.0), rg))
    }

    /// `a b^T` for `a: n x p`, `b: q x p`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, p) = self.value(a).dims2()?;
        let (q, p2) = self.value(b).dims2()?;
        if p != p2 {
            return Err(Error::ShapeMismatch(format!("matmul_nt {n}x{p} by ({q}x{p2})^T")));
        }
        let mut out = vec![0.0; n * q];
        gemm(n, p, q, self.value(a).data(), p, 1, self.value(b).data(), 1, p, &mut out, false);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(n, q, out)?, Op::MatMulNt(a.0, b.0), rg))
    }

    /// Add the row vector `b: 1 x n` to every row of `x: m x n`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (m, n) = self.value(x).dims2()?;
        if self.value(b).shape() != [1, n] {
            return Err(Error::ShapeMismatch(format!(
                "row bias {:?} for {m}x{n}",
                self.value(b).shape()
            )));
        }
        let bias = self.value(b).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, c) in row.iter_mut().zip(bias) {
                *o += c;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::AddRow(x.0, b.0), rg))
    }

    /// Stack `m` copies of the row vector `a: 1 x n`.
    pub fn repeat_rows(&mut self, a: Var, m: usize) -> Result<Var> {
        let (r, n) = self.value(a).dims2()?;
        if r != 1 {
            return Err(Error::ShapeMismatch(format!("repeat_rows needs one row, got {r}")));
        }
        let row = self.value(a).data();
        let out: Vec<f64> = (0..m).flat_map(|_| row.iter().copied()).collect();
        let rg = self.rg(a);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::RepeatRows(a.0), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a.0), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a.0), rg)
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if start > end || end > n {
            return Err(Error::ShapeMismatch(format!("columns {start}..{end} of {m}x{n}")));
        }
        let src = self.value(a).data();
        let w = end - start;
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + end]);
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::matrix(m, w, out)?, Op::SliceCols(a.0, start), rg))
    }

    /// Record an operation whose forward value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, rule: Box<dyn Backward>) -> Var {
        let rg = inputs.iter().any(|v| self.rg(*v));
        let ids = inputs.iter().map(|v| v.0).collect();
        self.push(output, Op::Custom(ids, rule), rg)
    }

    /// Reverse sweep from the scalar `loss`; returns gradients of the leaves.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let val = |j: usize| &self.nodes[j].value;
            let needs = |j: usize| self.nodes[j].requires_grad;
            let mut contrib: Vec<(usize, Tensor)> = Vec::with_capacity(2);
            match &node.op {
                Op::Leaf => {
                    out.grads.insert(i, g);
                    continue;
                }
                Op::Constant => {}
                Op::Add(a, b) => {
                    contrib.push((*a, g.clone()));
                    contrib.push((*b, g));
                }
                Op::Sub(a, b) => {
                    contrib.push((*a, g.clone()));
                    contrib.push((*b, g.map(|x| -x)));
                }
                Op::Mul(a, b) => {
                    if needs(*a) {
                        contrib.push((*a, g.zip_map(val(*b), |x, y| x * y)?));
                    }
                    if needs(*b) {
                        contrib.push((*b, g.zip_map(val(*a), |x, y| x * y)?));
                    }
                }
                Op::Scale(a, c) => contrib.push((*a, g.map(|x| c * x))),
                Op::AddScalar(a) => contrib.push((*a, g)),
                Op::Exp(a) => contrib.push((*a, g.zip_map(&node.value, |x, e| x * e)?)),
                Op::Log(a) => contrib.push((*a, g.zip_map(val(*a), |x, v| x / v)?)),
                Op::Tanh(a) => contrib.push((*a, g.zip_map(&node.value, |x, t| x * (1.0 - t * t))?)),
                Op::Sigmoid(a) => contrib.push((*a, g.zip_map(&node.value, |x, s| x * s * (1.0 - s))?)),
                Op::Softplus(a) => contrib.push((*a, g.zip_map(val(*a), |x, v| x * sigmoid(v))?)),
                Op::Square(a) => contrib.push((*a, g.zip_map(val(*a), |x, v| 2.0 * x * v)?)),
                Op::Map(a, df) => contrib.push((*a, g.zip_map(val(*a), |x, v| x * df(v))?)),
                Op::MatMul(a, b) => {
                    let (n, p) = val(*a).dims2()?;
                    let (_, q) = val(*b).dims2()?;
                    if needs(*a) {
                        // g (n x q) . b^T
                        let mut ga = vec![0.0; n * p];
                        gemm(n, q, p, g.data(), q, 1, val(*b).data(), 1, q, &mut ga, false);
                        contrib.push((*a, Tensor::matrix(n, p, ga)?));
                    }
                    if needs(*b) {
                        // a^T . g
                        let mut gb = vec![0.0; p * q];
                        gemm(p, n, q, val(*a).data(), 1, p, g.data(), q, 1, &mut gb, false);
                        contrib.push((*b, Tensor::matrix(p, q, gb)?));
                    }
                }
                Op::MatMulNt(a, b) => {
                    let (n, p) = val(*a).dims2()?;
                    let (q, _) = val(*b).dims2()?;
                    if needs(*a) {
                        // g (n x q) . b (q x p)
                        let mut ga = vec![0.0; n * p];
                        gemm(n, q, p, g.data(), q, 1, val(*b).data(), p, 1, &mut ga, false);
                        contrib.push((*a, Tensor::matrix(n, p, ga)?));
                    }
                    if needs(*b) {
                        // g^T (q x n) . a (n x p)
                        let mut gb = vec![0.0; q * p];
                        gemm(q, n, p, g.data(), 1, q, val(*a).data(), p, 1, &mut gb, false);
                        contrib.push((*b, Tensor::matrix(q, p, gb)?));
                    }
                }
                Op::AddRow(x, b) => {
                    if needs(*b) {
                        contrib.push((*b, col_sums(&g)));
                    }
                    contrib.push((*x, g));
                }
                Op::RepeatRows(a) => contrib.push((*a, col_sums(&g))),
                Op::Sum(a) => {
                    let s = g.item()?;
                    contrib.push((*a, Tensor::full(val(*a).shape(), s)));
                }
                Op::Mean(a) => {
                    let s = g.item()? / val(*a).numel() as f64;
                    contrib.push((*a, Tensor::full(val(*a).shape(), s)));
                }
                Op::SliceCols(a, start) => {
                    let (m, n) = val(*a).dims2()?;
                    let (_, w) = g.dims2()?;
                    let mut ga = vec![0.0; m * n];
                    for r in 0..m {
                        ga[r * n + start..r * n + start + w].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                    }
                    contrib.push((*a, Tensor::matrix(m, n, ga)?));
                }
                Op::Custom(ids, rule) => {
                    let inputs: Vec<&Tensor> = ids.iter().map(|j| val(*j)).collect();
                    let flags: Vec<bool> = ids.iter().map(|j| needs(*j)).collect();
                    let gs = rule.backward(&inputs, &node.value, &g, &flags);
                    if gs.len() != ids.len() {
                        return Err(Error::ShapeMismatch(format!(
                            "custom backward returned {} gradients for {} inputs",
                            gs.len(),
                            ids.len()
                        )));
                    }
                    for (j, gj) in ids.iter().zip(gs) {
                        if let Some(gj) = gj {
                            contrib.push((*j, gj));
                        }
                    }
                }
            }
            for (j, gj) in contrib {
                if !self.nodes[j].requires_grad {
                    continue;
                }
                if gj.shape() != self.nodes[j].value.shape() {
                    return Err(Error::ShapeMismatch(format!(
                        "gradient {:?} for value {:?}",
                        gj.shape(),
                        self.nodes[j].value.shape()
                    )));
                }
                match &mut grads[j] {
                    Some(acc) => acc.add_assign(&gj),
                    slot @ None => *slot = Some(gj),
                }
            }
        }
        Ok(out)
    }
}
