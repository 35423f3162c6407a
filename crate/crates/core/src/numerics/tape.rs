use std::cell::{Cell, RefCell};

use rand::Rng;

use super::tensor::{gemm_nn, gemm_nt, gemm_tn};
use super::{NumericsError, Tensor};

/// Epsilon added to the variance inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    MulConst(usize, Vec<f64>),
    Scale(usize, f64),
    ScaleBy(usize, usize),
    MeanOf(Vec<usize>),
    Gelu(usize),
    Sigmoid(usize),
    SoftmaxRows(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        normed: Vec<f64>,
        inv_std: Vec<f64>,
    },
    MeanRows(usize),
    SumAll(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    StraightThrough {
        logits: usize,
        soft: Vec<f64>,
        tau: f64,
    },
    SmoothedCe {
        logits: usize,
        probs: Vec<f64>,
        target: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run record of differentiable operations.
///
/// A tape lives for exactly one forward pass. [`GradTape::backward`] may be
/// called once; afterwards the tape is stale and a new forward pass (on a new
/// tape) is required.
pub struct GradTape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`GradTape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t GradTape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("value", &self.value())
            .finish()
    }
}

/// Gradients produced by [`GradTape::backward`], indexed by the variable they belong to.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; zeros if `var` did not
    /// influence the loss.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        let shape = self.shapes[var.id].clone();
        match &self.grads[var.id] {
            Some(g) => Tensor::from_parts(shape, g.clone()),
            None => Tensor::zeros(&shape),
        }
    }
}

impl Default for GradTape {
    fn default() -> Self {
        Self::new()
    }
}

impl GradTape {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn any_grad(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Records a leaf; gradients are tracked if `tensor.requires_grad()`.
    pub fn leaf(&self, tensor: Tensor) -> Var<'_> {
        let rg = tensor.requires_grad();
        self.push(tensor, Op::Leaf, rg)
    }

    /// Records a trainable leaf.
    pub fn param(&self, tensor: &Tensor) -> Var<'_> {
        self.leaf(tensor.clone().with_requires_grad(true))
    }

    /// Records a leaf that never receives gradients.
    pub fn constant(&self, tensor: Tensor) -> Var<'_> {
        self.leaf(tensor.with_requires_grad(false))
    }

    /// Computes gradients of the scalar `loss` with respect to every recorded
    /// value that requires them.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, NumericsError> {
        if self.consumed.get() {
            return Err(NumericsError::StaleTape);
        }
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.id];
        if loss_node.value.len() != 1 {
            return Err(NumericsError::NotScalar {
                shape: loss_node.value.shape().to_vec(),
            });
        }
        self.consumed.set(true);

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                propagate(&nodes, id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    // ---- operations -------------------------------------------------------

    pub fn matmul<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>, NumericsError> {
        let (av, bv) = (a.value(), b.value());
        let (m, k) = dims2(&av);
        let (k2, n) = dims2(&bv);
        if k != k2 || av.shape().len() != 2 || bv.shape().len() != 2 {
            return Err(mismatch("matmul", &av, &bv));
        }
        let out = gemm_nn(av.data(), bv.data(), m, k, n);
        let rg = self.any_grad(&[a.id, b.id]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a.id, b.id), rg))
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>, NumericsError> {
        let (av, bv) = (a.value(), b.value());
        let (m, k) = dims2(&av);
        let (n, k2) = dims2(&bv);
        if k != k2 || av.shape().len() != 2 || bv.shape().len() != 2 {
            return Err(mismatch("matmul_nt", &av, &bv));
        }
        let out = gemm_nt(av.data(), bv.data(), m, k, n);
        let rg = self.any_grad(&[a.id, b.id]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMulNt(a.id, b.id), rg))
    }

    fn same_shape_binary<'t>(
        &'t self,
        name: &'static str,
        a: Var<'t>,
        b: Var<'t>,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>, NumericsError> {
        let (av, bv) = (a.value(), b.value());
        if av.shape() != bv.shape() {
            return Err(mismatch(name, &av, &bv));
        }
        let out = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let rg = self.any_grad(&[a.id, b.id]);
        Ok(self.push(Tensor::from_parts(av.shape().to_vec(), out), op, rg))
    }

    pub fn add<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.same_shape_binary("add", a, b, |x, y| x + y, Op::Add(a.id, b.id))
    }

    pub fn sub<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.same_shape_binary("sub", a, b, |x, y| x - y, Op::Sub(a.id, b.id))
    }

    pub fn mul<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.same_shape_binary("mul", a, b, |x, y| x * y, Op::Mul(a.id, b.id))
    }

    /// Adds a row vector (`1 × n` or `n`) to every row of `a`.
    pub fn add_row<'t>(&'t self, a: Var<'t>, row: Var<'t>) -> Result<Var<'t>, NumericsError> {
        let (av, rv) = (a.value(), row.value());
        let n = av.cols();
        if rv.len() != n {
            return Err(mismatch("add_row", &av, &rv));
        }
        let bias = rv.data();
        let out = av
            .data()
            .chunks(n)
            .flat_map(|r| r.iter().zip(bias).map(|(x, b)| x + b))
            .collect();
        let rg = self.any_grad(&[a.id, row.id]);
        Ok(self.push(Tensor::from_parts(av.shape().to_vec(), out), Op::AddRow(a.id, row.id), rg))
    }

    pub fn scale<'t>(&'t self, a: Var<'t>, factor: f64) -> Var<'t> {
        let av = a.value();
        let rg = self.any_grad(&[a.id]);
        self.push(av.map(|x| x * factor), Op::Scale(a.id, factor), rg)
    }

    /// Multiplies every element of `a` by the one-element variable `s`.
    pub fn scale_by<'t>(&'t self, a: Var<'t>, s: Var<'t>) -> Result<Var<'t>, NumericsError> {
        let sv = s.value();
        let factor = sv.item()?;
        let rg = self.any_grad(&[a.id, s.id]);
        Ok(self.push(a.value().map(|x| x * factor), Op::ScaleBy(a.id, s.id), rg))
    }

    /// Element-wise mean `(x₁ + … + xₙ) / n`, summed left to right.
    pub fn mean_of<'t>(&'t self, vars: &[Var<'t>]) -> Result<Var<'t>, NumericsError> {
        let first = vars.first().ok_or(NumericsError::EmptyInput { op: "mean_of" })?.value();
        let mut acc = first.to_vec();
        for v in &vars[1..] {
            let vv = v.value();
            if vv.shape() != first.shape() {
                return Err(mismatch("mean_of", &first, &vv));
            }
            for (a, b) in acc.iter_mut().zip(vv.data()) {
                *a += b;
            }
        }
        let n = vars.len() as f64;
        for a in &mut acc {
            *a /= n;
        }
        let ids: Vec<usize> = vars.iter().map(|v| v.id).collect();
        let rg = self.any_grad(&ids);
        Ok(self.push(Tensor::from_parts(first.shape().to_vec(), acc), Op::MeanOf(ids), rg))
    }

    pub fn gelu<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let rg = self.any_grad(&[a.id]);
        let out = a.value().map(|x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()));
        self.push(out, Op::Gelu(a.id), rg)
    }

    pub fn sigmoid<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let rg = self.any_grad(&[a.id]);
        let out = a.value().map(sigmoid);
        self.push(out, Op::Sigmoid(a.id), rg)
    }

    /// Row-wise softmax over the last axis, stabilized by subtracting the row maximum.
    pub fn softmax_rows<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let av = a.value();
        let n = av.cols();
        let mut out = Vec::with_capacity(av.len());
        for row in av.data().chunks(n) {
            out.extend(softmax(row));
        }
        let rg = self.any_grad(&[a.id]);
        self.push(Tensor::from_parts(av.shape().to_vec(), out), Op::SoftmaxRows(a.id), rg)
    }

    /// Normalizes each row over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm<'t>(
        &'t self,
        x: Var<'t>,
        gain: Var<'t>,
        bias: Var<'t>,
    ) -> Result<Var<'t>, NumericsError> {
        let (xv, gv, bv) = (x.value(), gain.value(), bias.value());
        let d = xv.cols();
        if gv.len() != d || bv.len() != d {
            return Err(mismatch("layer_norm", &xv, &gv));
        }
        let rows = xv.rows();
        let mut normed = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                normed.push(h);
                out.push(h * gv.data()[j] + bv.data()[j]);
            }
        }
        let rg = self.any_grad(&[x.id, gain.id, bias.id]);
        Ok(self.push(
            Tensor::from_parts(xv.shape().to_vec(), out),
            Op::LayerNorm {
                x: x.id,
                gain: gain.id,
                bias: bias.id,
                normed,
                inv_std,
            },
            rg,
        ))
    }

    /// Mean over rows: `m × n → 1 × n`.
    pub fn mean_rows<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let av = a.value();
        let (m, n) = (av.rows(), av.cols());
        let mut out = vec![0.0; n];
        for row in av.data().chunks(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= m as f64;
        }
        let rg = self.any_grad(&[a.id]);
        self.push(Tensor::from_parts(vec![1, n], out), Op::MeanRows(a.id), rg)
    }

    pub fn sum_all<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let total = a.value().data().iter().sum();
        let rg = self.any_grad(&[a.id]);
        self.push(Tensor::scalar(total), Op::SumAll(a.id), rg)
    }

    /// Concatenates along the last axis; all inputs must have the same row count.
    pub fn concat_cols<'t>(&'t self, vars: &[Var<'t>]) -> Result<Var<'t>, NumericsError> {
        let values: Vec<Tensor> = vars.iter().map(|v| v.value()).collect();
        let first = values.first().ok_or(NumericsError::EmptyInput { op: "concat_cols" })?;
        let rows = first.rows();
        for v in &values {
            if v.rows() != rows || v.shape().len() != 2 {
                return Err(mismatch("concat_cols", first, v));
            }
        }
        let total: usize = values.iter().map(Tensor::cols).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &values {
                out.extend_from_slice(v.row_slice(r));
            }
        }
        let ids: Vec<usize> = vars.iter().map(|v| v.id).collect();
        let rg = self.any_grad(&ids);
        Ok(self.push(Tensor::from_parts(vec![rows, total], out), Op::ConcatCols(ids), rg))
    }

    /// Stacks inputs along the first axis; all inputs must have the same column count.
    pub fn concat_rows<'t>(&'t self, vars: &[Var<'t>]) -> Result<Var<'t>, NumericsError> {
        let values: Vec<Tensor> = vars.iter().map(|v| v.value()).collect();
        let first = values.first().ok_or(NumericsError::EmptyInput { op: "concat_rows" })?;
        let cols = first.cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for v in &values {
            if v.cols() != cols {
                return Err(mismatch("concat_rows", first, v));
            }
            rows += v.rows();
            out.extend_from_slice(v.data());
        }
        let ids: Vec<usize> = vars.iter().map(|v| v.id).collect();
        let rg = self.any_grad(&ids);
        Ok(self.push(Tensor::from_parts(vec![rows, cols], out), Op::ConcatRows(ids), rg))
    }

    /// Inverted dropout. Identity when `training` is false or `rate` is zero.
    pub fn dropout<'t, R: Rng + ?Sized>(
        &'t self,
        a: Var<'t>,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var<'t>, NumericsError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NumericsError::InvalidRate(rate));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let av = a.value();
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..av.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = av.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let rg = self.any_grad(&[a.id]);
        Ok(self.push(Tensor::from_parts(av.shape().to_vec(), out), Op::MulConst(a.id, mask), rg))
    }

    /// Hard one-hot selection with a straight-through gradient.
    ///
    /// The forward value is the one-hot vector at `index`; the backward pass
    /// differentiates `softmax((logits + noise) / tau)` instead.
    pub fn straight_through_one_hot<'t>(
        &'t self,
        logits: Var<'t>,
        noise: &[f64],
        tau: f64,
        index: usize,
    ) -> Result<Var<'t>, NumericsError> {
        let lv = logits.value();
        if noise.len() != lv.len() || index >= lv.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "straight_through_one_hot",
                left: lv.shape().to_vec(),
                right: vec![noise.len()],
            });
        }
        let perturbed: Vec<f64> = lv.data().iter().zip(noise).map(|(g, e)| (g + e) / tau).collect();
        let soft = softmax(&perturbed);
        let mut hard = vec![0.0; lv.len()];
        hard[index] = 1.0;
        let rg = self.any_grad(&[logits.id]);
        Ok(self.push(
            Tensor::from_parts(lv.shape().to_vec(), hard),
            Op::StraightThrough {
                logits: logits.id,
                soft,
                tau,
            },
            rg,
        ))
    }

    /// Cross-entropy of a `1 × C` logit row against
    /// `(1 − smoothing)·onehot(target) + smoothing / C`.
    pub fn smoothed_cross_entropy<'t>(
        &'t self,
        logits: Var<'t>,
        target: usize,
        smoothing: f64,
    ) -> Result<Var<'t>, NumericsError> {
        let lv = logits.value();
        let c = lv.len();
        if target >= c {
            return Err(NumericsError::InvalidClass { target, classes: c });
        }
        if !(0.0..1.0).contains(&smoothing) {
            return Err(NumericsError::InvalidRate(smoothing));
        }
        let target_dist = smoothed_targets(c, target, smoothing);
        let log_probs = log_softmax(lv.data());
        let loss = -target_dist.iter().zip(&log_probs).map(|(q, lp)| q * lp).sum::<f64>();
        let probs = log_probs.iter().map(|lp| lp.exp()).collect();
        let rg = self.any_grad(&[logits.id]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SmoothedCe {
                logits: logits.id,
                probs,
                target: target_dist,
            },
            rg,
        ))
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn tape(&self) -> &'t GradTape {
        self.tape
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.tape.matmul(self, other)
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.tape.add(self, other)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

pub(crate) fn smoothed_targets(classes: usize, target: usize, smoothing: f64) -> Vec<f64> {
    let uniform = smoothing / classes as f64;
    (0..classes)
        .map(|i| if i == target { 1.0 - smoothing + uniform } else { uniform })
        .collect()
}

fn dims2(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: usize, delta: Vec<f64>) {
    match &mut grads[id] {
        Some(g) => {
            for (a, d) in g.iter_mut().zip(delta) {
                *a += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn propagate(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let value = |i: usize| &nodes[i].value;
    let wants = |i: usize| nodes[i].requires_grad;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = dims2(value(*a));
            let n = value(*b).cols();
            if wants(*a) {
                accumulate(grads, *a, gemm_nt(g, value(*b).data(), m, n, k));
            }
            if wants(*b) {
                accumulate(grads, *b, gemm_tn(value(*a).data(), g, m, k, n));
            }
        }
        Op::MatMulNt(a, b) => {
            let (m, k) = dims2(value(*a));
            let n = value(*b).rows();
            if wants(*a) {
                accumulate(grads, *a, gemm_nn(g, value(*b).data(), m, n, k));
            }
            if wants(*b) {
                accumulate(grads, *b, gemm_tn(g, value(*a).data(), m, n, k));
            }
        }
        Op::Add(a, b) => {
            if wants(*a) {
                accumulate(grads, *a, g.to_vec());
            }
            if wants(*b) {
                accumulate(grads, *b, g.to_vec());
            }
        }
        Op::Sub(a, b) => {
            if wants(*a) {
                accumulate(grads, *a, g.to_vec());
            }
            if wants(*b) {
                accumulate(grads, *b, g.iter().map(|v| -v).collect());
            }
        }
        Op::AddRow(a, row) => {
            if wants(*a) {
                accumulate(grads, *a, g.to_vec());
            }
            if wants(*row) {
                let n = value(*row).len();
                let mut acc = vec![0.0; n];
                for chunk in g.chunks(n) {
                    for (s, v) in acc.iter_mut().zip(chunk) {
                        *s += v;
                    }
                }
                accumulate(grads, *row, acc);
            }
        }
        Op::Mul(a, b) => {
            if wants(*a) {
                let d = g.iter().zip(value(*b).data()).map(|(x, y)| x * y).collect();
                accumulate(grads, *a, d);
            }
            if wants(*b) {
                let d = g.iter().zip(value(*a).data()).map(|(x, y)| x * y).collect();
                accumulate(grads, *b, d);
            }
        }
        Op::MulConst(a, mask) => {
            if wants(*a) {
                accumulate(grads, *a, g.iter().zip(mask).map(|(x, m)| x * m).collect());
            }
        }
        Op::Scale(a, factor) => {
            if wants(*a) {
                accumulate(grads, *a, g.iter().map(|v| v * factor).collect());
            }
        }
        Op::ScaleBy(a, s) => {
            let factor = value(*s).data()[0];
            if wants(*a) {
                accumulate(grads, *a, g.iter().map(|v| v * factor).collect());
            }
            if wants(*s) {
                let d: f64 = g.iter().zip(value(*a).data()).map(|(x, y)| x * y).sum();
                accumulate(grads, *s, vec![d]);
            }
        }
        Op::MeanOf(ids) => {
            let n = ids.len() as f64;
            for &i in ids {
                if wants(i) {
                    accumulate(grads, i, g.iter().map(|v| v / n).collect());
                }
            }
        }
        Op::Gelu(a) => {
            if wants(*a) {
                let d = g
                    .iter()
                    .zip(value(*a).data())
                    .map(|(gv, &x)| {
                        let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                        gv * (0.5 * (1.0 + t) + 0.5 * x * dt)
                    })
                    .collect();
                accumulate(grads, *a, d);
            }
        }
        Op::Sigmoid(a) => {
            if wants(*a) {
                let y = nodes[id].value.data();
                let d = g.iter().zip(y).map(|(gv, s)| gv * s * (1.0 - s)).collect();
                accumulate(grads, *a, d);
            }
        }
        Op::SoftmaxRows(a) => {
            if wants(*a) {
                let y = &nodes[id].value;
                let n = y.cols();
                let mut d = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(n).zip(g.chunks(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    d.extend(yr.iter().zip(gr).map(|(yv, gv)| yv * (gv - dot)));
                }
                accumulate(grads, *a, d);
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            normed,
            inv_std,
        } => {
            let gv = value(*gain).data();
            let d = gv.len();
            if wants(*gain) {
                let mut dg = vec![0.0; d];
                for (gr, hr) in g.chunks(d).zip(normed.chunks(d)) {
                    for j in 0..d {
                        dg[j] += gr[j] * hr[j];
                    }
                }
                accumulate(grads, *gain, dg);
            }
            if wants(*bias) {
                let mut db = vec![0.0; d];
                for gr in g.chunks(d) {
                    for j in 0..d {
                        db[j] += gr[j];
                    }
                }
                accumulate(grads, *bias, db);
            }
            if wants(*x) {
                let mut dx = Vec::with_capacity(g.len());
                for ((gr, hr), is) in g.chunks(d).zip(normed.chunks(d)).zip(inv_std) {
                    let dh: Vec<f64> = gr.iter().zip(gv).map(|(a, b)| a * b).collect();
                    let sum_dh: f64 = dh.iter().sum();
                    let sum_dh_h: f64 = dh.iter().zip(hr).map(|(a, b)| a * b).sum();
                    let nd = d as f64;
                    dx.extend(
                        dh.iter()
                            .zip(hr)
                            .map(|(dhj, hj)| is / nd * (nd * dhj - sum_dh - hj * sum_dh_h)),
                    );
                }
                accumulate(grads, *x, dx);
            }
        }
        Op::MeanRows(a) => {
            if wants(*a) {
                let av = value(*a);
                let m = av.rows() as f64;
                let mut d = Vec::with_capacity(av.len());
                for _ in 0..av.rows() {
                    d.extend(g.iter().map(|v| v / m));
                }
                accumulate(grads, *a, d);
            }
        }
        Op::SumAll(a) => {
            if wants(*a) {
                accumulate(grads, *a, vec![g[0]; value(*a).len()]);
            }
        }
        Op::ConcatCols(ids) => {
            let out = &nodes[id].value;
            let total = out.cols();
            let mut offset = 0;
            for &i in ids {
                let c = value(i).cols();
                if wants(i) {
                    let mut d = Vec::with_capacity(value(i).len());
                    for r in 0..out.rows() {
                        d.extend_from_slice(&g[r * total + offset..r * total + offset + c]);
                    }
                    accumulate(grads, i, d);
                }
                offset += c;
            }
        }
        Op::ConcatRows(ids) => {
            let mut offset = 0;
            for &i in ids {
                let len = value(i).len();
                if wants(i) {
                    accumulate(grads, i, g[offset..offset + len].to_vec());
                }
                offset += len;
            }
        }
        Op::StraightThrough { logits, soft, tau } => {
            if wants(*logits) {
                let dot: f64 = soft.iter().zip(g).map(|(s, gv)| s * gv).sum();
                let d = soft.iter().zip(g).map(|(s, gv)| s * (gv - dot) / tau).collect();
                accumulate(grads, *logits, d);
            }
        }
        Op::SmoothedCe {
            logits,
            probs,
            target,
        } => {
            if wants(*logits) {
                let d = probs.iter().zip(target).map(|(p, q)| g[0] * (p - q)).collect();
                accumulate(grads, *logits, d);
            }
        }
    }
}
