//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass as a node holding
//! its value. Nodes are appended in evaluation order, so the tape is already a
//! topological order and [`Tape::backward`] is a single reverse sweep.

use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the input `x` and output `y`; kinks get 0 for relu.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Which terms make up the denominator of the cross-view NT-Xent loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NtXentVariant {
    /// Sum over `k != i` only; the positive pair is left out.
    #[default]
    ExcludePositive,
    /// Sum over every `k`, positive included.
    Standard,
}

impl std::str::FromStr for NtXentVariant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exclude_positive" => Ok(NtXentVariant::ExcludePositive),
            "standard" => Ok(NtXentVariant::Standard),
            _ => Err(format!("expected exclude_positive|standard, got `{s}`")),
        }
    }
}

impl fmt::Display for NtXentVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NtXentVariant::ExcludePositive => "exclude_positive",
            NtXentVariant::Standard => "standard",
        })
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    AddRowBias(Var, Var),
    Activation(Var, Activation),
    Clamp(Var, f64, f64),
    GatedProduct(Var, Var, Var),
    RowSoftmax(Var, f64),
    MaskedRowSoftmax(Var),
    OuterSum(Var, Var),
    ColSlice(Var, usize),
    RowL2Normalize(Var),
    SymNormalize(Var),
    Sum(Var),
    SquaredDistance(Var, Var),
    NtXent(Var, f64, NtXentVariant),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Operation recorder for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.adjoints.get(v.0).and_then(|a| a.as_ref())
    }

    /// Adjoint of `v`, materializing zeros when it has none.
    pub fn wrt(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.adjoints.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &'static str, value: Matrix, op: Op, inputs: &[Var]) -> Result<Var> {
        value.ensure_finite(name)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.record("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_nt(self.value(b))?;
        self.record("matmul_nt", value, Op::MatMulNt(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.record("transpose", value, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        self.record("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        self.record("sub", value, Op::Sub(a, b), &[a, b])
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        self.record("hadamard", value, Op::Hadamard(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).scale(s);
        self.record("scale", value, Op::Scale(a, s), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    /// Adds the `1×c` row `bias` to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(Error::shape("add_row_bias", x.shape(), b.shape()));
        }
        let mut value = x.clone();
        for r in 0..value.rows() {
            for (v, bb) in value.row_mut(r).iter_mut().zip(b.as_slice()) {
                *v += bb;
            }
        }
        self.record("add_row_bias", value, Op::AddRowBias(a, bias), &[a, bias])
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var> {
        let value = self.value(a).map(|x| kind.apply(x));
        self.record("activation", value, Op::Activation(a, kind), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Relu)
    }

    /// Entrywise clamp into `[lo, hi]`; the gradient is zero outside the
    /// open interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi {
            return Err(Error::InvalidArgument(format!("clamp bounds {lo} > {hi}")));
        }
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.record("clamp", value, Op::Clamp(a, lo, hi), &[a])
    }

    /// `a ⊙ clamp(s, 0, 1) ⊙ z` in one pass, without the two intermediate
    /// `N×N` products.
    pub fn gated_product(&mut self, a: Var, s: Var, z: Var) -> Result<Var> {
        let (av, sv, zv) = (self.value(a), self.value(s), self.value(z));
        av.ensure_same_shape(sv, "gated_product")?;
        av.ensure_same_shape(zv, "gated_product")?;
        let data = av
            .as_slice()
            .iter()
            .zip(sv.as_slice())
            .zip(zv.as_slice())
            .map(|((&x, &c), &m)| x * c.clamp(0.0, 1.0) * m)
            .collect();
        let value = Matrix::from_vec(av.rows(), av.cols(), data)?;
        self.record("gated_product", value, Op::GatedProduct(a, s, z), &[a, s, z])
    }

    /// Row-wise `softmax(scale · a)`, stabilized by subtracting each row max.
    pub fn row_softmax(&mut self, a: Var, scale: f64) -> Result<Var> {
        if !(scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "softmax scale must be positive, got {scale}"
            )));
        }
        let x = self.value(a);
        let mut value = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            softmax_into(x.row(r), scale, None, value.row_mut(r));
        }
        self.record("row_softmax", value, Op::RowSoftmax(a, scale), &[a])
    }

    /// Row-wise softmax restricted to entries where `mask` is set; every
    /// other entry is exactly zero. Each row needs at least one set entry.
    pub fn masked_row_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let x = self.value(a);
        if mask.len() != x.len() {
            return Err(Error::InvalidArgument(format!(
                "mask has {} entries for a {}x{} matrix",
                mask.len(),
                x.rows(),
                x.cols()
            )));
        }
        let cols = x.cols();
        let mut value = Matrix::zeros(x.rows(), cols);
        for r in 0..x.rows() {
            let m = &mask[r * cols..(r + 1) * cols];
            if !m.iter().any(|&b| b) {
                return Err(Error::InvalidArgument(format!(
                    "masked softmax row {r} has an empty support"
                )));
            }
            softmax_into(x.row(r), 1.0, Some(m), value.row_mut(r));
        }
        self.record(
            "masked_row_softmax",
            value,
            Op::MaskedRowSoftmax(a),
            &[a],
        )
    }

    /// `out[i][j] = a[i] + b[j]` for column vectors `a` (n×1) and `b` (m×1).
    pub fn outer_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != 1 || y.cols() != 1 {
            return Err(Error::shape("outer_sum", x.shape(), y.shape()));
        }
        let mut value = Matrix::zeros(x.rows(), y.rows());
        for i in 0..x.rows() {
            let xi = x[(i, 0)];
            for (o, yj) in value.row_mut(i).iter_mut().zip(y.as_slice()) {
                *o = xi + yj;
            }
        }
        self.record("outer_sum", value, Op::OuterSum(a, b), &[a, b])
    }

    /// Columns `start..end` of `a`.
    pub fn col_slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        if start > end || end > x.cols() {
            return Err(Error::InvalidArgument(format!(
                "column range {start}..{end} out of bounds for {} columns",
                x.cols()
            )));
        }
        let mut value = Matrix::zeros(x.rows(), end - start);
        for r in 0..x.rows() {
            value.row_mut(r).copy_from_slice(&x.row(r)[start..end]);
        }
        self.record("col_slice", value, Op::ColSlice(a, start), &[a])
    }

    /// Scales each nonzero row to unit Euclidean norm; zero rows stay zero
    /// and pass a zero gradient.
    pub fn row_l2_normalize(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut value = x.clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        self.record("row_l2_normalize", value, Op::RowL2Normalize(a), &[a])
    }

    /// Cosine similarity between every row of `a` and every row of `b`.
    /// Zero rows give similarity 0.
    pub fn cosine_similarity_matrix(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a).1 != self.shape(b).1 {
            return Err(Error::shape("cosine_similarity", self.shape(a), self.shape(b)));
        }
        let na = self.row_l2_normalize(a)?;
        let nb = if a == b { na } else { self.row_l2_normalize(b)? };
        self.matmul_nt(na, nb)
    }

    /// `D^{-1/2} (a + I) D^{-1/2}` with `D` the row sums of `a + I`.
    pub fn sym_normalize(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.rows() != x.cols() {
            return Err(Error::shape("sym_normalize", x.shape(), x.shape()));
        }
        let n = x.rows();
        let r = inv_sqrt_degrees(x)?;
        let mut value = Matrix::zeros(n, n);
        for i in 0..n {
            let (src, dst) = (x.row(i), value.row_mut(i));
            for j in 0..n {
                let m = src[j] + if i == j { 1.0 } else { 0.0 };
                dst[j] = r[i] * m * r[j];
            }
        }
        self.record("sym_normalize", value, Op::SymNormalize(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Matrix::scalar(self.value(a).sum());
        self.record("sum", value, Op::Sum(a), &[a])
    }

    /// `Σ (a − b)²` as a `1×1` node.
    pub fn squared_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        x.ensure_same_shape(y, "squared_distance")?;
        let s = x
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(p, q)| (p - q) * (p - q))
            .sum();
        self.record(
            "squared_distance",
            Matrix::scalar(s),
            Op::SquaredDistance(a, b),
            &[a, b],
        )
    }

    /// Mean cross-view NT-Xent over the `N×N` logits `scale · sim`, whose
    /// diagonal holds the positive pairs.
    pub fn ntxent(&mut self, sim: Var, scale: f64, variant: NtXentVariant) -> Result<Var> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("ntxent scale must be positive, got {scale}")));
        }
        let x = self.value(sim);
        let n = x.rows();
        if x.cols() != n {
            return Err(Error::shape("ntxent", x.shape(), x.shape()));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(
                "contrastive loss needs at least two samples".into(),
            ));
        }
        let mut total = 0.0;
        for i in 0..n {
            let row = x.row(i);
            total += log_denominator(row, scale, i, variant) - scale * row[i];
        }
        let value = Matrix::scalar(total / n as f64);
        self.record("ntxent", value, Op::NtXent(sim, scale, variant), &[sim])
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::InvalidArgument(format!(
                "backward needs a 1x1 loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.propagate(idx, node, &g, &mut adj)?;
            adj[idx] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }

    fn propagate(&self, idx: usize, node: &Node, g: &Matrix, adj: &mut [Option<Matrix>]) -> Result<()> {
        let mut acc = |v: Var, contrib: Matrix| {
            assert!(v.0 < idx, "tape cycle: node {idx} consumes {}", v.0);
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(existing) => existing.axpy(1.0, &contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let y = &node.value;

        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(a) {
                    acc(a, g.matmul_nt(self.value(b))?);
                }
                if needs(b) {
                    acc(b, self.value(a).matmul_tn(g)?);
                }
            }
            Op::MatMulNt(a, b) => {
                // y = a bᵀ: da = g b, db = gᵀ a
                if needs(a) {
                    acc(a, g.matmul(self.value(b))?);
                }
                if needs(b) {
                    acc(b, g.matmul_tn(self.value(a))?);
                }
            }
            Op::Transpose(a) => acc(a, g.transpose()),
            Op::Add(a, b) => {
                if needs(a) {
                    acc(a, g.clone());
                }
                if needs(b) {
                    acc(b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if needs(a) {
                    acc(a, g.clone());
                }
                if needs(b) {
                    acc(b, g.scale(-1.0));
                }
            }
            Op::Hadamard(a, b) => {
                if needs(a) {
                    acc(a, g.hadamard(self.value(b))?);
                }
                if needs(b) {
                    acc(b, g.hadamard(self.value(a))?);
                }
            }
            Op::Scale(a, s) => acc(a, g.scale(s)),
            Op::AddRowBias(a, bias) => {
                if needs(a) {
                    acc(a, g.clone());
                }
                if needs(bias) {
                    let mut db = Matrix::zeros(1, g.cols());
                    for row in g.iter_rows() {
                        for (d, v) in db.as_mut_slice().iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    acc(bias, db);
                }
            }
            Op::Activation(a, kind) => {
                let x = self.value(a);
                let mut d = g.clone();
                for ((dv, &xv), &yv) in d.as_mut_slice().iter_mut().zip(x.as_slice()).zip(y.as_slice()) {
                    *dv *= kind.derivative(xv, yv);
                }
                acc(a, d);
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(a);
                let mut d = g.clone();
                for (dv, &xv) in d.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if !(xv > lo && xv < hi) {
                        *dv = 0.0;
                    }
                }
                acc(a, d);
            }
            Op::GatedProduct(a, s, z) => {
                let (av, sv, zv) = (self.value(a), self.value(s), self.value(z));
                let gate = |k: usize| sv.as_slice()[k].clamp(0.0, 1.0);
                let each = |f: &dyn Fn(usize, f64) -> f64| {
                    let data = g.as_slice().iter().enumerate().map(|(k, &gv)| f(k, gv)).collect();
                    Matrix::from_vec(g.rows(), g.cols(), data)
                };
                if needs(a) {
                    acc(a, each(&|k, gv| gv * gate(k) * zv.as_slice()[k])?);
                }
                if needs(s) {
                    acc(s, each(&|k, gv| {
                        let x = sv.as_slice()[k];
                        if x > 0.0 && x < 1.0 {
                            gv * av.as_slice()[k] * zv.as_slice()[k]
                        } else {
                            0.0
                        }
                    })?);
                }
                if needs(z) {
                    acc(z, each(&|k, gv| gv * av.as_slice()[k] * gate(k))?);
                }
            }
            Op::RowSoftmax(a, scale) => acc(a, softmax_backward(y, g, scale)),
            Op::MaskedRowSoftmax(a) => acc(a, softmax_backward(y, g, 1.0)),
            Op::OuterSum(a, b) => {
                if needs(a) {
                    let da: Vec<f64> = g.row_sums();
                    acc(a, Matrix::from_vec(da.len(), 1, da)?);
                }
                if needs(b) {
                    let mut db = Matrix::zeros(g.cols(), 1);
                    for row in g.iter_rows() {
                        for (d, v) in db.as_mut_slice().iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    acc(b, db);
                }
            }
            Op::ColSlice(a, start) => {
                let (rows, cols) = self.shape(a);
                let mut d = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    d.row_mut(r)[start..start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(a, d);
            }
            Op::RowL2Normalize(a) => {
                let x = self.value(a);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let norm = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for ((dv, &yv), &gv) in d.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *dv = (gv - yv * dot) / norm;
                    }
                }
                acc(a, d);
            }
            Op::SymNormalize(a) => {
                let x = self.value(a);
                let n = x.rows();
                let r = inv_sqrt_degrees(x)?;
                let m = |i: usize, j: usize| x[(i, j)] + if i == j { 1.0 } else { 0.0 };
                // dL/dr_k from both the row and the column role of r_k
                let mut dr = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        let t = g[(i, j)] * m(i, j);
                        dr[i] += t * r[j];
                        dr[j] += t * r[i];
                    }
                }
                let mut d = Matrix::zeros(n, n);
                for i in 0..n {
                    let ddeg = -0.5 * r[i] * r[i] * r[i] * dr[i];
                    let row = d.row_mut(i);
                    for j in 0..n {
                        row[j] = g[(i, j)] * r[i] * r[j] + ddeg;
                    }
                }
                acc(a, d);
            }
            Op::Sum(a) => {
                let (rows, cols) = self.shape(a);
                acc(a, Matrix::filled(rows, cols, g[(0, 0)]));
            }
            Op::SquaredDistance(a, b) => {
                let diff = self.value(a).sub(self.value(b))?;
                let s = 2.0 * g[(0, 0)];
                if needs(a) {
                    acc(a, diff.scale(s));
                }
                if needs(b) {
                    acc(b, diff.scale(-s));
                }
            }
            Op::NtXent(a, scale, variant) => {
                let x = self.value(a);
                let n = x.rows();
                let s = scale * g[(0, 0)] / n as f64;
                let mut d = Matrix::zeros(n, n);
                for i in 0..n {
                    let row = x.row(i);
                    let lse = log_denominator(row, scale, i, variant);
                    let out = d.row_mut(i);
                    for k in 0..n {
                        let in_denominator = k != i || variant == NtXentVariant::Standard;
                        let p = if in_denominator { (scale * row[k] - lse).exp() } else { 0.0 };
                        out[k] = s * (p - if k == i { 1.0 } else { 0.0 });
                    }
                }
                acc(a, d);
            }
        }
        Ok(())
    }
}

fn softmax_into(x: &[f64], scale: f64, mask: Option<&[bool]>, out: &mut [f64]) {
    let on = |j: usize| mask.is_none_or(|m| m[j]);
    let max = (0..x.len())
        .filter(|&j| on(j))
        .map(|j| scale * x[j])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for j in 0..x.len() {
        out[j] = if on(j) {
            let e = (scale * x[j] - max).exp();
            total += e;
            e
        } else {
            0.0
        };
    }
    out.iter_mut().for_each(|v| *v /= total);
}

fn softmax_backward(y: &Matrix, g: &Matrix, scale: f64) -> Matrix {
    let mut d = Matrix::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let (yr, gr) = (y.row(r), g.row(r));
        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
        for ((dv, &yv), &gv) in d.row_mut(r).iter_mut().zip(yr).zip(gr) {
            *dv = scale * yv * (gv - dot);
        }
    }
    d
}

fn inv_sqrt_degrees(x: &Matrix) -> Result<Vec<f64>> {
    (0..x.rows())
        .map(|i| {
            let deg = x.row(i).iter().sum::<f64>() + 1.0;
            if deg > 0.0 {
                Ok(deg.powf(-0.5))
            } else {
                Err(Error::InvalidArgument(format!(
                    "row {i} has non-positive degree {deg} after adding the self-loop"
                )))
            }
        })
        .collect()
}

/// `log Σ_k exp(scale · row[k])` over the denominator set of row `i`.
fn log_denominator(row: &[f64], scale: f64, i: usize, variant: NtXentVariant) -> f64 {
    let keep = |k: usize| k != i || variant == NtXentVariant::Standard;
    let max = (0..row.len())
        .filter(|&k| keep(k))
        .map(|k| scale * row[k])
        .fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = (0..row.len())
        .filter(|&k| keep(k))
        .map(|k| (scale * row[k] - max).exp())
        .sum();
    max + s.ln()
}
