//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation applied to its nodes. Calling
//! [`Tape::backward`] on a scalar node walks the record in reverse and
//! accumulates exact gradients for every node that depends on a parameter.
//! Row vectors are `1 × n` matrices and scalars are `1 × 1`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::{s, Array2, Axis};

use super::sparse::SparseMatrix;

static NEXT_TENSOR_ID: AtomicU64 = AtomicU64::new(1);

/// A named-by-identity parameter matrix with an optional gradient buffer.
#[derive(Debug)]
pub struct Tensor {
    id: u64,
    value: Array2<f64>,
    grad: Option<Array2<f64>>,
}

impl Tensor {
    pub fn new(value: Array2<f64>) -> Self {
        Self {
            id: NEXT_TENSOR_ID.fetch_add(1, Ordering::Relaxed),
            value,
            grad: None,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Array2::zeros((rows, cols)))
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }

    pub fn value(&self) -> &Array2<f64> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Array2<f64> {
        &mut self.value
    }

    pub fn grad(&self) -> Option<&Array2<f64>> {
        self.grad.as_ref()
    }

    /// Install a gradient. Panics if the shape differs from the value's.
    pub fn set_grad(&mut self, grad: Option<Array2<f64>>) {
        if let Some(g) = &grad {
            assert_eq!(g.dim(), self.value.dim(), "gradient shape mismatch");
        }
        self.grad = grad;
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }
}

impl Clone for Tensor {
    /// A clone is a distinct parameter: it receives a fresh identity.
    fn clone(&self) -> Self {
        Self {
            id: NEXT_TENSOR_ID.fetch_add(1, Ordering::Relaxed),
            value: self.value.clone(),
            grad: self.grad.clone(),
        }
    }
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, Arc<Array2<f64>>),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    LogClamped(Var, f64, f64),
    RowNorm(Var),
    NormalizeRows(Var, f64),
    RowSum(Var),
    RowLogSumExp(Var),
    Diag(Var),
    Sum(Var),
    Mean(Var),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Var, Var),
    SliceCols(Var, usize, usize),
    Reshape(Var),
    SpMM(Arc<SparseMatrix>, Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<u64, Var>,
    grads: Vec<Option<Array2<f64>>>,
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

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
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

    /// A node that never receives gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn constant_tensor(&mut self, t: &Tensor) -> Var {
        self.constant(t.value().clone())
    }

    /// A gradient-tracked leaf bound to `t`. Binding the same tensor twice
    /// returns the same node.
    pub fn param(&mut self, t: &Tensor) -> Var {
        if let Some(&v) = self.params.get(&t.id()) {
            return v;
        }
        let v = self.push(t.value().clone(), Op::Leaf, true);
        self.params.insert(t.id(), v);
        v
    }

    /// Bind `t` as a parameter when `track` is set, as a constant otherwise.
    pub fn bind(&mut self, t: &Tensor, track: bool) -> Var {
        if track {
            self.param(t)
        } else {
            self.constant_tensor(t)
        }
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let x = self.value(v);
        debug_assert_eq!(x.dim(), (1, 1));
        x[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    // ---- operations ------------------------------------------------------

    /// `a · b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMulT(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let value = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let value = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    /// Add the `1 × m` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (_, m) = self.shape(a);
        assert_eq!(self.shape(b), (1, m), "add_row shape mismatch");
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::AddRow(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) * k;
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, k), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) + k;
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    /// Elementwise product with a constant matrix that takes no gradient.
    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        assert_eq!(self.shape(a), c.dim(), "mul_const shape mismatch");
        let value = self.value(a) * &c;
        let rg = self.rg(a);
        self.push(value, Op::MulConst(a, Arc::new(c)), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self
            .value(a)
            .mapv(|x| if x >= 0.0 { x } else { slope * x });
        let rg = self.rg(a);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    /// `ln(clamp(a, lo, hi))`. The gradient is zero where the clamp is active.
    pub fn log_clamped(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).mapv(|x| x.clamp(lo, hi).ln());
        let rg = self.rg(a);
        self.push(value, Op::LogClamped(a, lo, hi), rg)
    }

    /// Euclidean norm of each row, `n × m → n × 1`.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .map_axis(Axis(1), |r| r.dot(&r).sqrt())
            .insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(value, Op::RowNorm(a), rg)
    }

    /// Scale each row to unit length. Rows shorter than `eps` are divided by
    /// `eps` instead, so an all-zero row maps to zero.
    pub fn normalize_rows(&mut self, a: Var, eps: f64) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let n = row.dot(&row).sqrt().max(eps);
            row.mapv_inplace(|x| x / n);
        }
        let rg = self.rg(a);
        self.push(value, Op::NormalizeRows(a, eps), rg)
    }

    /// Sum of each row, `n × m → n × 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(value, Op::RowSum(a), rg)
    }

    /// Stable `ln Σ_j exp(a_ij)` per row, `n × m → n × 1`.
    pub fn row_logsumexp(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .map_axis(Axis(1), |r| logsumexp(r.iter().copied()))
            .insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(value, Op::RowLogSumExp(a), rg)
    }

    /// Diagonal of a square matrix as a column, `n × n → n × 1`.
    pub fn diag(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(n, m, "diag of non-square matrix");
        let value = self.value(a).diag().to_owned().insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(value, Op::Diag(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        assert!(!x.is_empty(), "mean of empty node");
        let value = Array2::from_elem((1, 1), x.sum() / x.len() as f64);
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    /// Select rows by index; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let value = self.value(a).select(Axis(0), idx);
        let rg = self.rg(a);
        self.push(value, Op::GatherRows(a, idx.to_vec()), rg)
    }

    /// `[a | b]` along columns.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a).0, self.shape(b).0, "concat row mismatch");
        let value = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("concat_cols");
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::ConcatCols(a, b), rg)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        let rg = self.rg(a);
        self.push(value, Op::SliceCols(a, start, end), rg)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.len(), rows * cols, "reshape size mismatch");
        let flat: Vec<f64> = x.iter().copied().collect();
        let value = Array2::from_shape_vec((rows, cols), flat).expect("reshape");
        let rg = self.rg(a);
        self.push(value, Op::Reshape(a), rg)
    }

    /// Sparse-dense product `m · a`.
    pub fn spmm(&mut self, m: &Arc<SparseMatrix>, a: Var) -> Var {
        let value = m.mul_dense(self.value(a));
        let rg = self.rg(a);
        self.push(value, Op::SpMM(Arc::clone(m), a), rg)
    }

    /// Dense layer `x · Wᵀ + b` with `W: d_out × d_in`, `b: 1 × d_out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul_t(x, w);
        self.add_row(xw, b)
    }

    // ---- backward --------------------------------------------------------

    /// Accumulate gradients of the scalar `loss` for every tracked node.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let n = self.nodes.len();
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; n];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
    }

    fn propagate(&self, i: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, delta: Array2<f64>| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |v: Var| &nodes[v.0].value;
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                acc(*a, g.dot(&val(*b).t()));
                acc(*b, val(*a).t().dot(g));
            }
            Op::MatMulT(a, b) => {
                acc(*a, g.dot(val(*b)));
                acc(*b, g.t().dot(val(*a)));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                acc(*a, g * val(*b));
                acc(*b, g * val(*a));
            }
            Op::AddRow(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Scale(a, k) => acc(*a, g * *k),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::MulConst(a, c) => acc(*a, g * c.as_ref()),
            Op::Relu(a) => {
                let mut d = g.clone();
                d.zip_mut_with(val(*a), |d, &x| {
                    if x <= 0.0 {
                        *d = 0.0
                    }
                });
                acc(*a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let mut d = g.clone();
                d.zip_mut_with(val(*a), |d, &x| {
                    if x < 0.0 {
                        *d *= slope
                    }
                });
                acc(*a, d);
            }
            Op::Sigmoid(a) => {
                let y = &nodes[i].value;
                let mut d = g.clone();
                d.zip_mut_with(y, |d, &y| *d *= y * (1.0 - y));
                acc(*a, d);
            }
            Op::LogClamped(a, lo, hi) => {
                let mut d = g.clone();
                d.zip_mut_with(val(*a), |d, &x| {
                    if x > *lo && x < *hi {
                        *d /= x
                    } else {
                        *d = 0.0
                    }
                });
                acc(*a, d);
            }
            Op::RowNorm(a) => {
                let x = val(*a);
                let norms = &nodes[i].value;
                let mut d = x.clone();
                for (r, mut row) in d.rows_mut().into_iter().enumerate() {
                    let n = norms[[r, 0]];
                    let gr = g[[r, 0]];
                    if n > 0.0 {
                        row.mapv_inplace(|x| gr * x / n);
                    } else {
                        row.fill(0.0);
                    }
                }
                acc(*a, d);
            }
            Op::NormalizeRows(a, eps) => {
                let x = val(*a);
                let y = &nodes[i].value;
                let mut d = g.clone();
                for r in 0..x.nrows() {
                    let xr = x.row(r);
                    let n = xr.dot(&xr).sqrt();
                    let mut dr = d.row_mut(r);
                    if n > *eps {
                        let yr = y.row(r);
                        let proj = yr.dot(&g.row(r));
                        for (k, dv) in dr.iter_mut().enumerate() {
                            *dv = (*dv - yr[k] * proj) / n;
                        }
                    } else {
                        dr.mapv_inplace(|v| v / eps);
                    }
                }
                acc(*a, d);
            }
            Op::RowSum(a) => {
                let (_, m) = self.shape(*a);
                let d = g.broadcast((g.nrows(), m)).expect("row_sum bcast").to_owned();
                acc(*a, d);
            }
            Op::RowLogSumExp(a) => {
                let x = val(*a);
                let lse = &nodes[i].value;
                let mut d = x.clone();
                for (r, mut row) in d.rows_mut().into_iter().enumerate() {
                    let l = lse[[r, 0]];
                    let gr = g[[r, 0]];
                    row.mapv_inplace(|x| gr * (x - l).exp());
                }
                acc(*a, d);
            }
            Op::Diag(a) => {
                let (n, _) = self.shape(*a);
                let mut d = Array2::zeros((n, n));
                for k in 0..n {
                    d[[k, k]] = g[[k, 0]];
                }
                acc(*a, d);
            }
            Op::Sum(a) => {
                let d = Array2::from_elem(self.shape(*a), g[[0, 0]]);
                acc(*a, d);
            }
            Op::Mean(a) => {
                let sh = self.shape(*a);
                let d = Array2::from_elem(sh, g[[0, 0]] / (sh.0 * sh.1) as f64);
                acc(*a, d);
            }
            Op::GatherRows(a, idx) => {
                let mut d = Array2::zeros(self.shape(*a));
                for (k, &row) in idx.iter().enumerate() {
                    let mut target = d.row_mut(row);
                    target += &g.row(k);
                }
                acc(*a, d);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.shape(*a).1;
                acc(*a, g.slice(s![.., ..ca]).to_owned());
                acc(*b, g.slice(s![.., ca..]).to_owned());
            }
            Op::SliceCols(a, start, end) => {
                let mut d = Array2::zeros(self.shape(*a));
                d.slice_mut(s![.., *start..*end]).assign(g);
                acc(*a, d);
            }
            Op::Reshape(a) => {
                let flat: Vec<f64> = g.iter().copied().collect();
                let d = Array2::from_shape_vec(self.shape(*a), flat).expect("reshape back");
                acc(*a, d);
            }
            Op::SpMM(m, a) => acc(*a, m.t_mul_dense(g)),
        }
    }

    /// Gradient of the last `backward` loss w.r.t. `v`, if `v` was reached.
    pub fn grad(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient w.r.t. a bound parameter tensor.
    pub fn grad_for(&self, t: &Tensor) -> Option<&Array2<f64>> {
        self.params.get(&t.id()).and_then(|&v| self.grad(v))
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

pub fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}
