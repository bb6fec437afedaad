//! Tape-based reverse-mode automatic differentiation over [`Array`] values.
//!
//! Every primitive appends one node holding its forward value and enough
//! context to evaluate its pullback. Nodes are appended after their
//! parents, so reverse index order is a valid topological order and
//! [`Tape::backward`] visits every node at most once.

use super::{Array, Real};
use crate::error::{shape_err, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Epsilon added to the row variance inside [`Tape::layer_norm_rows`].
pub const LAYER_NORM_EPS: f64 = 1e-9;

#[derive(Clone, Debug)]
enum Op<T> {
    Input,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Transpose(Var),
    Reshape(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    Clamp(Var, T, T),
    SoftmaxRows(Var),
    LayerNormRows(Var, Vec<T>),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    MeanRows(Var),
    SumCols(Var),
    LogSumExpRows(Var),
}

struct Node<T> {
    value: Array<T>,
    op: Op<T>,
    tracked: bool,
}

/// Single-owner record of a forward computation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward sweep, indexed by node.
pub struct Gradients<T> {
    grads: Vec<Option<Array<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Array<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient for `var`, or zeros of `shape` when no path reached it.
    pub fn get_or_zeros(&self, var: Var, shape: [usize; 2]) -> Array<T> {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Array::zeros(shape[0], shape[1]))
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`, so bound inputs
    /// can be reused across independent forward passes.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Array<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Array<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Input,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Array<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Input,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Array<T>, op: Op<T>, parents: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let tracked = parents.iter().any(|p| self.nodes[p.0].tracked);
        self.nodes.push(Node { value, op, tracked });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, name: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(name, format!("{:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn row_operand(&self, name: &'static str, x: Var, r: Var) -> Result<()> {
        let [_, c] = self.shape(x);
        if self.shape(r) != [1, c] {
            return shape_err(name, format!("row operand {:?} for {:?}", self.shape(r), self.shape(x)));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push("sub", value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    /// Adds a `1 x cols` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.row_operand("add_row", x, row)?;
        let xv = self.value(x);
        let rv = self.value(row).data();
        let cols = xv.cols();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + rv[i % cols])
            .collect();
        let value = Array::new(xv.rows(), cols, data)?;
        self.push("add_row", value, Op::AddRow(x, row), &[x, row])
    }

    /// Multiplies every row of `x` elementwise by a `1 x cols` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.row_operand("mul_row", x, row)?;
        let xv = self.value(x);
        let rv = self.value(row).data();
        let cols = xv.cols();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * rv[i % cols])
            .collect();
        let value = Array::new(xv.rows(), cols, data)?;
        self.push("mul_row", value, Op::MulRow(x, row), &[x, row])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let f = T::of(factor);
        let value = self.value(x).map(|v| v * f);
        self.push("scale", value, Op::Scale(x, f), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        let c = T::of(c);
        let value = self.value(x).map(|v| v + c);
        self.push("add_scalar", value, Op::AddScalar(x), &[x])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat_cols", "no operands");
        };
        let rows = self.shape(first)[0];
        if parts.iter().any(|&p| self.shape(p)[0] != rows) {
            return shape_err("concat_cols", "row counts differ");
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Array::new(rows, cols, data)?;
        self.push("concat_cols", value, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat_rows", "no operands");
        };
        let cols = self.shape(first)[1];
        if parts.iter().any(|&p| self.shape(p)[1] != cols) {
            return shape_err("concat_rows", "column counts differ");
        }
        let rows: usize = parts.iter().map(|&p| self.shape(p)[0]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let value = Array::new(rows, cols, data)?;
        self.push("concat_rows", value, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let [rows, cols] = self.shape(x);
        if start + len > rows || len == 0 {
            return shape_err("slice_rows", format!("{start}+{len} of {rows}"));
        }
        let data = self.value(x).data()[start * cols..(start + len) * cols].to_vec();
        let value = Array::new(len, cols, data)?;
        self.push("slice_rows", value, Op::SliceRows(x, start), &[x])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let [rows, cols] = self.shape(x);
        if start + len > cols || len == 0 {
            return shape_err("slice_cols", format!("{start}+{len} of {cols}"));
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let value = Array::new(rows, len, data)?;
        self.push("slice_cols", value, Op::SliceCols(x, start), &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transpose();
        self.push("transpose", value, Op::Transpose(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(x).reshape(rows, cols)?;
        self.push("reshape", value, Op::Reshape(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(T::exp);
        self.push("exp", value, Op::Exp(x), &[x])
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|v| **v <= T::zero()) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive argument {bad:?}"),
            });
        }
        let value = self.value(x).map(T::ln);
        self.push("log", value, Op::Log(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(T::tanh);
        self.push("tanh", value, Op::Tanh(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.push("relu", value, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(sigmoid);
        self.push("sigmoid", value, Op::Sigmoid(x), &[x])
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v * v);
        self.push("square", value, Op::Square(x), &[x])
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        let (lo, hi) = (T::of(lo), T::of(hi));
        let value = self.value(x).map(|v| v.max(lo).min(hi));
        self.push("clamp", value, Op::Clamp(x, lo, hi), &[x])
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut data = Vec::with_capacity(xv.len());
        for r in 0..xv.rows() {
            let row = xv.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let start = data.len();
            let mut total = T::zero();
            for &v in row {
                let e = (v - max).exp();
                total = total + e;
                data.push(e);
            }
            for e in &mut data[start..start + cols] {
                *e = *e / total;
            }
        }
        let value = Array::new(xv.rows(), cols, data)?;
        self.push("softmax_rows", value, Op::SoftmaxRows(x), &[x])
    }

    /// Normalises each row to zero mean and unit (population) variance.
    pub fn layer_norm_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.cols();
        let n = T::of(cols as f64);
        let eps = T::of(LAYER_NORM_EPS);
        let mut data = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(xv.rows());
        for r in 0..xv.rows() {
            let row = xv.row(r);
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) / n;
            let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            data.extend(row.iter().map(|&v| (v - mean) * inv));
        }
        let value = Array::new(xv.rows(), cols, data)?;
        self.push("layer_norm_rows", value, Op::LayerNormRows(x, inv_std), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Array::scalar(self.value(x).sum());
        self.push("sum", value, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let value = Array::scalar(xv.sum() / T::of(xv.len() as f64));
        self.push("mean", value, Op::Mean(x), &[x])
    }

    /// Column sums, `rows x cols -> 1 x cols`.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let value = column_sums(self.value(x));
        self.push("sum_rows", value, Op::SumRows(x), &[x])
    }

    /// Column means, `rows x cols -> 1 x cols`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let n = T::of(xv.rows() as f64);
        let value = column_sums(xv).map(|v| v / n);
        self.push("mean_rows", value, Op::MeanRows(x), &[x])
    }

    /// Row sums, `rows x cols -> rows x 1`.
    pub fn sum_cols(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = (0..xv.rows())
            .map(|r| xv.row(r).iter().fold(T::zero(), |a, &v| a + v))
            .collect();
        let value = Array::column_vector(data);
        self.push("sum_cols", value, Op::SumCols(x), &[x])
    }

    /// Stable `log(sum(exp(row)))` per row, `rows x cols -> rows x 1`.
    pub fn logsumexp_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = (0..xv.rows()).map(|r| logsumexp(xv.row(r))).collect();
        let value = Array::column_vector(data);
        self.push("logsumexp_rows", value, Op::LogSumExpRows(x), &[x])
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        if self.shape(root) != [1, 1] {
            return shape_err("backward", format!("root must be scalar, got {:?}", self.shape(root)));
        }
        self.backward_with_seed(root, Array::scalar(T::one()))
    }

    /// Reverse sweep seeded with an arbitrary cotangent for `root`
    /// (a vector-Jacobian product).
    pub fn backward_with_seed(&self, root: Var, seed: Array<T>) -> Result<Gradients<T>> {
        if seed.shape() != self.shape(root) {
            return shape_err("backward", "seed shape differs from root");
        }
        let mut grads: Vec<Option<Array<T>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(seed);
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.pullback(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Array<T>>], v: Var, contribution: Array<T>) {
        if !self.nodes[v.0].tracked {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&contribution),
            slot => *slot = Some(contribution),
        }
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn pullback(&self, node: &Node<T>, g: &Array<T>, grads: &mut [Option<Array<T>>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Input => {}
            Op::MatMul(a, b) => {
                if self.tracked(*a) {
                    let ga = g.matmul_t(self.value(*b))?;
                    self.accumulate(grads, *a, ga);
                }
                if self.tracked(*b) {
                    let gb = self.value(*a).t_matmul(g)?;
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.tracked(*b) {
                    self.accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if self.tracked(*a) {
                    self.accumulate(grads, *a, g.zip_map(self.value(*b), |gv, bv| gv * bv));
                }
                if self.tracked(*b) {
                    self.accumulate(grads, *b, g.zip_map(self.value(*a), |gv, av| gv * av));
                }
            }
            Op::AddRow(x, r) => {
                self.accumulate(grads, *x, g.clone());
                if self.tracked(*r) {
                    self.accumulate(grads, *r, column_sums(g));
                }
            }
            Op::MulRow(x, r) => {
                let rv = self.value(*r).data();
                let cols = g.cols();
                if self.tracked(*x) {
                    let data = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, &gv)| gv * rv[i % cols])
                        .collect();
                    self.accumulate(grads, *x, Array::new(g.rows(), cols, data)?);
                }
                if self.tracked(*r) {
                    let prod = g.zip_map(self.value(*x), |gv, xv| gv * xv);
                    self.accumulate(grads, *r, column_sums(&prod));
                }
            }
            Op::Scale(x, f) => {
                let f = *f;
                self.accumulate(grads, *x, g.map(|v| v * f));
            }
            Op::AddScalar(x) => self.accumulate(grads, *x, g.clone()),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let [rows, cols] = self.shape(p);
                    if self.tracked(p) {
                        let mut data = Vec::with_capacity(rows * cols);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        self.accumulate(grads, p, Array::new(rows, cols, data)?);
                    }
                    offset += cols;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                let cols = g.cols();
                for &p in parts {
                    let rows = self.shape(p)[0];
                    if self.tracked(p) {
                        let data = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        self.accumulate(grads, p, Array::new(rows, cols, data)?);
                    }
                    offset += rows;
                }
            }
            Op::SliceRows(x, start) => {
                let [rows, cols] = self.shape(*x);
                let mut full = Array::zeros(rows, cols);
                full.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *x, full);
            }
            Op::SliceCols(x, start) => {
                let [rows, cols] = self.shape(*x);
                let len = g.cols();
                let mut full = Array::zeros(rows, cols);
                for r in 0..rows {
                    full.data_mut()[r * cols + start..r * cols + start + len].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *x, full);
            }
            Op::Transpose(x) => self.accumulate(grads, *x, g.transpose()),
            Op::Reshape(x) => {
                let [rows, cols] = self.shape(*x);
                self.accumulate(grads, *x, g.reshape(rows, cols)?);
            }
            Op::Exp(x) => self.accumulate(grads, *x, g.zip_map(y, |gv, yv| gv * yv)),
            Op::Log(x) => self.accumulate(grads, *x, g.zip_map(self.value(*x), |gv, xv| gv / xv)),
            Op::Tanh(x) => self.accumulate(grads, *x, g.zip_map(y, |gv, yv| gv * (T::one() - yv * yv))),
            Op::Relu(x) => self.accumulate(
                grads,
                *x,
                g.zip_map(self.value(*x), |gv, xv| if xv > T::zero() { gv } else { T::zero() }),
            ),
            Op::Sigmoid(x) => self.accumulate(grads, *x, g.zip_map(y, |gv, yv| gv * yv * (T::one() - yv))),
            Op::Square(x) => {
                let two = T::of(2.0);
                self.accumulate(grads, *x, g.zip_map(self.value(*x), |gv, xv| gv * two * xv));
            }
            Op::Clamp(x, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                self.accumulate(
                    grads,
                    *x,
                    g.zip_map(self.value(*x), |gv, xv| if xv >= lo && xv <= hi { gv } else { T::zero() }),
                );
            }
            Op::SoftmaxRows(x) => {
                let cols = y.cols();
                let mut data = Vec::with_capacity(y.len());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot = yr.iter().zip(gr).fold(T::zero(), |a, (&yv, &gv)| a + yv * gv);
                    data.extend(yr.iter().zip(gr).map(|(&yv, &gv)| yv * (gv - dot)));
                }
                self.accumulate(grads, *x, Array::new(y.rows(), cols, data)?);
            }
            Op::LayerNormRows(x, inv_std) => {
                let cols = y.cols();
                let n = T::of(cols as f64);
                let mut data = Vec::with_capacity(y.len());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let g_mean = gr.iter().fold(T::zero(), |a, &v| a + v) / n;
                    let gy_mean = yr.iter().zip(gr).fold(T::zero(), |a, (&yv, &gv)| a + yv * gv) / n;
                    let inv = inv_std[r];
                    data.extend(yr.iter().zip(gr).map(|(&yv, &gv)| inv * (gv - g_mean - yv * gy_mean)));
                }
                self.accumulate(grads, *x, Array::new(y.rows(), cols, data)?);
            }
            Op::Sum(x) => {
                let [rows, cols] = self.shape(*x);
                self.accumulate(grads, *x, Array::filled(rows, cols, g.item()));
            }
            Op::Mean(x) => {
                let [rows, cols] = self.shape(*x);
                let v = g.item() / T::of((rows * cols) as f64);
                self.accumulate(grads, *x, Array::filled(rows, cols, v));
            }
            Op::SumRows(x) | Op::MeanRows(x) => {
                let [rows, cols] = self.shape(*x);
                let factor = match node.op {
                    Op::MeanRows(_) => T::one() / T::of(rows as f64),
                    _ => T::one(),
                };
                let row: Vec<T> = g.data().iter().map(|&v| v * factor).collect();
                let full = Array::from_fn(rows, cols, |_, c| row[c]);
                self.accumulate(grads, *x, full);
            }
            Op::SumCols(x) => {
                let [rows, cols] = self.shape(*x);
                let full = Array::from_fn(rows, cols, |r, _| g.data()[r]);
                self.accumulate(grads, *x, full);
            }
            Op::LogSumExpRows(x) => {
                let xv = self.value(*x);
                let full = Array::from_fn(xv.rows(), xv.cols(), |r, c| {
                    g.data()[r] * (xv.get(r, c) - y.data()[r]).exp()
                });
                self.accumulate(grads, *x, full);
            }
        }
        Ok(())
    }
}

fn column_sums<T: Real>(x: &Array<T>) -> Array<T> {
    let mut out = vec![T::zero(); x.cols()];
    for r in 0..x.rows() {
        for (o, &v) in out.iter_mut().zip(x.row(r)) {
            *o = *o + v;
        }
    }
    Array::row_vector(out)
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn logsumexp<T: Real>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let total = row.iter().fold(T::zero(), |a, &v| a + (v - max).exp());
    max + total.ln()
}
