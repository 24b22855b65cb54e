//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation in creation order, so node ids are
//! already a topological order and the backward sweep is a single reverse
//! pass. A tape belongs to one thread; build one tape per independent graph
//! and reduce the parameter gradients outside.
//!
//! Broadcasting is deliberately limited to scalar-times-matrix and
//! row-vector-plus-matrix ([`Tape::add_row`]).

use std::cell::{Ref, RefCell};

use ndarray::{s, Array2, Axis};
use thiserror::Error;

use crate::Scalar;

/// Floor applied inside [`Tape::log`].
pub const LOG_GUARD: f64 = 1e-30;
/// Floor applied to row norms inside [`Tape::row_l2_normalize`].
pub const NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("non-finite value produced by {op}")]
    NonFiniteValue { op: &'static str },
    #[error("backward requires a 1x1 output, got {0:?}")]
    NotScalar((usize, usize)),
    #[error("slice {start}..{end} out of bounds for extent {len}")]
    SliceOutOfBounds { start: usize, end: usize, len: usize },
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Matmul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    RowL2Normalize(Var),
    MeanRows(Var),
    MaxRows(Var),
    SumEachRow(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    AddRow(Var, Var),
    LogNormalizeRows(Var),
    LogNormalizeCols(Var),
}

struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Computation graph recorder.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Accumulated gradients from one [`Tape::backward`] call.
pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to `v`; zeros when `v` does not reach the output.
    pub fn wrt(&self, v: Var) -> Array2<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Array2::zeros(self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Array2<T> {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Array2::zeros(self.shapes[v.0]))
    }
}

fn dims<T>(a: &Array2<T>) -> (usize, usize) {
    a.dim()
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable input. Gradients flow into it.
    pub fn param(&self, value: Array2<T>) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Constant input. No gradient is tracked.
    pub fn constant(&self, value: Array2<T>) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Array2<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        dims(&self.nodes.borrow()[v.0].value)
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes.borrow()[v.0].value[[0, 0]]
    }

    fn push_raw(&self, value: Array2<T>, op: Op<T>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn push(&self, value: Array2<T>, op: Op<T>, name: &'static str) -> Result<Var, DiffError> {
        if value.iter().any(|x| !x.is_finite()) {
            return Err(DiffError::NonFiniteValue { op: name });
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents(&op).iter().any(|p| nodes[p.0].requires_grad)
        };
        Ok(self.push_raw(value, op, requires_grad))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(DiffError::ShapeMismatch { op, lhs: sa, rhs: sb });
        }
        Ok(())
    }

    fn map_unary(&self, a: Var, f: impl Fn(T) -> T) -> Array2<T> {
        self.value(a).mapv(f)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let out = self.value(a).dot(&*self.value(b));
        self.push(out, Op::Matmul(a, b), "matmul")
    }

    pub fn transpose(&self, a: Var) -> Result<Var, DiffError> {
        let out = self.value(a).t().to_owned();
        self.push(out, Op::Transpose(a), "transpose")
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.same_shape("add", a, b)?;
        let out = &*self.value(a) + &*self.value(b);
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.same_shape("sub", a, b)?;
        let out = &*self.value(a) - &*self.value(b);
        self.push(out, Op::Sub(a, b), "sub")
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.same_shape("mul", a, b)?;
        let out = &*self.value(a) * &*self.value(b);
        self.push(out, Op::Mul(a, b), "mul")
    }

    pub fn scale(&self, a: Var, k: T) -> Result<Var, DiffError> {
        let out = self.map_unary(a, |x| x * k);
        self.push(out, Op::Scale(a, k), "scale")
    }

    pub fn add_scalar(&self, a: Var, k: T) -> Result<Var, DiffError> {
        let out = self.map_unary(a, |x| x + k);
        self.push(out, Op::AddScalar(a), "add_scalar")
    }

    pub fn exp(&self, a: Var) -> Result<Var, DiffError> {
        let out = self.map_unary(a, T::exp);
        self.push(out, Op::Exp(a), "exp")
    }

    /// `log(max(x, LOG_GUARD))`.
    pub fn log(&self, a: Var) -> Result<Var, DiffError> {
        let guard = T::of(LOG_GUARD);
        let out = self.map_unary(a, |x| x.max(guard).ln());
        self.push(out, Op::Log(a), "log")
    }

    /// Subgradient at zero is zero.
    pub fn relu(&self, a: Var) -> Result<Var, DiffError> {
        let out = self.map_unary(a, |x| if x > T::zero() { x } else { T::zero() });
        self.push(out, Op::Relu(a), "relu")
    }

    /// Divides each row by `max(||row||, NORM_GUARD)`.
    pub fn row_l2_normalize(&self, a: Var) -> Result<Var, DiffError> {
        let mut out = self.value(a).clone();
        let guard = T::of(NORM_GUARD);
        for mut row in out.rows_mut() {
            let n = row.dot(&row).sqrt().max(guard);
            row.mapv_inplace(|x| x / n);
        }
        self.push(out, Op::RowL2Normalize(a), "row_l2_normalize")
    }

    /// Average of the rows, shape `1 x C`.
    pub fn mean_rows(&self, a: Var) -> Result<Var, DiffError> {
        let v = self.value(a);
        let n = T::from_usize(v.nrows()).unwrap();
        let out = v.sum_axis(Axis(0)).insert_axis(Axis(0)).mapv(|x| x / n);
        drop(v);
        self.push(out, Op::MeanRows(a), "mean_rows")
    }

    /// Elementwise maximum over the rows, shape `1 x C`.
    pub fn max_rows(&self, a: Var) -> Result<Var, DiffError> {
        let v = self.value(a);
        let out = v
            .fold_axis(Axis(0), T::neg_infinity(), |&m, &x| m.max(x))
            .insert_axis(Axis(0));
        drop(v);
        self.push(out, Op::MaxRows(a), "max_rows")
    }

    /// Sum within each row, shape `N x 1`.
    pub fn sum_each_row(&self, a: Var) -> Result<Var, DiffError> {
        let out = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(out, Op::SumEachRow(a), "sum_each_row")
    }

    pub fn sum(&self, a: Var) -> Result<Var, DiffError> {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::Sum(a), "sum")
    }

    pub fn mean(&self, a: Var) -> Result<Var, DiffError> {
        let v = self.value(a);
        let n = T::from_usize(v.len()).unwrap();
        let out = Array2::from_elem((1, 1), v.sum() / n);
        drop(v);
        self.push(out, Op::Mean(a), "mean")
    }

    pub fn concat_cols(&self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.0 != sb.0 {
            return Err(DiffError::ShapeMismatch {
                op: "concat_cols",
                lhs: sa,
                rhs: sb,
            });
        }
        let out =
            ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()]).expect("row counts checked");
        self.push(out, Op::ConcatCols(a, b), "concat_cols")
    }

    pub fn concat_rows(&self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(DiffError::ShapeMismatch {
                op: "concat_rows",
                lhs: sa,
                rhs: sb,
            });
        }
        let out = ndarray::concatenate(Axis(0), &[self.value(a).view(), self.value(b).view()])
            .expect("column counts checked");
        self.push(out, Op::ConcatRows(a, b), "concat_rows")
    }

    /// Rows `start..end`.
    pub fn slice_rows(&self, a: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        let len = self.shape(a).0;
        if start > end || end > len {
            return Err(DiffError::SliceOutOfBounds { start, end, len });
        }
        let out = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(out, Op::SliceRows(a, start), "slice_rows")
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        let len = self.shape(a).1;
        if start > end || end > len {
            return Err(DiffError::SliceOutOfBounds { start, end, len });
        }
        let out = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(out, Op::SliceCols(a, start), "slice_cols")
    }

    /// Adds the `1 x C` row vector `row` to every row of `a`.
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var, DiffError> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(DiffError::ShapeMismatch {
                op: "add_row",
                lhs: sa,
                rhs: sr,
            });
        }
        let out = &*self.value(a) + &*self.value(row);
        self.push(out, Op::AddRow(a, row), "add_row")
    }

    /// `x - logsumexp(row)` for each row (log-domain row normalization).
    pub fn log_normalize_rows(&self, a: Var) -> Result<Var, DiffError> {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let lse = log_sum_exp(row.iter().copied());
            row.mapv_inplace(|x| x - lse);
        }
        self.push(out, Op::LogNormalizeRows(a), "log_normalize_rows")
    }

    /// `x - logsumexp(column)` for each column.
    pub fn log_normalize_cols(&self, a: Var) -> Result<Var, DiffError> {
        let mut out = self.value(a).clone();
        for mut col in out.columns_mut() {
            let lse = log_sum_exp(col.iter().copied());
            col.mapv_inplace(|x| x - lse);
        }
        self.push(out, Op::LogNormalizeCols(a), "log_normalize_cols")
    }

    /// Reverse sweep from the 1x1 node `out`.
    pub fn backward(&self, out: Var) -> Result<Gradients<T>, DiffError> {
        let nodes = self.nodes.borrow();
        let shape = dims(&nodes[out.0].value);
        if shape != (1, 1) {
            return Err(DiffError::NotScalar(shape));
        }
        let mut grads: Vec<Option<Array2<T>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(Array2::ones((1, 1)));

        for id in (0..=out.0).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let val = |v: Var| &nodes[v.0].value;
            let mut acc = |v: Var, d: Array2<T>| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => *existing += &d,
                    slot @ None => *slot = Some(d),
                }
            };
            match node.op {
                Op::Leaf => unreachable!(),
                Op::Matmul(a, b) => {
                    acc(a, g.dot(&val(b).t()));
                    acc(b, val(a).t().dot(&g));
                }
                Op::Transpose(a) => acc(a, g.t().to_owned()),
                Op::Add(a, b) => {
                    acc(a, g.clone());
                    acc(b, g);
                }
                Op::Sub(a, b) => {
                    acc(a, g.clone());
                    acc(b, -g);
                }
                Op::Mul(a, b) => {
                    acc(a, &g * val(b));
                    acc(b, &g * val(a));
                }
                Op::Scale(a, k) => acc(a, g.mapv(|x| x * k)),
                Op::AddScalar(a) => acc(a, g),
                Op::Exp(a) => acc(a, &g * &node.value),
                Op::Log(a) => {
                    let guard = T::of(LOG_GUARD);
                    let mut d = g;
                    d.zip_mut_with(val(a), |d, &x| {
                        *d = if x > guard { *d / x } else { T::zero() };
                    });
                    acc(a, d);
                }
                Op::Relu(a) => {
                    let mut d = g;
                    d.zip_mut_with(val(a), |d, &x| {
                        if x <= T::zero() {
                            *d = T::zero();
                        }
                    });
                    acc(a, d);
                }
                Op::RowL2Normalize(a) => {
                    let guard = T::of(NORM_GUARD);
                    let x = val(a);
                    let y = &node.value;
                    let mut d = g;
                    for ((mut drow, xrow), yrow) in d.rows_mut().into_iter().zip(x.rows()).zip(y.rows()) {
                        let norm = xrow.dot(&xrow).sqrt();
                        if norm > guard {
                            let proj = yrow.dot(&drow);
                            for (dv, &yv) in drow.iter_mut().zip(yrow.iter()) {
                                *dv = (*dv - yv * proj) / norm;
                            }
                        } else {
                            drow.mapv_inplace(|v| v / guard);
                        }
                    }
                    acc(a, d);
                }
                Op::MeanRows(a) => {
                    let (n, c) = dims(val(a));
                    let scale = T::one() / T::from_usize(n).unwrap();
                    let row = g.row(0).mapv(|x| x * scale);
                    acc(a, row.broadcast((n, c)).unwrap().to_owned());
                }
                Op::MaxRows(a) => {
                    let x = val(a);
                    let mut d = Array2::zeros(x.dim());
                    for (c, col) in x.columns().into_iter().enumerate() {
                        let mut best = 0;
                        for (r, &v) in col.iter().enumerate() {
                            if v > col[best] {
                                best = r;
                            }
                        }
                        d[[best, c]] = g[[0, c]];
                    }
                    acc(a, d);
                }
                Op::SumEachRow(a) => {
                    let shape = dims(val(a));
                    acc(a, g.broadcast(shape).unwrap().to_owned());
                }
                Op::Sum(a) => acc(a, Array2::from_elem(dims(val(a)), g[[0, 0]])),
                Op::Mean(a) => {
                    let x = val(a);
                    let n = T::from_usize(x.len()).unwrap();
                    acc(a, Array2::from_elem(x.dim(), g[[0, 0]] / n));
                }
                Op::ConcatCols(a, b) => {
                    let ca = dims(val(a)).1;
                    acc(a, g.slice(s![.., ..ca]).to_owned());
                    acc(b, g.slice(s![.., ca..]).to_owned());
                }
                Op::ConcatRows(a, b) => {
                    let ra = dims(val(a)).0;
                    acc(a, g.slice(s![..ra, ..]).to_owned());
                    acc(b, g.slice(s![ra.., ..]).to_owned());
                }
                Op::SliceRows(a, start) => {
                    let mut d = Array2::zeros(dims(val(a)));
                    let end = start + g.nrows();
                    d.slice_mut(s![start..end, ..]).assign(&g);
                    acc(a, d);
                }
                Op::SliceCols(a, start) => {
                    let mut d = Array2::zeros(dims(val(a)));
                    let end = start + g.ncols();
                    d.slice_mut(s![.., start..end]).assign(&g);
                    acc(a, d);
                }
                Op::AddRow(a, row) => {
                    acc(row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(a, g);
                }
                Op::LogNormalizeRows(a) => {
                    let y = &node.value;
                    let mut d = g;
                    for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                        let total = drow.sum();
                        for (dv, &yv) in drow.iter_mut().zip(yrow.iter()) {
                            *dv -= yv.exp() * total;
                        }
                    }
                    acc(a, d);
                }
                Op::LogNormalizeCols(a) => {
                    let y = &node.value;
                    let mut d = g;
                    for (mut dcol, ycol) in d.columns_mut().into_iter().zip(y.columns()) {
                        let total = dcol.sum();
                        for (dv, &yv) in dcol.iter_mut().zip(ycol.iter()) {
                            *dv -= yv.exp() * total;
                        }
                    }
                    acc(a, d);
                }
            }
        }
        let shapes = nodes.iter().map(|n| dims(&n.value)).collect();
        grads.resize(nodes.len(), None);
        Ok(Gradients { grads, shapes })
    }
}

fn parents<T>(op: &Op<T>) -> Vec<Var> {
    match *op {
        Op::Leaf => vec![],
        Op::Matmul(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::ConcatCols(a, b)
        | Op::ConcatRows(a, b)
        | Op::AddRow(a, b) => vec![a, b],
        Op::Transpose(a)
        | Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::Exp(a)
        | Op::Log(a)
        | Op::Relu(a)
        | Op::RowL2Normalize(a)
        | Op::MeanRows(a)
        | Op::MaxRows(a)
        | Op::SumEachRow(a)
        | Op::Sum(a)
        | Op::Mean(a)
        | Op::SliceRows(a, _)
        | Op::SliceCols(a, _)
        | Op::LogNormalizeRows(a)
        | Op::LogNormalizeCols(a) => vec![a],
    }
}

/// Numerically stable `log(sum(exp(x)))`.
pub fn log_sum_exp<T: Scalar>(xs: impl Iterator<Item = T> + Clone) -> T {
    let m = xs.clone().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).fold(T::zero(), |a, b| a + b).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_check(build: impl Fn(&Tape<f64>, Var) -> Result<Var, DiffError>, x0: Array2<f64>) -> f64 {
        let tape = Tape::new();
        let x = tape.param(x0.clone());
        let out = build(&tape, x).unwrap();
        let analytic = tape.backward(out).unwrap().wrt(x);
        let h = 1e-5;
        let eval = |xv: Array2<f64>| {
            let t = Tape::new();
            let x = t.param(xv);
            let o = build(&t, x).unwrap();
            t.scalar(o)
        };
        let mut worst: f64 = 0.0;
        for idx in 0..x0.len() {
            let (r, c) = (idx / x0.ncols(), idx % x0.ncols());
            let mut xp = x0.clone();
            xp[[r, c]] += h;
            let mut xm = x0.clone();
            xm[[r, c]] -= h;
            let numeric = (eval(xp) - eval(xm)) / (2.0 * h);
            let a = analytic[[r, c]];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn sum_of_squares_gradient() {
        let tape = Tape::new();
        let x = tape.param(array![[1.0, 2.0, 3.0]]);
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let g = tape.backward(s).unwrap().wrt(x);
        assert_eq!(g, array![[2.0, 4.0, 6.0]]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let tape = Tape::new();
        let x = tape.param(array![[0.0, -1.0, 2.0]]);
        let r = tape.relu(x).unwrap();
        let s = tape.sum(r).unwrap();
        let g = tape.backward(s).unwrap().wrt(x);
        assert_eq!(g, array![[0.0, 0.0, 1.0]]);
    }

    #[test]
    fn backward_requires_scalar() {
        let tape = Tape::new();
        let x = tape.param(array![[1.0, 2.0]]);
        assert_eq!(tape.backward(x).err(), Some(DiffError::NotScalar((1, 2))));
    }

    #[test]
    fn unreachable_param_gets_zero_gradient() {
        let tape = Tape::new();
        let x = tape.param(array![[1.0, 2.0]]);
        let y = tape.param(array![[5.0]]);
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(y), array![[0.0]]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let tape = Tape::<f64>::new();
        let a = tape.param(Array2::zeros((2, 3)));
        let b = tape.param(Array2::zeros((2, 3)));
        assert!(matches!(tape.matmul(a, b), Err(DiffError::ShapeMismatch { .. })));
        let c = tape.param(Array2::zeros((3, 2)));
        assert!(matches!(tape.add(a, c), Err(DiffError::ShapeMismatch { .. })));
    }

    #[test]
    fn non_finite_forward_aborts() {
        let tape = Tape::new();
        let x = tape.param(array![[1000.0]]);
        assert_eq!(tape.exp(x).err(), Some(DiffError::NonFiniteValue { op: "exp" }));
    }

    #[test]
    fn guarded_log_and_normalize_stay_finite() {
        let tape = Tape::new();
        let x = tape.param(array![[0.0f64, 0.0], [3.0, 4.0]]);
        let l = tape.log(x).unwrap();
        assert!(tape.value(l).iter().all(|v| v.is_finite()));
        let n = tape.row_l2_normalize(x).unwrap();
        assert_eq!(*tape.value(n), array![[0.0, 0.0], [0.6, 0.8]]);
        let s = tape.sum(n).unwrap();
        let g = tape.backward(s).unwrap().wrt(x);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn primitives_pass_finite_difference_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rand_mat = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0));
        let w = rand_mat(4, 3);
        let row = rand_mat(1, 3);
        let other = rand_mat(3, 4);
        let x0 = rand_mat(3, 4);

        type Case<'a> = Box<dyn Fn(&Tape<f64>, Var) -> Result<Var, DiffError> + 'a>;
        let cases: Vec<(&str, Case)> = vec![
            (
                "matmul",
                Box::new(|t, x| {
                    let w = t.constant(w.clone());
                    let y = t.matmul(x, w)?;
                    let y2 = t.mul(y, y)?;
                    t.sum(y2)
                }),
            ),
            (
                "transpose_sub",
                Box::new(|t, x| {
                    let o = t.constant(other.t().to_owned());
                    let xt = t.transpose(x)?;
                    let d = t.sub(xt, o)?;
                    let d2 = t.mul(d, d)?;
                    t.mean(d2)
                }),
            ),
            (
                "exp_log",
                Box::new(|t, x| {
                    let e = t.exp(x)?;
                    let e1 = t.add_scalar(e, 1.0)?;
                    let l = t.log(e1)?;
                    let s = t.scale(l, 0.3)?;
                    t.sum(s)
                }),
            ),
            (
                "normalize",
                Box::new(|t, x| {
                    let n = t.row_l2_normalize(x)?;
                    let o = t.constant(other.clone());
                    let m = t.mul(n, o)?;
                    t.sum(m)
                }),
            ),
            (
                "reductions",
                Box::new(|t, x| {
                    let m = t.mean_rows(x)?;
                    let mx = t.max_rows(x)?;
                    let a = t.mul(m, mx)?;
                    let r = t.sum_each_row(x)?;
                    let r2 = t.mul(r, r)?;
                    let s1 = t.sum(a)?;
                    let s2 = t.sum(r2)?;
                    t.add(s1, s2)
                }),
            ),
            (
                "concat_slice",
                Box::new(|t, x| {
                    let c = t.concat_cols(x, x)?;
                    let r = t.concat_rows(c, c)?;
                    let sr = t.slice_rows(r, 1, 5)?;
                    let sc = t.slice_cols(sr, 2, 7)?;
                    let q = t.mul(sc, sc)?;
                    t.sum(q)
                }),
            ),
            (
                "add_row_relu",
                Box::new(|t, x| {
                    let w = t.constant(w.clone());
                    let y = t.matmul(x, w)?;
                    let b = t.constant(row.clone());
                    let z = t.add_row(y, b)?;
                    let r = t.relu(z)?;
                    let q = t.mul(r, r)?;
                    t.sum(q)
                }),
            ),
            (
                "log_normalize",
                Box::new(|t, x| {
                    let r = t.log_normalize_rows(x)?;
                    let c = t.log_normalize_cols(r)?;
                    let e = t.exp(c)?;
                    let o = t.constant(other.clone());
                    let m = t.mul(e, o)?;
                    t.sum(m)
                }),
            ),
        ];
        for (name, build) in &cases {
            let err = fd_check(build, x0.clone());
            assert!(err < 1e-6, "{name}: rel err {err}");
        }
    }

    #[test]
    fn random_composites_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let rows = rng.random_range(1..5);
            let cols = rng.random_range(1..5);
            let x0 = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0));
            let w = Array2::from_shape_fn((cols, 3), |_| rng.random_range(-1.0..1.0));
            let build = |t: &Tape<f64>, x: Var| {
                let w = t.constant(w.clone());
                let h = t.matmul(x, w)?;
                let h = t.row_l2_normalize(h)?;
                let e = t.exp(h)?;
                let s = t.sum_each_row(e)?;
                let l = t.log(s)?;
                t.sum(l)
            };
            let err = fd_check(build, x0);
            assert!(err < 1e-4, "rel err {err}");
        }
    }

    #[test]
    fn backward_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0));
        let grad_of = |a: f64, b: f64| {
            let t = Tape::new();
            let x = t.param(x0.clone());
            let e = t.exp(x)?;
            let f = t.sum(e)?;
            let sq = t.mul(x, x)?;
            let g = t.mean(sq)?;
            let fa = t.scale(f, a)?;
            let gb = t.scale(g, b)?;
            let tot = t.add(fa, gb)?;
            Ok::<_, DiffError>(t.backward(tot)?.wrt(x))
        };
        let combined = grad_of(2.5, -0.7).unwrap();
        let f = grad_of(1.0, 0.0).unwrap();
        let g = grad_of(0.0, 1.0).unwrap();
        let expected = f * 2.5 + g * -0.7;
        for (a, b) in combined.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
