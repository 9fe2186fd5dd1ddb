//! Reverse-mode tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so the node list is already a topological order and the
//! backward sweep is a single reverse scan.

use std::borrow::Cow;

use super::tensor::{matmul_a_bt, matmul_at_b, matmul_raw};
use super::{NumericsError, Tensor};
use crate::scalar::Scalar;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { input: Var, start: usize, len: usize },
    Row { input: Var, row: usize },
    GatherRows { table: Var, rows: Vec<usize> },
    Tanh(Var),
    Sigmoid(Var),
    LogSoftmax(Var),
    Pick { input: Var, index: usize },
    Sum(Var),
}

struct Node<'a, T: Clone> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
}

/// Tape of tensor operations. Leaves may borrow parameter tensors for `'a`.
pub struct Graph<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
}

impl<'a, T: Scalar> Default for Graph<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, left: &[usize], right: &[usize]) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Leaf borrowing an existing tensor (typically a model parameter).
    pub fn param(&mut self, t: &'a Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf owning its value.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>) -> Result<Var, NumericsError> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite { op: name });
        }
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims(&self, v: Var) -> Result<(usize, usize), NumericsError> {
        self.value(v).dims()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (m, k) = self.dims(a)?;
        let (k2, n) = self.dims(b)?;
        if k != k2 {
            return Err(mismatch("matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", Tensor::matrix(m, n, out), Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("add", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.push("add", out, Op::Add(a, b))
    }

    /// `a[m x n] + bias[1 x n]`, bias repeated over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, NumericsError> {
        let (m, n) = self.dims(a)?;
        let (br, bn) = self.dims(bias)?;
        if br != 1 || bn != n {
            return Err(mismatch("add_bias", self.value(a).shape(), self.value(bias).shape()));
        }
        let b = self.value(bias).data();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n) {
            for (x, &y) in row.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.push("add_bias", Tensor::matrix(m, n, data), Op::AddBias(a, bias))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("mul", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.push("mul", out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var, NumericsError> {
        let out = self.value(a).map(|x| x * factor);
        self.push("scale", out, Op::Scale(a, factor))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = *parts.first().ok_or(NumericsError::EmptyConcat)?;
        let (rows, _) = self.dims(first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims(p)?;
            if r != rows {
                return Err(mismatch("concat_cols", self.value(first).shape(), self.value(p).shape()));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        self.push("concat_cols", Tensor::matrix(rows, total, data), Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = *parts.first().ok_or(NumericsError::EmptyConcat)?;
        let (_, cols) = self.dims(first)?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.dims(p)?;
            if c != cols {
                return Err(mismatch("concat_rows", self.value(first).shape(), self.value(p).shape()));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        self.push("concat_rows", Tensor::matrix(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let (rows, cols) = self.dims(a)?;
        if start + len > cols || len == 0 {
            return Err(NumericsError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                bound: cols,
            });
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        self.push("slice_cols", Tensor::matrix(rows, len, data), Op::SliceCols { input: a, start, len })
    }

    pub fn row(&mut self, a: Var, row: usize) -> Result<Var, NumericsError> {
        let (rows, cols) = self.dims(a)?;
        if row >= rows {
            return Err(NumericsError::IndexOutOfRange {
                op: "row",
                index: row,
                bound: rows,
            });
        }
        let data = self.value(a).data()[row * cols..(row + 1) * cols].to_vec();
        self.push("row", Tensor::matrix(1, cols, data), Op::Row { input: a, row })
    }

    /// Embedding lookup: stacks `table[rows[i]]` into a `[rows.len() x d]` matrix.
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var, NumericsError> {
        let (n, d) = self.dims(table)?;
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if r >= n {
                return Err(NumericsError::IndexOutOfRange {
                    op: "gather_rows",
                    index: r,
                    bound: n,
                });
            }
            data.extend_from_slice(&src[r * d..(r + 1) * d]);
        }
        self.push(
            "gather_rows",
            Tensor::matrix(rows.len(), d, data),
            Op::GatherRows {
                table,
                rows: rows.to_vec(),
            },
        )
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).map(T::tanh);
        self.push("tanh", out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).map(sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(a))
    }

    /// Log-softmax over all elements of `a`, shape preserved.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var, NumericsError> {
        let va = self.value(a);
        let out = Tensor::new(va.shape().to_vec(), log_softmax(va.data()))?;
        self.push("log_softmax", out, Op::LogSoftmax(a))
    }

    /// Scalar `[1 x 1]` holding element `index` (row-major) of `a`.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var, NumericsError> {
        let va = self.value(a);
        if index >= va.len() {
            return Err(NumericsError::IndexOutOfRange {
                op: "pick",
                index,
                bound: va.len(),
            });
        }
        let out = Tensor::scalar(va.data()[index]);
        self.push("pick", out, Op::Pick { input: a, index })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push("sum", out, Op::Sum(a))
    }

    /// Propagates `d loss / d node` for every node reachable from `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, NumericsError> {
        let shape = self.value(loss).shape();
        if shape.iter().product::<usize>() != 1 {
            return Err(NumericsError::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(shape, T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            if !upstream.is_finite() {
                return Err(NumericsError::NonFinite { op: "backward" });
            }
            self.backprop_node(idx, &upstream, &mut grads)?;
            grads[idx] = Some(upstream);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(
        &self,
        idx: usize,
        up: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<(), NumericsError> {
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a)?;
                let (_, n) = self.dims(*b)?;
                let da = matmul_a_bt(up.data(), self.value(*b).data(), m, n, k);
                let db = matmul_at_b(self.value(*a).data(), up.data(), m, k, n);
                self.accumulate(grads, *a, |g| add_slice(g, &da));
                self.accumulate(grads, *b, |g| add_slice(g, &db));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |g| add_slice(g, up.data()));
                self.accumulate(grads, *b, |g| add_slice(g, up.data()));
            }
            Op::AddBias(a, bias) => {
                let n = self.value(*bias).len();
                self.accumulate(grads, *a, |g| add_slice(g, up.data()));
                self.accumulate(grads, *bias, |g| {
                    for row in up.data().chunks(n) {
                        add_slice(g, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |g| {
                    for ((g, &u), &y) in g.iter_mut().zip(up.data()).zip(vb) {
                        *g += u * y;
                    }
                });
                self.accumulate(grads, *b, |g| {
                    for ((g, &u), &x) in g.iter_mut().zip(up.data()).zip(va) {
                        *g += u * x;
                    }
                });
            }
            Op::Scale(a, factor) => {
                self.accumulate(grads, *a, |g| {
                    for (g, &u) in g.iter_mut().zip(up.data()) {
                        *g += u * *factor;
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = out.dims()?;
                let mut offset = 0;
                for &p in parts {
                    let (_, w) = self.dims(p)?;
                    self.accumulate(grads, p, |g| {
                        for r in 0..rows {
                            let src = &up.data()[r * total + offset..r * total + offset + w];
                            add_slice(&mut g[r * w..(r + 1) * w], src);
                        }
                    });
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.accumulate(grads, p, |g| add_slice(g, &up.data()[offset..offset + len]));
                    offset += len;
                }
            }
            Op::SliceCols { input, start, len } => {
                let (rows, cols) = self.dims(*input)?;
                self.accumulate(grads, *input, |g| {
                    for r in 0..rows {
                        let dst = &mut g[r * cols + start..r * cols + start + len];
                        add_slice(dst, &up.data()[r * len..(r + 1) * len]);
                    }
                });
            }
            Op::Row { input, row } => {
                let (_, cols) = self.dims(*input)?;
                self.accumulate(grads, *input, |g| {
                    add_slice(&mut g[row * cols..(row + 1) * cols], up.data());
                });
            }
            Op::GatherRows { table, rows } => {
                let (_, d) = self.dims(*table)?;
                self.accumulate(grads, *table, |g| {
                    for (i, &r) in rows.iter().enumerate() {
                        add_slice(&mut g[r * d..(r + 1) * d], &up.data()[i * d..(i + 1) * d]);
                    }
                });
            }
            Op::Tanh(a) => {
                self.accumulate(grads, *a, |g| {
                    for ((g, &u), &y) in g.iter_mut().zip(up.data()).zip(out.data()) {
                        *g += u * (T::one() - y * y);
                    }
                });
            }
            Op::Sigmoid(a) => {
                self.accumulate(grads, *a, |g| {
                    for ((g, &u), &y) in g.iter_mut().zip(up.data()).zip(out.data()) {
                        *g += u * y * (T::one() - y);
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let total = up.sum();
                self.accumulate(grads, *a, |g| {
                    for ((g, &u), &y) in g.iter_mut().zip(up.data()).zip(out.data()) {
                        *g += u - y.exp() * total;
                    }
                });
            }
            Op::Pick { input, index } => {
                let u = up.data()[0];
                self.accumulate(grads, *input, |g| g[*index] += u);
            }
            Op::Sum(a) => {
                let u = up.data()[0];
                self.accumulate(grads, *a, |g| {
                    for g in g.iter_mut() {
                        *g += u;
                    }
                });
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], target: Var, f: impl FnOnce(&mut [T])) {
        let slot = &mut grads[target.0];
        let g = slot.get_or_insert_with(|| Tensor::zeros(self.value(target).shape()));
        f(g.data_mut());
    }
}

fn add_slice<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    // Split by sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn log_softmax<T: Scalar>(xs: &[T]) -> Vec<T> {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + xs.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
    xs.iter().map(|&x| x - lse).collect()
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`, or `None` if `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, zero-filled when `v` does not influence the loss.
    pub fn take_or_zeros(&mut self, v: Var, shape: &[usize]) -> Tensor<T> {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn matmul_small() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]));
        let b = g.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[11.0]);
        assert_eq!(g.value(c).shape(), &[1, 1]);
    }

    #[test]
    fn matmul_shape_mismatch_reports_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        match g.matmul(a, b) {
            Err(NumericsError::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sigmoid_and_log_softmax_values() {
        let mut g = Graph::<f64>::new();
        let z = g.constant(Tensor::row_vector(vec![0.0, 0.0]));
        let s = g.sigmoid(z).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
        let ls = g.log_softmax(z).unwrap();
        for &v in g.value(ls).data() {
            assert!(close(v, -(2f64).ln()));
        }
    }

    #[test]
    fn log_softmax_is_stable_for_large_inputs() {
        let out = log_softmax(&[1000.0f64, 0.0]);
        assert!(close(out[0], 0.0));
        assert!(out[1].is_finite());
        assert!(sigmoid(-1000.0f64) >= 0.0 && sigmoid(1000.0f64) == 1.0);
    }

    #[test]
    fn linear_loss_gradient_is_input_outer_structure() {
        // loss = sum(W x): dL/dW[i][j] = x[i] for W stored as [d_in x d_out]
        let w = Tensor::matrix(3, 2, vec![0.3, -0.1, 0.2, 0.5, -0.7, 0.4]);
        let mut g = Graph::new();
        let wv = g.param(&w);
        let x = g.constant(Tensor::row_vector(vec![1.0, 2.0, 3.0]));
        let y = g.matmul(x, wv).unwrap();
        let loss = g.sum(y).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(wv).unwrap().data(), &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let used = Tensor::row_vector(vec![1.0, 2.0]);
        let unused = Tensor::row_vector(vec![5.0]);
        let mut g = Graph::new();
        let u = g.param(&used);
        let n = g.param(&unused);
        let loss = g.sum(u).unwrap();
        let mut grads = g.backward(loss).unwrap();
        assert!(grads.get(n).is_none());
        assert_eq!(grads.take_or_zeros(n, &[1, 1]).data(), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[1, 2]));
        assert!(matches!(g.backward(a), Err(NumericsError::NonScalarLoss(_))));
    }

    #[test]
    fn non_finite_forward_is_trapped() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::scalar(f64::MAX));
        assert!(matches!(g.scale(a, 10.0), Err(NumericsError::NonFinite { .. })));
    }

    #[test]
    fn shared_input_accumulates_gradient() {
        // loss = sum(x * x) -> dL/dx = 2x
        let x = Tensor::row_vector(vec![1.5, -2.0]);
        let mut g = Graph::new();
        let xv = g.param(&x);
        let sq = g.mul(xv, xv).unwrap();
        let loss = g.sum(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(xv).unwrap().data(), &[3.0, -4.0]);
    }
}
