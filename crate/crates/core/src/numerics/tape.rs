//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive in evaluation order, so node ids are a
//! topological order by construction. [`Tape::backward`] replays the record
//! in reverse and returns the adjoint of every node.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::softmax::{check_tau, softmax_unchecked};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f64 },
    AddCol(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Square(Var),
    Sum(Var),
    RowSum(Var),
    ScaleCols(Var, Var),
    ScaleBy(Var, Var),
    Slice { x: Var, r0: usize, c0: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Softmax { x: Var, tau: f64 },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine { .. } => "affine",
            Op::AddCol(..) => "add_col",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Exp(_) => "exp",
            Op::Square(_) => "square",
            Op::Sum(_) => "sum",
            Op::RowSum(_) => "row_sum",
            Op::ScaleCols(..) => "scale_cols",
            Op::ScaleBy(..) => "scale_by",
            Op::Slice { .. } => "slice",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::Reshape(_) => "reshape",
            Op::Softmax { .. } => "softmax",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node of a tape after a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Matrix>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> &Matrix {
        &self.adjoints[v.0]
    }

    pub fn len(&self) -> usize {
        self.adjoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjoints.is_empty()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Reads a `1x1` node as a scalar.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert!(m.is_scalar());
        m.get(0, 0)
    }

    /// Records an input (parameter, data or constant).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Matrix, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric {
                location: format!("tape node {} ({})", self.nodes.len(), op.name()),
                message: "operation produced a non-finite value".into(),
            });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transpose();
        self.push(value, Op::Transpose(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        self.push(value, Op::Sub(a, b))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        self.push(value, Op::Mul(a, b))
    }

    /// `scale * x + shift`, element-wise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let value = self.value(x).map(|v| scale * v + shift);
        self.push(value, Op::Affine { x, scale })
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.affine(x, factor, 0.0)
    }

    /// `1 - x`, element-wise.
    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        self.affine(x, -1.0, 1.0)
    }

    /// Adds the column vector `v` to every column of `m`.
    pub fn add_col(&mut self, m: Var, v: Var) -> Result<Var> {
        let (mm, vv) = (self.value(m), self.value(v));
        if vv.cols() != 1 || vv.rows() != mm.rows() {
            return Err(Error::dim("add_col", mm.shape(), vv.shape()));
        }
        let value = Matrix::from_fn(mm.rows(), mm.cols(), |i, j| mm.get(i, j) + vv.get(i, 0));
        self.push(value, Op::AddCol(m, v))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(f64::tanh);
        self.push(value, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(f64::exp);
        self.push(value, Op::Exp(x))
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v * v);
        self.push(value, Op::Square(x))
    }

    /// Sum of all entries, as a `1x1` node.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Matrix::filled(1, 1, self.value(x).sum());
        self.push(value, Op::Sum(x))
    }

    /// `x * 1`: sums each row over the columns, giving a column vector.
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let m = self.value(x);
        let value = Matrix::from_fn(m.rows(), 1, |i, _| m.row(i).iter().sum());
        self.push(value, Op::RowSum(x))
    }

    /// Scales column `j` of `m` by entry `j` of `factors` (any shape with
    /// `m.cols()` entries).
    pub fn scale_cols(&mut self, m: Var, factors: Var) -> Result<Var> {
        let (mm, f) = (self.value(m), self.value(factors));
        if f.len() != mm.cols() {
            return Err(Error::dim("scale_cols", mm.shape(), f.shape()));
        }
        let fs = f.as_slice();
        let value = Matrix::from_fn(mm.rows(), mm.cols(), |i, j| fs[j] * mm.get(i, j));
        self.push(value, Op::ScaleCols(m, factors))
    }

    /// Scales `m` by the `1x1` node `s`.
    pub fn scale_by(&mut self, m: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if !sv.is_scalar() {
            return Err(Error::dim("scale_by", self.shape(m), sv.shape()));
        }
        let factor = sv.get(0, 0);
        let value = self.value(m).map(|v| factor * v);
        self.push(value, Op::ScaleBy(m, s))
    }

    /// Copies the `rows x cols` block at `(r0, c0)`.
    pub fn slice(&mut self, x: Var, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(x).block(r0, c0, rows, cols)?;
        self.push(value, Op::Slice { x, r0, c0 })
    }

    pub fn column(&mut self, x: Var, c: usize) -> Result<Var> {
        let rows = self.shape(x).0;
        self.slice(x, 0, c, rows, 1)
    }

    /// Picks entry `i` (row-major) of `x` as a `1x1` node.
    pub fn entry(&mut self, x: Var, i: usize) -> Result<Var> {
        let cols = self.shape(x).1;
        self.slice(x, i / cols, i % cols, 1, 1)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Argument("concat_cols of nothing".into()))?;
        let rows = self.shape(first).0;
        let mut cols = 0;
        for p in parts {
            if self.shape(*p).0 != rows {
                return Err(Error::dim("concat_cols", self.shape(first), self.shape(*p)));
            }
            cols += self.shape(*p).1;
        }
        let mut value = Matrix::zeros(rows, cols);
        let mut c0 = 0;
        for p in parts {
            let m = self.value(*p);
            for i in 0..rows {
                for j in 0..m.cols() {
                    value.set(i, c0 + j, m.get(i, j));
                }
            }
            c0 += m.cols();
        }
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Argument("concat_rows of nothing".into()))?;
        let cols = self.shape(first).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let m = self.value(*p);
            if m.cols() != cols {
                return Err(Error::dim("concat_rows", self.shape(first), m.shape()));
            }
            rows += m.rows();
            data.extend_from_slice(m.as_slice());
        }
        let value = Matrix::from_vec(rows, cols, data)?;
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    /// Reinterprets the row-major data of `x` with a new shape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let m = self.value(x);
        if rows * cols != m.len() {
            return Err(Error::dim("reshape", m.shape(), (rows, cols)));
        }
        let value = Matrix::from_vec(rows, cols, m.as_slice().to_vec())?;
        self.push(value, Op::Reshape(x))
    }

    /// Temperature softmax over all entries of `x`, keeping its shape.
    pub fn softmax(&mut self, x: Var, tau: f64) -> Result<Var> {
        check_tau(tau)?;
        let m = self.value(x);
        let value = Matrix::from_vec(m.rows(), m.cols(), softmax_unchecked(m.as_slice(), tau))?;
        self.push(value, Op::Softmax { x, tau })
    }

    /// Reverse pass from a scalar `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Argument(format!(
                "backward needs a 1x1 loss node, got {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::ones(1, 1));

        for idx in (0..=loss.0).rev() {
            let Some(dy) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let da = dy.matmul(&bv.transpose())?;
                    let db = av.transpose().matmul(&dy)?;
                    accumulate(&mut adj, *a, &da);
                    accumulate(&mut adj, *b, &db);
                }
                Op::Transpose(x) => accumulate(&mut adj, *x, &dy.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, &dy);
                    accumulate(&mut adj, *b, &dy);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, &dy);
                    accumulate(&mut adj, *b, &dy.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    let da = dy.hadamard(self.value(*b))?;
                    let db = dy.hadamard(self.value(*a))?;
                    accumulate(&mut adj, *a, &da);
                    accumulate(&mut adj, *b, &db);
                }
                Op::Affine { x, scale } => accumulate(&mut adj, *x, &dy.scale(*scale)),
                Op::AddCol(m, v) => {
                    accumulate(&mut adj, *m, &dy);
                    let dv = Matrix::from_fn(dy.rows(), 1, |i, _| dy.row(i).iter().sum());
                    accumulate(&mut adj, *v, &dv);
                }
                Op::Tanh(x) => {
                    let dx = zip_map(&dy, y, |g, t| g * (1.0 - t * t));
                    accumulate(&mut adj, *x, &dx);
                }
                Op::Sigmoid(x) => {
                    let dx = zip_map(&dy, y, |g, s| g * s * (1.0 - s));
                    accumulate(&mut adj, *x, &dx);
                }
                Op::Exp(x) => {
                    let dx = zip_map(&dy, y, |g, e| g * e);
                    accumulate(&mut adj, *x, &dx);
                }
                Op::Square(x) => {
                    let dx = zip_map(&dy, self.value(*x), |g, v| 2.0 * g * v);
                    accumulate(&mut adj, *x, &dx);
                }
                Op::Sum(x) => {
                    let (r, c) = self.shape(*x);
                    accumulate(&mut adj, *x, &Matrix::filled(r, c, dy.get(0, 0)));
                }
                Op::RowSum(x) => {
                    let (r, c) = self.shape(*x);
                    let dx = Matrix::from_fn(r, c, |i, _| dy.get(i, 0));
                    accumulate(&mut adj, *x, &dx);
                }
                Op::ScaleCols(m, f) => {
                    let (mv, fv) = (self.value(*m), self.value(*f));
                    let fs = fv.as_slice();
                    let dm = Matrix::from_fn(mv.rows(), mv.cols(), |i, j| dy.get(i, j) * fs[j]);
                    let df: Vec<f64> = (0..mv.cols())
                        .map(|j| (0..mv.rows()).map(|i| dy.get(i, j) * mv.get(i, j)).sum())
                        .collect();
                    let df = Matrix::from_vec(fv.rows(), fv.cols(), df)?;
                    accumulate(&mut adj, *m, &dm);
                    accumulate(&mut adj, *f, &df);
                }
                Op::ScaleBy(m, s) => {
                    let (mv, sv) = (self.value(*m), self.value(*s).get(0, 0));
                    let ds = dy.as_slice().iter().zip(mv.as_slice()).map(|(g, v)| g * v).sum();
                    accumulate(&mut adj, *m, &dy.scale(sv));
                    accumulate(&mut adj, *s, &Matrix::filled(1, 1, ds));
                }
                Op::Slice { x, r0, c0 } => {
                    let (r, c) = self.shape(*x);
                    let (r0, c0) = (*r0, *c0);
                    let slot = adj[x.0].get_or_insert_with(|| Matrix::zeros(r, c));
                    for i in 0..dy.rows() {
                        for j in 0..dy.cols() {
                            let cur = slot.get(r0 + i, c0 + j);
                            slot.set(r0 + i, c0 + j, cur + dy.get(i, j));
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for p in parts {
                        let (r, c) = self.shape(*p);
                        accumulate(&mut adj, *p, &dy.block(0, c0, r, c)?);
                        c0 += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut r0 = 0;
                    for p in parts {
                        let (r, c) = self.shape(*p);
                        accumulate(&mut adj, *p, &dy.block(r0, 0, r, c)?);
                        r0 += r;
                    }
                }
                Op::Reshape(x) => {
                    let (r, c) = self.shape(*x);
                    accumulate(&mut adj, *x, &Matrix::from_vec(r, c, dy.as_slice().to_vec())?);
                }
                Op::Softmax { x, tau } => {
                    let dot: f64 = dy.as_slice().iter().zip(y.as_slice()).map(|(g, w)| g * w).sum();
                    let dx = zip_map(&dy, y, |g, w| w * (g - dot) / tau);
                    accumulate(&mut adj, *x, &dx);
                }
            }
            adj[idx] = Some(dy);
        }

        let adjoints = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                adj.get_mut(i)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Matrix::zeros(n.value.rows(), n.value.cols()))
            })
            .collect();
        Ok(Gradients { adjoints })
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, g: &Matrix) {
    match &mut adj[v.0] {
        Some(acc) => acc.add_assign(g),
        slot @ None => *slot = Some(g.clone()),
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let (sa, sb) = (a.as_slice(), b.as_slice());
    Matrix::from_fn(a.rows(), a.cols(), |i, j| {
        let k = i * a.cols() + j;
        f(sa[k], sb[k])
    })
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
