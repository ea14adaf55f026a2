//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Values are computed eagerly when an operation is recorded. Calling
//! [`Tape::backward`] on a scalar node walks the tape in reverse and
//! accumulates adjoints for every node that depends on a [`Tape::var`] leaf.
//! Constants and [`Var::stop_gradient`] outputs receive nothing.
//!
//! ```
//! use magnet::autodiff::Tape;
//! use magnet::Matrix;
//!
//! let tape = Tape::new();
//! let x = tape.var(Matrix::filled(1, 1, 3.0));
//! let y = x.mul(x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(y.scalar(), 9.0);
//! assert_eq!(grads.wrt(x)[(0, 0)], 6.0);
//! ```

use crate::linalg::Matrix;
use std::cell::RefCell;
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    #[error("{0}")]
    DomainError(String),
    #[error("backward needs a 1x1 root, got {0:?}")]
    NonScalarRoot((usize, usize)),
}

type Result<T> = std::result::Result<T, AutodiffError>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    StopGradient,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    Transpose(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Relu(usize),
    Sin(usize),
    Cos(usize),
    Powf(usize, f64),
    Sum(usize),
    Mean(usize),
    SumRows(usize),
    SumCols(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    MulCol(usize, usize),
    Reshape(usize),
    ScatterSymmetric { src: usize, pairs: Rc<[(usize, usize)]> },
}

struct Node {
    value: Rc<Matrix>,
    op: Op,
    needs_grad: bool,
}

/// Records operations for one reverse pass. Not `Sync`; use one tape per
/// thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("idx", &self.idx).field("value", &self.value()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op, needs_grad });
        Var { tape: self, idx: nodes.len() - 1 }
    }

    /// Differentiable leaf.
    pub fn var(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives an adjoint.
    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Matrix::filled(1, 1, value))
    }

    fn value_rc(&self, idx: usize) -> Rc<Matrix> {
        Rc::clone(&self.nodes.borrow()[idx].value)
    }

    fn needs_grad(&self, idx: usize) -> bool {
        self.nodes.borrow()[idx].needs_grad
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root_shape = nodes[root.idx].value.shape();
        if root_shape != (1, 1) {
            return Err(AutodiffError::NonScalarRoot(root_shape));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; nodes.len()];
        adj[root.idx] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=root.idx).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                adj[i] = Some(g);
                continue;
            }
            let y = &*node.value;
            let val = |j: usize| &*nodes[j].value;
            let mut push = |j: usize, contrib: Matrix| {
                if !nodes[j].needs_grad {
                    return;
                }
                match &mut adj[j] {
                    Some(acc) => acc.add_scaled(&contrib, 1.0),
                    slot @ None => *slot = Some(contrib),
                }
            };
            match node.op {
                Op::Leaf | Op::StopGradient => {}
                Op::Add(a, b) => {
                    push(a, g.clone());
                    push(b, g);
                }
                Op::Sub(a, b) => {
                    push(a, g.clone());
                    push(b, g.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    push(a, g.zip_map(val(b), |g, v| g * v));
                    push(b, g.zip_map(val(a), |g, v| g * v));
                }
                Op::Scale(a, c) => push(a, g.scale(c)),
                Op::AddScalar(a) => push(a, g),
                Op::MatMul(a, b) => {
                    if nodes[a].needs_grad {
                        push(a, g.matmul(&val(b).transpose()));
                    }
                    if nodes[b].needs_grad {
                        push(b, val(a).transpose().matmul(&g));
                    }
                }
                Op::Transpose(a) => push(a, g.transpose()),
                Op::Sigmoid(a) => push(a, g.zip_map(y, |g, s| g * s * (1.0 - s))),
                Op::Exp(a) => push(a, g.zip_map(y, |g, e| g * e)),
                Op::Log(a) => push(a, g.zip_map(val(a), |g, v| g / v)),
                Op::Relu(a) => push(a, g.zip_map(val(a), |g, v| if v > 0.0 { g } else { 0.0 })),
                Op::Sin(a) => push(a, g.zip_map(val(a), |g, v| g * v.cos())),
                Op::Cos(a) => push(a, g.zip_map(val(a), |g, v| -g * v.sin())),
                Op::Powf(a, p) => push(a, g.zip_map(val(a), |g, v| g * p * v.powf(p - 1.0))),
                Op::Sum(a) => {
                    let (r, c) = val(a).shape();
                    push(a, Matrix::filled(r, c, g[(0, 0)]));
                }
                Op::Mean(a) => {
                    let (r, c) = val(a).shape();
                    push(a, Matrix::filled(r, c, g[(0, 0)] / (r * c) as f64));
                }
                Op::SumRows(a) => {
                    let (r, c) = val(a).shape();
                    push(a, Matrix::from_fn(r, c, |i, _| g[(i, 0)]));
                }
                Op::SumCols(a) => {
                    let (r, c) = val(a).shape();
                    push(a, Matrix::from_fn(r, c, |_, j| g[(0, j)]));
                }
                Op::SoftmaxRows(a) => {
                    let mut out = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(g, s)| g * s).sum();
                        for (o, (gv, s)) in out.row_mut(r).iter_mut().zip(g.row(r).iter().zip(y.row(r))) {
                            *o = s * (gv - dot);
                        }
                    }
                    push(a, out);
                }
                Op::LogSoftmaxRows(a) => {
                    let mut out = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let total: f64 = g.row(r).iter().sum();
                        for (o, (gv, ly)) in out.row_mut(r).iter_mut().zip(g.row(r).iter().zip(y.row(r))) {
                            *o = gv - ly.exp() * total;
                        }
                    }
                    push(a, out);
                }
                Op::AddRow(a, row) => {
                    push(row, Matrix::row_vector(&g.column_sums()));
                    push(a, g);
                }
                Op::MulRow(a, row) => {
                    let rv = val(row);
                    let av = val(a);
                    let mut grow = vec![0.0; rv.cols()];
                    for r in 0..g.rows() {
                        for (j, gr) in grow.iter_mut().enumerate() {
                            *gr += g[(r, j)] * av[(r, j)];
                        }
                    }
                    push(a, Matrix::from_fn(g.rows(), g.cols(), |r, j| g[(r, j)] * rv[(0, j)]));
                    push(row, Matrix::row_vector(&grow));
                }
                Op::MulCol(a, col) => {
                    let cv = val(col);
                    let av = val(a);
                    let gcol: Vec<f64> =
                        (0..g.rows()).map(|r| g.row(r).iter().zip(av.row(r)).map(|(g, v)| g * v).sum()).collect();
                    push(a, Matrix::from_fn(g.rows(), g.cols(), |r, j| g[(r, j)] * cv[(r, 0)]));
                    push(col, Matrix::column_vector(&gcol));
                }
                Op::Reshape(a) => {
                    let (r, c) = val(a).shape();
                    push(a, Matrix::from_vec(r, c, g.into_vec()));
                }
                Op::ScatterSymmetric { src, ref pairs } => {
                    let (r, c) = val(src).shape();
                    let data = pairs.iter().map(|&(i, j)| g[(i, j)] + g[(j, i)]).collect();
                    push(src, Matrix::from_vec(r, c, data));
                }
            }
        }
        Ok(Gradients { adjoints: adj })
    }
}

/// Adjoints of the leaves reached by one reverse pass.
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` if `v` does not influence the
    /// root (or is a constant).
    pub fn get(&self, v: Var<'_>) -> Option<&Matrix> {
        self.adjoints.get(v.idx).and_then(Option::as_ref)
    }

    /// Gradient with respect to `v`, zero-filled if it was not reached.
    pub fn wrt(&self, v: Var<'_>) -> Matrix {
        self.get(v).cloned().unwrap_or_else(|| {
            let (r, c) = v.shape();
            Matrix::zeros(r, c)
        })
    }
}

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(AutodiffError::ShapeMismatch { op, lhs: a.shape(), rhs: b.shape() });
    }
    Ok(())
}

fn softmax_rows(m: &Matrix, log: bool) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        let row = m.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (o, v) in out.row_mut(r).iter_mut().zip(row) {
            *o = if log { v - lse } else { (v - lse).exp() };
        }
    }
    out
}

// Binary ops return `Result` because shapes are checked, so they cannot be
// the std operator traits.
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn value(&self) -> Matrix {
        (*self.tape.value_rc(self.idx)).clone()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.idx].value.shape()
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self) -> f64 {
        let v = self.tape.value_rc(self.idx);
        assert_eq!(v.shape(), (1, 1), "scalar() on a non-scalar node");
        v[(0, 0)]
    }

    fn unary(self, value: Matrix, op: Op) -> Var<'t> {
        let ng = self.tape.needs_grad(self.idx);
        self.tape.push(value, op, ng)
    }

    fn binary(self, other: Var<'t>, value: Matrix, op: Op) -> Var<'t> {
        let ng = self.tape.needs_grad(self.idx) || self.tape.needs_grad(other.idx);
        self.tape.push(value, op, ng)
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.tape.value_rc(self.idx), self.tape.value_rc(other.idx));
        same_shape("add", &a, &b)?;
        Ok(self.binary(other, a.zip_map(&b, |x, y| x + y), Op::Add(self.idx, other.idx)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.tape.value_rc(self.idx), self.tape.value_rc(other.idx));
        same_shape("sub", &a, &b)?;
        Ok(self.binary(other, a.zip_map(&b, |x, y| x - y), Op::Sub(self.idx, other.idx)))
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.tape.value_rc(self.idx), self.tape.value_rc(other.idx));
        same_shape("mul", &a, &b)?;
        Ok(self.binary(other, a.zip_map(&b, |x, y| x * y), Op::Mul(self.idx, other.idx)))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.unary(a.scale(c), Op::Scale(self.idx, c))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.unary(a.map(|v| v + c), Op::AddScalar(self.idx))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.tape.value_rc(self.idx), self.tape.value_rc(other.idx));
        if a.cols() != b.rows() {
            return Err(AutodiffError::ShapeMismatch { op: "matmul", lhs: a.shape(), rhs: b.shape() });
        }
        Ok(self.binary(other, a.matmul(&b), Op::MatMul(self.idx, other.idx)))
    }

    pub fn transpose(self) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.unary(a.transpose(), Op::Transpose(self.idx))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.unary(a.map(crate::linalg::sigmoid), Op::Sigmoid(self.idx))
    }

    pub fn exp(self) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.unary(a.map(f64::exp), Op::Exp(self.idx))
    }

    pub fn ln(self) -> Result<Var<'t>> {
        let a = self.tape.value_rc(self.idx);
        if let Some(bad) = a.as_slice().iter().find(|v| !(**v > 0.0)) {
            return Err(AutodiffError::DomainError(format!("log of non-positive value {bad}")));
        }
        Ok(self.unary(a.map(f64::ln), Op::Log(self.idx)))
    }

    pub fn relu(self) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.unary(a.map(|v| v.max(0.0)), Op::Relu(self.idx))
    }

    pub fn sin(self) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.unary(a.map(f64::sin), Op::Sin(self.idx))
    }

    pub fn cos(self) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.unary(a.map(f64::cos), Op::Cos(self.idx))
    }

    /// Elementwise `x^p`. Non-integer exponents need positive inputs.
    pub fn powf(self, p: f64) -> Result<Var<'t>> {
        let a = self.tape.value_rc(self.idx);
        if p.fract() != 0.0 {
            if let Some(bad) = a.as_slice().iter().find(|v| !(**v > 0.0)) {
                return Err(AutodiffError::DomainError(format!("non-integer power {p} of non-positive value {bad}")));
            }
        }
        Ok(self.unary(a.map(|v| v.powf(p)), Op::Powf(self.idx, p)))
    }

    pub fn sum(self) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.unary(Matrix::filled(1, 1, a.sum()), Op::Sum(self.idx))
    }

    pub fn mean(self) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.unary(Matrix::filled(1, 1, a.sum() / a.len() as f64), Op::Mean(self.idx))
    }

    /// Row sums as a column vector.
    pub fn sum_rows(self) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        let sums: Vec<f64> = (0..a.rows()).map(|r| a.row(r).iter().sum()).collect();
        self.unary(Matrix::column_vector(&sums), Op::SumRows(self.idx))
    }

    /// Column sums as a row vector.
    pub fn sum_cols(self) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.unary(Matrix::row_vector(&a.column_sums()), Op::SumCols(self.idx))
    }

    /// Row-wise softmax.
    pub fn softmax(self) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.unary(softmax_rows(&a, false), Op::SoftmaxRows(self.idx))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(self) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.unary(softmax_rows(&a, true), Op::LogSoftmaxRows(self.idx))
    }

    /// Same value, no adjoint flows through.
    pub fn stop_gradient(self) -> Var<'t> {
        let a = self.tape.value_rc(self.idx);
        self.tape.push((*a).clone(), Op::StopGradient, false)
    }

    /// Adds a `1 × c` row vector to every row.
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>> {
        let (a, r) = (self.tape.value_rc(self.idx), self.tape.value_rc(row.idx));
        if r.rows() != 1 || r.cols() != a.cols() {
            return Err(AutodiffError::ShapeMismatch { op: "add_row", lhs: a.shape(), rhs: r.shape() });
        }
        let v = Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] + r[(0, j)]);
        Ok(self.binary(row, v, Op::AddRow(self.idx, row.idx)))
    }

    /// Multiplies every row elementwise by a `1 × c` row vector.
    pub fn mul_row(self, row: Var<'t>) -> Result<Var<'t>> {
        let (a, r) = (self.tape.value_rc(self.idx), self.tape.value_rc(row.idx));
        if r.rows() != 1 || r.cols() != a.cols() {
            return Err(AutodiffError::ShapeMismatch { op: "mul_row", lhs: a.shape(), rhs: r.shape() });
        }
        let v = Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] * r[(0, j)]);
        Ok(self.binary(row, v, Op::MulRow(self.idx, row.idx)))
    }

    /// Multiplies every column elementwise by an `r × 1` column vector.
    pub fn mul_col(self, col: Var<'t>) -> Result<Var<'t>> {
        let (a, c) = (self.tape.value_rc(self.idx), self.tape.value_rc(col.idx));
        if c.cols() != 1 || c.rows() != a.rows() {
            return Err(AutodiffError::ShapeMismatch { op: "mul_col", lhs: a.shape(), rhs: c.shape() });
        }
        let v = Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] * c[(i, 0)]);
        Ok(self.binary(col, v, Op::MulCol(self.idx, col.idx)))
    }

    /// Row-major reshape.
    pub fn reshape(self, rows: usize, cols: usize) -> Result<Var<'t>> {
        let a = self.tape.value_rc(self.idx);
        if rows * cols != a.len() {
            return Err(AutodiffError::ShapeMismatch { op: "reshape", lhs: a.shape(), rhs: (rows, cols) });
        }
        Ok(self.unary(Matrix::from_vec(rows, cols, a.as_slice().to_vec()), Op::Reshape(self.idx)))
    }

    /// Places value `e` of this vector at `(i,j)` and `(j,i)` of an `n × n`
    /// zero matrix, for the `e`-th pair.
    pub fn scatter_symmetric(self, n: usize, pairs: Rc<[(usize, usize)]>) -> Result<Var<'t>> {
        let a = self.tape.value_rc(self.idx);
        if a.len() != pairs.len() || (a.rows() != 1 && a.cols() != 1) {
            return Err(AutodiffError::ShapeMismatch {
                op: "scatter_symmetric",
                lhs: a.shape(),
                rhs: (pairs.len(), 1),
            });
        }
        let mut m = Matrix::zeros(n, n);
        for (&(i, j), &v) in pairs.iter().zip(a.as_slice()) {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        Ok(self.unary(m, Op::ScatterSymmetric { src: self.idx, pairs }))
    }
}

/// Largest relative discrepancy between reverse-mode gradients and central
/// differences `(f(p+h) − f(p−h)) / 2h`, over every coordinate of every
/// parameter. The relative error of one coordinate is
/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(f: F, params: &[Matrix], h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.var(p.clone())).collect();
    let root = f(&tape, &vars)?;
    let grads = tape.backward(root)?;
    let analytic: Vec<Matrix> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let eval = |ps: &[Matrix]| -> Result<f64> {
        let t = Tape::new();
        let vs: Vec<Var<'_>> = ps.iter().map(|p| t.var(p.clone())).collect();
        Ok(f(&t, &vs)?.scalar())
    };

    let mut worst = 0.0_f64;
    let mut work: Vec<Matrix> = params.to_vec();
    for (k, p) in params.iter().enumerate() {
        for c in 0..p.len() {
            let orig = p.as_slice()[c];
            work[k].as_mut_slice()[c] = orig + h;
            let fp = eval(&work)?;
            work[k].as_mut_slice()[c] = orig - h;
            let fm = eval(&work)?;
            work[k].as_mut_slice()[c] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[k].as_slice()[c];
            let rel = (a - numeric).abs() / f64::max(1e-8, a.abs() + numeric.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
