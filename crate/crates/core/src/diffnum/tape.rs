//! Reverse-mode differentiation over dense row-major matrices.
//!
//! A [`Tape`] records every operation applied during a forward pass. Handles
//! ([`Var`]) index into the tape; values are `f64` matrices of rank at most
//! two (scalars are `1 x 1`, column vectors `n x 1`).

use ndarray::{s, Array2, Axis, Zip};

use super::NumError;

pub type Matrix = Array2<f64>;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Concat(Vec<Var>),
    Columns(Var, usize, usize),
    SumCols(Var),
    Sum(Var),
    Mean(Var),
    BernoulliLogits {
        logits: Var,
        targets: Matrix,
        floor: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Computation tape. One tape per forward/backward pass; not shared across
/// threads.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

fn dims(m: &Matrix) -> (usize, usize) {
    m.dim()
}

fn mismatch(op: &'static str, expected: (usize, usize), actual: (usize, usize)) -> NumError {
    NumError::ShapeMismatch {
        op,
        expected,
        actual,
    }
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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant input: no gradient is propagated into it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        dims(&self.nodes[v.0].value)
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// Gradient accumulated so far; zeros (same shape as the value) when the
    /// node was never reached.
    pub fn grad(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Matrix::zeros(self.nodes[v.0].value.dim()),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(mismatch("matmul", (ac, bc), (br, bc)));
        }
        let _ = ar;
        let value = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `a [n x m] + row [1 x m]`, broadcasting the row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumError> {
        let (_, ac) = self.shape(a);
        let rs = self.shape(row);
        if rs != (1, ac) {
            return Err(mismatch("add_row", (1, ac), rs));
        }
        let value = self.value(a) + self.value(row);
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(value, Op::AddRow(a, row), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch(op, sa, sb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.same_shape("add", a, b)?;
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// `a [n x m] * col [n x 1]`, scaling each row of `a` by the matching entry.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var, NumError> {
        let (ar, _) = self.shape(a);
        let cs = self.shape(col);
        if cs != (ar, 1) {
            return Err(mismatch("mul_col", (ar, 1), cs));
        }
        let value = self.value(a) * self.value(col);
        let rg = self.rg(a) || self.rg(col);
        Ok(self.push(value, Op::MulCol(a, col), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) * k;
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, k), rg)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) + k;
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.rg(a);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::exp);
        let rg = self.rg(a);
        self.push(value, Op::Exp(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x * x);
        let rg = self.rg(a);
        self.push(value, Op::Square(a), rg)
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where the bound is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).mapv(|x| x.clamp(lo, hi));
        let rg = self.rg(a);
        self.push(value, Op::Clamp(a, lo, hi), rg)
    }

    /// Column-wise concatenation of equally tall matrices.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let Some(&first) = parts.first() else {
            return Err(NumError::Empty("concat"));
        };
        let rows = self.shape(first).0;
        let mut total = 0;
        for &p in parts {
            let sh = self.shape(p);
            if sh.0 != rows {
                return Err(mismatch("concat", (rows, sh.1), sh));
            }
            total += sh.1;
        }
        let mut value = Matrix::zeros((rows, total));
        let mut at = 0;
        for &p in parts {
            let w = self.shape(p).1;
            value.slice_mut(s![.., at..at + w]).assign(self.value(p));
            at += w;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    /// Columns `start..end` of `a`.
    pub fn columns(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumError> {
        let (r, c) = self.shape(a);
        if start >= end || end > c {
            return Err(mismatch("columns", (r, end), (r, c)));
        }
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        let rg = self.rg(a);
        Ok(self.push(value, Op::Columns(a, start, end), rg))
    }

    /// Row sums: `[n x m] -> [n x 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(value, Op::SumCols(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::from_elem((1, 1), m.sum() / m.len().max(1) as f64);
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    /// Row-wise Bernoulli log-mass for logits `[n x 1]` against `{0,1}`
    /// targets, with the success probability clamped to `[floor, 1 - floor]`.
    pub fn bernoulli_logpmf_logits(
        &mut self,
        logits: Var,
        targets: &Matrix,
        floor: f64,
    ) -> Result<Var, NumError> {
        let sh = self.shape(logits);
        if sh != targets.dim() {
            return Err(mismatch("bernoulli_logpmf_logits", targets.dim(), sh));
        }
        if let Some(bad) = targets.iter().find(|&&k| k != 0.0 && k != 1.0) {
            return Err(NumError::Domain(format!("bernoulli outcome {bad} not in {{0, 1}}")));
        }
        let mut value = Matrix::zeros(sh);
        Zip::from(&mut value)
            .and(self.value(logits))
            .and(targets)
            .for_each(|out, &l, &k| {
                let p = sigmoid(l).clamp(floor, 1.0 - floor);
                *out = if k == 1.0 { p.ln() } else { (1.0 - p).ln() };
            });
        let rg = self.rg(logits);
        Ok(self.push(
            value,
            Op::BernoulliLogits {
                logits,
                targets: targets.clone(),
                floor,
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar `loss`. Gradients add onto whatever earlier
    /// calls accumulated; call [`Tape::zero_grad`] first for a fresh result.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(NumError::NonScalarBackward { shape });
        }
        let mut local: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        local[loss.0] = Some(Matrix::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            let Some(g) = local[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut local);
            match &mut self.grads[idx] {
                Some(acc) => *acc += &g,
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Matrix, local: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        let mut send = |v: Var, contrib: Matrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut local[v.0] {
                Some(acc) => *acc += &contrib,
                slot => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if self.nodes[a.0].requires_grad {
                    send(*a, g.dot(&vb.t()));
                }
                if self.nodes[b.0].requires_grad {
                    send(*b, va.t().dot(g));
                }
            }
            Op::AddRow(a, row) => {
                send(*a, g.clone());
                send(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, -g);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                send(*a, g * vb);
                send(*b, g * va);
            }
            Op::MulCol(a, col) => {
                let (va, vc) = (&self.nodes[a.0].value, &self.nodes[col.0].value);
                send(*a, g * vc);
                send(*col, (g * va).sum_axis(Axis(1)).insert_axis(Axis(1)));
            }
            Op::Scale(a, k) => send(*a, g * *k),
            Op::AddScalar(a) => send(*a, g.clone()),
            Op::LeakyRelu(a, slope) => {
                let va = &self.nodes[a.0].value;
                let mut out = g.clone();
                Zip::from(&mut out)
                    .and(va)
                    .for_each(|o, &x| *o *= if x > 0.0 { 1.0 } else { *slope });
                send(*a, out);
            }
            Op::Exp(a) => send(*a, g * &node.value),
            Op::Square(a) => send(*a, g * &self.nodes[a.0].value * 2.0),
            Op::Clamp(a, lo, hi) => {
                let va = &self.nodes[a.0].value;
                let mut out = g.clone();
                Zip::from(&mut out).and(va).for_each(|o, &x| {
                    if x < *lo || x > *hi {
                        *o = 0.0;
                    }
                });
                send(*a, out);
            }
            Op::Concat(parts) => {
                let mut at = 0;
                for p in parts {
                    let w = self.nodes[p.0].value.ncols();
                    send(*p, g.slice(s![.., at..at + w]).to_owned());
                    at += w;
                }
            }
            Op::Columns(a, start, end) => {
                let mut out = Matrix::zeros(self.nodes[a.0].value.dim());
                out.slice_mut(s![.., *start..*end]).assign(g);
                send(*a, out);
            }
            Op::SumCols(a) => {
                let sh = self.nodes[a.0].value.dim();
                let out = g
                    .broadcast(sh)
                    .expect("row-sum gradient broadcasts over columns")
                    .to_owned();
                send(*a, out);
            }
            Op::Sum(a) => {
                let sh = self.nodes[a.0].value.dim();
                send(*a, Matrix::from_elem(sh, g[[0, 0]]));
            }
            Op::Mean(a) => {
                let sh = self.nodes[a.0].value.dim();
                let n = (sh.0 * sh.1).max(1) as f64;
                send(*a, Matrix::from_elem(sh, g[[0, 0]] / n));
            }
            Op::BernoulliLogits {
                logits,
                targets,
                floor,
            } => {
                let vl = &self.nodes[logits.0].value;
                let mut out = g.clone();
                Zip::from(&mut out)
                    .and(vl)
                    .and(targets)
                    .for_each(|o, &l, &k| {
                        let p = sigmoid(l);
                        // d/dl log p = 1 - p ; d/dl log(1 - p) = -p
                        let clamped = p < *floor || p > 1.0 - *floor;
                        *o *= if clamped { 0.0 } else { k - p };
                    });
                send(*logits, out);
            }
        }
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
