//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every vector-Jacobian product is itself expressed with graph operations, so
//! a gradient computed by [`Graph::grad`] can be differentiated again. The
//! gradient penalty needs this: its value depends on input-gradients of the
//! critic and training differentiates it with respect to the parameters.
//!
//! Values are computed eagerly when a node is created.

use ndarray::{Array2, Axis, Zip};

pub type Tensor = Array2<f64>;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Geometry of a square-kernel 2-D convolution over channel-last images.
///
/// Image batches are stored one sample per row with `(h, w, c)` flattening.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    fn image_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    /// Visits `(row, col, image_row, image_col)` for every in-bounds patch element.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let (oh, ow) = (self.out_h(), self.out_w());
        for n in 0..self.batch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (n * oh + oy) * ow + ox;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            let base_col = (ky * self.kernel + kx) * self.in_c;
                            let base_img = (iy as usize * self.in_w + ix as usize) * self.in_c;
                            for c in 0..self.in_c {
                                f(row, base_col + c, n, base_img + c);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNT(Var, Var),
    /// `aᵀ · b`
    MatMulTN(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Powf(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    /// `(n, m) + (1, m)` broadcast over rows.
    AddRow(Var, Var),
    /// `(1, m) -> (n, m)`
    BroadcastRows(Var),
    /// `(n, 1) -> (n, m)`
    BroadcastCols(Var),
    /// `(n, m) -> (1, m)`
    SumRows(Var),
    /// `(n, m) -> (n, 1)`
    SumCols(Var),
    /// Row-wise log-sum-exp, `(n, m) -> (n, 1)`.
    LogSumExpCols(Var),
    /// `(n, n) -> (n, 1)`
    Diag(Var),
    /// `(n, 1) -> (n, n)`
    DiagEmbed(Var),
    Reshape(Var),
    Im2Col(Var, ConvGeom),
    Col2Im(Var, ConvGeom),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// A tape of matrix-valued nodes.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.dim(), (1, 1));
        t[[0, 0]]
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Adds an input or parameter node.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulNT(a, b))
    }

    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).t().dot(self.value(b));
        self.push(v, Op::MatMulTN(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::AddScalar(a))
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let v = self.value(a).mapv(|x| x.powf(p));
        self.push(v, Op::Powf(a, p))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    /// Rectified linear unit, built as a product with a constant 0/1 mask.
    pub fn relu(&mut self, a: Var) -> Var {
        let mask = self.value(a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
        let m = self.leaf(mask);
        self.mul(a, m)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Var {
        let (_, m) = self.shape(a);
        let v = self.value(a).broadcast((n, m)).expect("row vector").to_owned();
        self.push(v, Op::BroadcastRows(a))
    }

    pub fn broadcast_cols(&mut self, a: Var, m: usize) -> Var {
        let (n, _) = self.shape(a);
        let v = self.value(a).broadcast((n, m)).expect("column vector").to_owned();
        self.push(v, Op::BroadcastCols(a))
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(v, Op::SumRows(a))
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::SumCols(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let r = self.sum_rows(a);
        self.sum_cols(r)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let s = self.sum_all(a);
        self.scale(s, 1.0 / (n * m) as f64)
    }

    pub fn logsumexp_cols(&mut self, a: Var) -> Var {
        let v = logsumexp_rows(self.value(a));
        self.push(v, Op::LogSumExpCols(a))
    }

    pub fn diag(&mut self, a: Var) -> Var {
        let v = self.value(a).diag().to_owned().insert_axis(Axis(1));
        self.push(v, Op::Diag(a))
    }

    pub fn diag_embed(&mut self, a: Var) -> Var {
        let col = self.value(a);
        let n = col.nrows();
        let mut v = Tensor::zeros((n, n));
        for i in 0..n {
            v[[i, i]] = col[[i, 0]];
        }
        self.push(v, Op::DiagEmbed(a))
    }

    pub fn reshape(&mut self, a: Var, shape: (usize, usize)) -> Var {
        let src = self.value(a);
        assert_eq!(src.len(), shape.0 * shape.1, "reshape must preserve size");
        let flat: Vec<f64> = src.iter().copied().collect();
        let v = Tensor::from_shape_vec(shape, flat).expect("reshape");
        self.push(v, Op::Reshape(a))
    }

    pub fn im2col(&mut self, a: Var, geom: ConvGeom) -> Var {
        let src = self.value(a);
        assert_eq!(src.dim(), (geom.batch, geom.image_len()), "im2col input shape");
        let rows = geom.batch * geom.out_h() * geom.out_w();
        let mut v = Tensor::zeros((rows, geom.patch_len()));
        geom.for_each_tap(|r, c, n, i| v[[r, c]] = src[[n, i]]);
        self.push(v, Op::Im2Col(a, geom))
    }

    pub fn col2im(&mut self, a: Var, geom: ConvGeom) -> Var {
        let src = self.value(a);
        let mut v = Tensor::zeros((geom.batch, geom.image_len()));
        geom.for_each_tap(|r, c, n, i| v[[n, i]] += src[[r, c]]);
        self.push(v, Op::Col2Im(a, geom))
    }

    /// Gradient of the scalar `output` with respect to each node in `wrt`.
    ///
    /// The returned gradients are graph nodes and may be differentiated again.
    /// Nodes in `wrt` that `output` does not depend on get a zero gradient.
    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Vec<Var> {
        assert_eq!(self.shape(output), (1, 1), "grad needs a scalar output");
        let top = output.0;
        let mut relevant = vec![false; top + 1];
        for w in wrt {
            if w.0 <= top {
                relevant[w.0] = true;
            }
        }
        for i in 0..=top {
            if !relevant[i] {
                relevant[i] = inputs(&self.nodes[i].op).iter().any(|v| relevant[v.0]);
            }
        }

        let mut adjoint: Vec<Option<Var>> = vec![None; top + 1];
        adjoint[top] = Some(self.leaf(Tensor::ones((1, 1))));
        for i in (0..=top).rev() {
            let Some(g) = adjoint[i] else { continue };
            if !relevant[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            for (input, contribution) in self.vjp(Var(i), &op, g, &relevant) {
                adjoint[input.0] = Some(match adjoint[input.0] {
                    Some(prev) => self.add(prev, contribution),
                    None => contribution,
                });
            }
        }

        wrt.iter()
            .map(|&w| match adjoint.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let shape = self.shape(w);
                    self.leaf(Tensor::zeros(shape))
                }
            })
            .collect()
    }

    fn vjp(&mut self, out: Var, op: &Op, g: Var, relevant: &[bool]) -> Vec<(Var, Var)> {
        let need = |v: &Var| relevant[v.0];
        let mut res = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if need(&a) {
                    res.push((a, self.matmul_nt(g, b)));
                }
                if need(&b) {
                    res.push((b, self.matmul_tn(a, g)));
                }
            }
            Op::MatMulNT(a, b) => {
                if need(&a) {
                    res.push((a, self.matmul(g, b)));
                }
                if need(&b) {
                    res.push((b, self.matmul_tn(g, a)));
                }
            }
            Op::MatMulTN(a, b) => {
                if need(&a) {
                    res.push((a, self.matmul_nt(b, g)));
                }
                if need(&b) {
                    res.push((b, self.matmul(a, g)));
                }
            }
            Op::Add(a, b) => {
                if need(&a) {
                    res.push((a, g));
                }
                if need(&b) {
                    res.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if need(&a) {
                    res.push((a, g));
                }
                if need(&b) {
                    res.push((b, self.scale(g, -1.0)));
                }
            }
            Op::Mul(a, b) => {
                if need(&a) {
                    res.push((a, self.mul(g, b)));
                }
                if need(&b) {
                    res.push((b, self.mul(g, a)));
                }
            }
            Op::Scale(a, c) => res.push((a, self.scale(g, c))),
            Op::AddScalar(a) => res.push((a, g)),
            Op::Powf(a, p) => {
                let d = if p == 1.0 {
                    g
                } else {
                    let pm1 = self.powf(a, p - 1.0);
                    let dp = self.scale(pm1, p);
                    self.mul(g, dp)
                };
                res.push((a, d));
            }
            Op::Tanh(a) => {
                let sq = self.mul(out, out);
                let neg = self.scale(sq, -1.0);
                let d = self.add_scalar(neg, 1.0);
                res.push((a, self.mul(g, d)));
            }
            Op::Sigmoid(a) => {
                let neg = self.scale(out, -1.0);
                let one_minus = self.add_scalar(neg, 1.0);
                let d = self.mul(out, one_minus);
                res.push((a, self.mul(g, d)));
            }
            Op::Softplus(a) => {
                let s = self.sigmoid(a);
                res.push((a, self.mul(g, s)));
            }
            Op::Exp(a) => res.push((a, self.mul(g, out))),
            Op::AddRow(a, row) => {
                if need(&a) {
                    res.push((a, g));
                }
                if need(&row) {
                    res.push((row, self.sum_rows(g)));
                }
            }
            Op::BroadcastRows(a) => res.push((a, self.sum_rows(g))),
            Op::BroadcastCols(a) => res.push((a, self.sum_cols(g))),
            Op::SumRows(a) => {
                let n = self.shape(a).0;
                res.push((a, self.broadcast_rows(g, n)));
            }
            Op::SumCols(a) => {
                let m = self.shape(a).1;
                res.push((a, self.broadcast_cols(g, m)));
            }
            Op::LogSumExpCols(a) => {
                let m = self.shape(a).1;
                let lse = self.broadcast_cols(out, m);
                let shifted = self.sub(a, lse);
                let softmax = self.exp(shifted);
                let gb = self.broadcast_cols(g, m);
                res.push((a, self.mul(gb, softmax)));
            }
            Op::Diag(a) => res.push((a, self.diag_embed(g))),
            Op::DiagEmbed(a) => res.push((a, self.diag(g))),
            Op::Reshape(a) => {
                let shape = self.shape(a);
                res.push((a, self.reshape(g, shape)));
            }
            Op::Im2Col(a, geom) => res.push((a, self.col2im(g, geom))),
            Op::Col2Im(a, geom) => res.push((a, self.im2col(g, geom))),
        }
        res
    }
}

fn inputs(op: &Op) -> Vec<Var> {
    match *op {
        Op::Leaf => vec![],
        Op::MatMul(a, b)
        | Op::MatMulNT(a, b)
        | Op::MatMulTN(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::AddRow(a, b) => vec![a, b],
        Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::Powf(a, _)
        | Op::Tanh(a)
        | Op::Sigmoid(a)
        | Op::Softplus(a)
        | Op::Exp(a)
        | Op::BroadcastRows(a)
        | Op::BroadcastCols(a)
        | Op::SumRows(a)
        | Op::SumCols(a)
        | Op::LogSumExpCols(a)
        | Op::Diag(a)
        | Op::DiagEmbed(a)
        | Op::Reshape(a)
        | Op::Im2Col(a, _)
        | Op::Col2Im(a, _) => vec![a],
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

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable log-sum-exp of each row, returned as a column.
pub fn logsumexp_rows(a: &Tensor) -> Tensor {
    let mut out = Tensor::zeros((a.nrows(), 1));
    Zip::from(out.rows_mut()).and(a.rows()).for_each(|mut o, row| {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let s: f64 = row.iter().map(|&x| (x - max).exp()).sum();
        o[0] = max + s.ln();
    });
    out
}
