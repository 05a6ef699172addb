//! A matrix-valued reverse-mode tape.
//!
//! Nodes are recorded in evaluation order, so reverse index order is a valid
//! reverse topological order. Parameter nodes copy their values out of a
//! [`ParameterStore`] and remember the flat offset their gradient belongs to.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};

use super::params::{ParamId, ParameterStore};
use super::ApproxError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Output row `r` is `Σ w · input[k]` over the pairs `(k, w)` in `rows[r]`.
pub type RowMix = Arc<Vec<Vec<(usize, f64)>>>;

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Clamp(Var, f64, f64),
    ConcatCols(Vec<Var>),
    Mix(Var, RowMix),
    SegmentLogSoftmax(Var, Arc<Vec<usize>>),
    RowSelect(Var, Var, Arc<Vec<bool>>),
    SumCols(Var),
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<usize, Var>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
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

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// A constant input; rejects non-finite entries.
    pub fn input(&mut self, x: Array2<f64>) -> Result<Var, ApproxError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ApproxError::NonFinite("input"));
        }
        Ok(self.constant(x))
    }

    pub fn constant(&mut self, x: Array2<f64>) -> Var {
        self.push(x, Op::Constant)
    }

    /// The parameter matrix `id`, recorded once per tape.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        let slice = store.slice(id);
        if let Some(&v) = self.params.get(&slice.offset) {
            return v;
        }
        let v = self.push(store.matrix(id), Op::Param(slice.offset));
        self.params.insert(slice.offset, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `x + 1 bᵀ` for a `1 × k` row `b`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let v = self.value(x) + self.value(b);
        self.push(v, Op::AddBias(x, b))
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

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(x).mapv(|a| scale * a + shift);
        self.push(v, Op::Affine(x, scale))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|a| a.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    /// `ln σ(x)`, computed without overflow.
    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(log_sigmoid);
        self.push(v, Op::LogSigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(f64::exp);
        self.push(v, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(f64::ln);
        self.push(v, Op::Ln(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(x).mapv(|a| a.clamp(lo, hi));
        self.push(v, Op::Clamp(x, lo, hi))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    /// Weighted row mixing; covers gathers, segment sums and means.
    pub fn mix(&mut self, x: Var, rows: RowMix) -> Var {
        let src = self.value(x);
        let mut out = Array2::zeros((rows.len(), src.ncols()));
        for (mut dst, terms) in out.rows_mut().into_iter().zip(rows.iter()) {
            for &(k, w) in terms {
                dst.scaled_add(w, &src.row(k));
            }
        }
        self.push(out, Op::Mix(x, rows))
    }

    /// Row `r` of the result is row `idx[r]` of `x`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Var {
        let rows = idx.iter().map(|&k| vec![(k, 1.0)]).collect();
        self.mix(x, Arc::new(rows))
    }

    /// Log-softmax of a column vector within segments
    /// `offsets[s]..offsets[s + 1]`.
    pub fn segment_log_softmax(&mut self, x: Var, offsets: Arc<Vec<usize>>) -> Var {
        let src = self.value(x);
        let mut out = Array2::zeros(src.raw_dim());
        for w in offsets.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a == b {
                continue;
            }
            let seg = src.slice(s![a..b, 0]);
            let m = seg.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = m + seg.mapv(|v| (v - m).exp()).sum().ln();
            for k in a..b {
                out[[k, 0]] = src[[k, 0]] - lse;
            }
        }
        self.push(out, Op::SegmentLogSoftmax(x, offsets))
    }

    /// Rows of `a` where `mask` is set, rows of `b` elsewhere.
    pub fn row_select(&mut self, a: Var, b: Var, mask: Arc<Vec<bool>>) -> Var {
        let mut out = self.value(b).clone();
        let src = self.value(a);
        for (k, &m) in mask.iter().enumerate() {
            if m {
                out.row_mut(k).assign(&src.row(k));
            }
        }
        self.push(out, Op::RowSelect(a, b, mask))
    }

    /// `m × k → m × 1`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let v = self.value(x).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::SumCols(x))
    }

    /// Sum of every entry as a `1 × 1` matrix.
    pub fn sum(&mut self, x: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(x).sum());
        self.push(v, Op::Sum(x))
    }

    /// `Σ x ⊙ c` for a constant `c`.
    pub fn weighted_sum(&mut self, x: Var, c: Array2<f64>) -> Var {
        let c = self.constant(c);
        let p = self.mul(x, c);
        self.sum(p)
    }

    /// Gradients of the scalar `out` with respect to every parameter, laid
    /// out like the store's flat vector.
    pub fn backward(&self, out: Var, n_params: usize) -> Vec<f64> {
        let mut flat = vec![0.0; n_params];
        self.backward_into(out, Array2::ones((1, 1)), &mut flat);
        flat
    }

    /// Adjoint of every node for the scalar `out`, plus parameter gradients.
    pub fn gradients(&self, out: Var, n_params: usize) -> Gradients {
        let mut params = vec![0.0; n_params];
        let nodes = self.backward_into(out, Array2::ones((1, 1)), &mut params);
        Gradients { params, nodes }
    }

    /// Reverse sweep from `out` seeded with `seed`; parameter gradients are
    /// added into `flat` and the per-node adjoints are returned.
    pub fn backward_into(&self, out: Var, seed: Array2<f64>, flat: &mut [f64]) -> Vec<Option<Array2<f64>>> {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(seed);
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(offset) => {
                    // An empty `flat` asks for node adjoints only.
                    if let Some(dst) = flat.get_mut(*offset..*offset + g.len()) {
                        dst.iter_mut().zip(g.iter()).for_each(|(d, v)| *d += v);
                    }
                }
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, g.dot(&self.value(*b).t()));
                    acc(&mut grads, *b, self.value(*a).t().dot(&g));
                }
                Op::AddBias(x, b) => {
                    acc(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *x, g.clone());
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, -&g);
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, &g * self.value(*b));
                    acc(&mut grads, *b, &g * self.value(*a));
                }
                Op::Affine(x, scale) => acc(&mut grads, *x, &g * *scale),
                Op::Relu(x) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx)
                        .and(self.value(*x))
                        .for_each(|g, &v| if v <= 0.0 { *g = 0.0 });
                    acc(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => acc(&mut grads, *x, &g * &node.value.mapv(|s| s * (1.0 - s))),
                Op::LogSigmoid(x) => acc(&mut grads, *x, &g * &self.value(*x).mapv(|v| sigmoid(-v))),
                Op::Tanh(x) => acc(&mut grads, *x, &g * &node.value.mapv(|t| 1.0 - t * t)),
                Op::Exp(x) => acc(&mut grads, *x, &g * &node.value),
                Op::Ln(x) => acc(&mut grads, *x, &g / self.value(*x)),
                Op::Clamp(x, lo, hi) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx).and(self.value(*x)).for_each(|g, &v| {
                        if v < *lo || v > *hi {
                            *g = 0.0;
                        }
                    });
                    acc(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut col = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        acc(&mut grads, p, g.slice(s![.., col..col + w]).to_owned());
                        col += w;
                    }
                }
                Op::Mix(x, rows) => {
                    let mut gx = Array2::zeros(self.value(*x).raw_dim());
                    for (r, terms) in rows.iter().enumerate() {
                        for &(k, w) in terms {
                            gx.row_mut(k).scaled_add(w, &g.row(r));
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::SegmentLogSoftmax(x, offsets) => {
                    let mut gx = g.clone();
                    for w in offsets.windows(2) {
                        let total: f64 = (w[0]..w[1]).map(|k| g[[k, 0]]).sum();
                        for k in w[0]..w[1] {
                            gx[[k, 0]] -= node.value[[k, 0]].exp() * total;
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::RowSelect(a, b, mask) => {
                    let mut ga = g.clone();
                    let mut gb = g.clone();
                    for (k, &m) in mask.iter().enumerate() {
                        if m {
                            gb.row_mut(k).fill(0.0);
                        } else {
                            ga.row_mut(k).fill(0.0);
                        }
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::SumCols(x) => {
                    let shape = self.value(*x).raw_dim();
                    acc(&mut grads, *x, g.broadcast(shape).expect("column broadcast").to_owned());
                }
                Op::Sum(x) => {
                    acc(&mut grads, *x, Array2::from_elem(self.value(*x).raw_dim(), g[[0, 0]]));
                }
            }
            grads[idx] = Some(g);
        }
        grads
    }
}

/// Parameter gradients and per-node adjoints from [`Tape::gradients`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    nodes: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Array2<f64>> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }
}

fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot => *slot = Some(g),
    }
}
