//! Reverse-mode tape over dense [`Tensor`]s.
//!
//! Nodes are appended in evaluation order, so a reverse sweep over node
//! indices is a valid reverse topological order. Shapes are checked when a
//! node is recorded; nothing broadcasts implicitly.

use std::sync::Arc;

use super::tensor::{dot, matmul_into, matmul_nt_into, matmul_tn_into, Tensor};
use crate::error::{Error, Result};

/// Stabilizer used by [`Tape::l2_normalize_rows`] for zero rows.
pub const L2_EPS: f64 = 1e-12;
/// Variance floor inside [`Tape::layer_norm_rows`].
pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Value(usize);

impl Value {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Value, Value),
    Add(Value, Value),
    Sub(Value, Value),
    Mul(Value, Value),
    Scale(Value, f64),
    AddBias(Value, Value),
    MulCols(Value, Value),
    ScaleRows(Value, Value),
    ConcatCols(Value, Value),
    SliceCols(Value, usize),
    GatherRows(Value, Arc<[usize]>),
    ScatterAddRows(Value, Arc<[usize]>),
    RepeatRows(Value),
    Mode1(Value, Value),
    Gelu(Value),
    Relu(Value),
    Sigmoid(Value),
    LayerNormRows(Value, Vec<f64>),
    L2NormalizeRows(Value, Vec<f64>),
    Sum(Value),
    ColSumSquares(Value),
    Sqrt(Value),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A single-threaded computation graph with accumulated leaf gradients.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Tensor>>,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Value {
        self.nodes.push(Node { value, op, requires_grad });
        self.leaf_grads.push(None);
        Value(self.nodes.len() - 1)
    }

    fn rg(&self, v: Value) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Value {
        self.push(t, Op::Leaf, true)
    }

    /// Non-trainable leaf (inputs, fixed bases, normalization constants).
    pub fn constant(&mut self, t: Tensor) -> Value {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Value) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Value) -> bool {
        self.rg(v)
    }

    /// Accumulated gradient of a trainable leaf, if any backward pass reached it.
    pub fn grad(&self, v: Value) -> Option<&Tensor> {
        self.leaf_grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.leaf_grads {
            *g = None;
        }
    }

    fn shape_of(&self, v: Value) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn require_matrix(&self, op: &'static str, v: Value) -> Result<(usize, usize)> {
        let t = &self.nodes[v.0].value;
        if !t.is_matrix() {
            return Err(Error::shape(op, format!("expected a matrix, got {:?}", t.shape())));
        }
        Ok((t.rows(), t.cols()))
    }

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Value, b: Value) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Value, b: Value, op: Op, f: impl Fn(f64, f64) -> f64) -> Value {
        let ta = self.value(a);
        let tb = self.value(b);
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape(), data).expect("same shape");
        let rg = self.rg(a) || self.rg(b);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Result<Value> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn elementwise_mul(&mut self, a: Value, b: Value) -> Result<Value> {
        self.same_shape("elementwise_mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn scalar_mul(&mut self, a: Value, s: f64) -> Value {
        let out = self.value(a).map(|x| s * x);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// `x (n×d) + b (1×d)` applied to every row.
    pub fn add_bias(&mut self, x: Value, b: Value) -> Result<Value> {
        let (n, d) = self.require_matrix("add_bias", x)?;
        if self.shape_of(b) != (1, d) || !self.value(b).is_matrix() {
            return Err(Error::shape("add_bias", format!("bias {:?} for width {d}", self.value(b).shape())));
        }
        let mut out = self.value(x).clone();
        let bias = self.value(b).data().to_vec();
        for i in 0..n {
            for (o, bv) in out.row_mut(i).iter_mut().zip(&bias) {
                *o += bv;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddBias(x, b), rg))
    }

    /// `x (n×d) ⊙ g (1×d)` applied to every row.
    pub fn mul_cols(&mut self, x: Value, g: Value) -> Result<Value> {
        let (n, d) = self.require_matrix("mul_cols", x)?;
        if self.shape_of(g) != (1, d) || !self.value(g).is_matrix() {
            return Err(Error::shape("mul_cols", format!("gain {:?} for width {d}", self.value(g).shape())));
        }
        let mut out = self.value(x).clone();
        let gain = self.value(g).data().to_vec();
        for i in 0..n {
            for (o, gv) in out.row_mut(i).iter_mut().zip(&gain) {
                *o *= gv;
            }
        }
        let rg = self.rg(x) || self.rg(g);
        Ok(self.push(out, Op::MulCols(x, g), rg))
    }

    /// Row `i` of `x (n×d)` multiplied by `s[i]` where `s` is n×1.
    pub fn scale_rows(&mut self, x: Value, s: Value) -> Result<Value> {
        let (n, _) = self.require_matrix("scale_rows", x)?;
        if self.shape_of(s) != (n, 1) {
            return Err(Error::shape("scale_rows", format!("scales {:?} for {n} rows", self.value(s).shape())));
        }
        let mut out = self.value(x).clone();
        let scales = self.value(s).data().to_vec();
        for (i, sv) in scales.iter().enumerate() {
            for o in out.row_mut(i) {
                *o *= sv;
            }
        }
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(out, Op::ScaleRows(x, s), rg))
    }

    pub fn concat_cols(&mut self, a: Value, b: Value) -> Result<Value> {
        let (na, pa) = self.require_matrix("concat_cols", a)?;
        let (nb, pb) = self.require_matrix("concat_cols", b)?;
        if na != nb {
            return Err(Error::shape("concat_cols", format!("{na} rows vs {nb} rows")));
        }
        let mut data = Vec::with_capacity(na * (pa + pb));
        for i in 0..na {
            data.extend_from_slice(self.value(a).row(i));
            data.extend_from_slice(self.value(b).row(i));
        }
        let out = Tensor::new(&[na, pa + pb], data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    pub fn slice_cols(&mut self, a: Value, start: usize, width: usize) -> Result<Value> {
        let (n, p) = self.require_matrix("slice_cols", a)?;
        if width == 0 || start + width > p {
            return Err(Error::shape("slice_cols", format!("columns {start}..{} of {p}", start + width)));
        }
        let mut data = Vec::with_capacity(n * width);
        for i in 0..n {
            data.extend_from_slice(&self.value(a).row(i)[start..start + width]);
        }
        let out = Tensor::new(&[n, width], data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    /// Output row `e` is row `idx[e]` of `v`.
    pub fn gather_rows(&mut self, v: Value, idx: Arc<[usize]>) -> Result<Value> {
        let (n, _) = self.require_matrix("gather_rows", v)?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::shape("gather_rows", format!("index {bad} out of {n} rows")));
        }
        let out = self.value(v).select_rows(&idx);
        let rg = self.rg(v);
        Ok(self.push(out, Op::GatherRows(v, idx), rg))
    }

    /// Output row `t` is the sum of rows `e` of `c` with `targets[e] == t`.
    pub fn scatter_add_rows(&mut self, c: Value, targets: Arc<[usize]>, n: usize) -> Result<Value> {
        let (e, d) = self.require_matrix("scatter_add_rows", c)?;
        if targets.len() != e {
            return Err(Error::shape("scatter_add_rows", format!("{} targets for {e} rows", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
            return Err(Error::shape("scatter_add_rows", format!("target {bad} out of {n} rows")));
        }
        let mut out = Tensor::zeros(&[n, d]);
        let src = self.value(c);
        for (k, &t) in targets.iter().enumerate() {
            let row = src.row(k);
            for (o, v) in out.data_mut()[t * d..(t + 1) * d].iter_mut().zip(row) {
                *o += v;
            }
        }
        let rg = self.rg(c);
        Ok(self.push(out, Op::ScatterAddRows(c, targets), rg))
    }

    /// Stack `n` copies of a 1×d row.
    pub fn repeat_rows(&mut self, a: Value, n: usize) -> Result<Value> {
        let (r, d) = self.require_matrix("repeat_rows", a)?;
        if r != 1 {
            return Err(Error::shape("repeat_rows", format!("expected one row, got {r}")));
        }
        let row = self.value(a).data().to_vec();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(&row);
        }
        let out = Tensor::new(&[n, d], data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::RepeatRows(a), rg))
    }

    /// Per-mode linear map: output row `j` is `c[j,:] · K[j]` for
    /// `K` of shape m×d×d and `c` of shape m×d.
    pub fn mode1_product(&mut self, k: Value, c: Value) -> Result<Value> {
        let ks = self.value(k).shape().to_vec();
        let (m, d) = self.require_matrix("mode1_product", c)?;
        if ks.len() != 3 || ks[0] != m || ks[1] != d || ks[2] != d {
            return Err(Error::shape("mode1_product", format!("kernel {ks:?} vs coefficients [{m}, {d}]")));
        }
        let kd = self.value(k).data();
        let cd = self.value(c).data();
        let mut out = Tensor::zeros(&[m, d]);
        for j in 0..m {
            let slice = &kd[j * d * d..(j + 1) * d * d];
            matmul_into(&cd[j * d..(j + 1) * d], slice, &mut out.data_mut()[j * d..(j + 1) * d], 1, d, d);
        }
        let rg = self.rg(k) || self.rg(c);
        Ok(self.push(out, Op::Mode1(k, c), rg))
    }

    pub fn gelu(&mut self, a: Value) -> Value {
        let out = self.value(a).map(gelu);
        let rg = self.rg(a);
        self.push(out, Op::Gelu(a), rg)
    }

    pub fn relu(&mut self, a: Value) -> Value {
        let out = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Value) -> Value {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    /// Zero-mean, unit-variance rows (no affine part).
    pub fn layer_norm_rows(&mut self, a: Value) -> Result<Value> {
        let (n, d) = self.require_matrix("layer_norm_rows", a)?;
        let mut out = self.value(a).clone();
        let mut inv_std = Vec::with_capacity(n);
        for i in 0..n {
            let row = out.row_mut(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * r;
            }
            inv_std.push(r);
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::LayerNormRows(a, inv_std), rg))
    }

    /// Rows scaled to unit Euclidean norm; rows with norm below [`L2_EPS`]
    /// are divided by the stabilizer instead.
    pub fn l2_normalize_rows(&mut self, a: Value) -> Result<Value> {
        let (n, _) = self.require_matrix("l2_normalize_rows", a)?;
        let mut out = self.value(a).clone();
        let mut norms = Vec::with_capacity(n);
        for i in 0..n {
            let row = out.row_mut(i);
            let norm = dot(row, row).sqrt();
            let denom = norm.max(L2_EPS);
            for x in row.iter_mut() {
                *x /= denom;
            }
            norms.push(norm);
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::L2NormalizeRows(a, norms), rg))
    }

    pub fn sum(&mut self, a: Value) -> Value {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    /// 1×C row of per-column sums of squares.
    pub fn col_sum_squares(&mut self, a: Value) -> Result<Value> {
        let (n, c) = self.require_matrix("col_sum_squares", a)?;
        let t = self.value(a);
        let mut out = vec![0.0; c];
        for i in 0..n {
            for (o, x) in out.iter_mut().zip(t.row(i)) {
                *o += x * x;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::row_vector(&out), Op::ColSumSquares(a), rg))
    }

    pub fn sqrt(&mut self, a: Value) -> Value {
        let out = self.value(a).map(f64::sqrt);
        let rg = self.rg(a);
        self.push(out, Op::Sqrt(a), rg)
    }

    /// Populate gradients of every trainable leaf reachable from `root`.
    /// Gradients add onto whatever previous passes left behind.
    pub fn backward(&mut self, root: Value) -> Result<()> {
        let rt = self.value(root);
        if rt.len() != 1 {
            return Err(Error::InvalidUsage(format!(
                "backward needs a scalar root, got shape {:?}",
                rt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::new(rt.shape(), vec![1.0]).expect("scalar"));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match &mut self.leaf_grads[i] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let wants = |v: Value| nodes[v.0].requires_grad;
        let mut acc = |v: Value, f: &dyn Fn(&mut Tensor)| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(nodes[v.0].value.shape()));
            f(slot);
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (r, k, c) = (ta.rows(), ta.cols(), tb.cols());
                if wants(*a) {
                    acc(*a, &|s| matmul_nt_into(gd, tb.data(), s.data_mut(), r, c, k));
                }
                if wants(*b) {
                    acc(*b, &|s| matmul_tn_into(ta.data(), gd, s.data_mut(), r, k, c));
                }
            }
            Op::Add(a, b) => {
                acc(*a, &|s| s.add_assign(g));
                acc(*b, &|s| s.add_assign(g));
            }
            Op::Sub(a, b) => {
                acc(*a, &|s| s.add_assign(g));
                acc(*b, &|s| {
                    for (o, x) in s.data_mut().iter_mut().zip(gd) {
                        *o -= x;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                acc(*a, &|s| {
                    for ((o, x), y) in s.data_mut().iter_mut().zip(gd).zip(tb.data()) {
                        *o += x * y;
                    }
                });
                acc(*b, &|s| {
                    for ((o, x), y) in s.data_mut().iter_mut().zip(gd).zip(ta.data()) {
                        *o += x * y;
                    }
                });
            }
            Op::Scale(a, k) => acc(*a, &|s| {
                for (o, x) in s.data_mut().iter_mut().zip(gd) {
                    *o += k * x;
                }
            }),
            Op::AddBias(x, b) => {
                acc(*x, &|s| s.add_assign(g));
                let d = g.cols();
                acc(*b, &|s| {
                    for row in gd.chunks(d) {
                        for (o, v) in s.data_mut().iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                });
            }
            Op::MulCols(x, gain) => {
                let (tx, tg) = (&nodes[x.0].value, &nodes[gain.0].value);
                let d = g.cols();
                acc(*x, &|s| {
                    for (srow, grow) in s.data_mut().chunks_mut(d).zip(gd.chunks(d)) {
                        for ((o, gv), w) in srow.iter_mut().zip(grow).zip(tg.data()) {
                            *o += gv * w;
                        }
                    }
                });
                acc(*gain, &|s| {
                    for (xrow, grow) in tx.data().chunks(d).zip(gd.chunks(d)) {
                        for ((o, gv), xv) in s.data_mut().iter_mut().zip(grow).zip(xrow) {
                            *o += gv * xv;
                        }
                    }
                });
            }
            Op::ScaleRows(x, sc) => {
                let (tx, ts) = (&nodes[x.0].value, &nodes[sc.0].value);
                let d = g.cols();
                acc(*x, &|s| {
                    for ((srow, grow), k) in s.data_mut().chunks_mut(d).zip(gd.chunks(d)).zip(ts.data()) {
                        for (o, gv) in srow.iter_mut().zip(grow) {
                            *o += k * gv;
                        }
                    }
                });
                acc(*sc, &|s| {
                    for ((o, grow), xrow) in s.data_mut().iter_mut().zip(gd.chunks(d)).zip(tx.data().chunks(d)) {
                        *o += dot(grow, xrow);
                    }
                });
            }
            Op::ConcatCols(a, b) => {
                let pa = nodes[a.0].value.cols();
                let d = g.cols();
                acc(*a, &|s| {
                    for (srow, grow) in s.data_mut().chunks_mut(pa).zip(gd.chunks(d)) {
                        for (o, v) in srow.iter_mut().zip(&grow[..pa]) {
                            *o += v;
                        }
                    }
                });
                let pb = d - pa;
                acc(*b, &|s| {
                    for (srow, grow) in s.data_mut().chunks_mut(pb).zip(gd.chunks(d)) {
                        for (o, v) in srow.iter_mut().zip(&grow[pa..]) {
                            *o += v;
                        }
                    }
                });
            }
            Op::SliceCols(a, start) => {
                let p = nodes[a.0].value.cols();
                let w = g.cols();
                acc(*a, &|s| {
                    for (srow, grow) in s.data_mut().chunks_mut(p).zip(gd.chunks(w)) {
                        for (o, v) in srow[*start..*start + w].iter_mut().zip(grow) {
                            *o += v;
                        }
                    }
                });
            }
            Op::GatherRows(v, idx) => {
                let d = g.cols();
                acc(*v, &|s| {
                    let sd = s.data_mut();
                    for (e, &r) in idx.iter().enumerate() {
                        for (o, x) in sd[r * d..(r + 1) * d].iter_mut().zip(&gd[e * d..(e + 1) * d]) {
                            *o += x;
                        }
                    }
                });
            }
            Op::ScatterAddRows(c, targets) => {
                let d = g.cols();
                acc(*c, &|s| {
                    let sd = s.data_mut();
                    for (e, &t) in targets.iter().enumerate() {
                        for (o, x) in sd[e * d..(e + 1) * d].iter_mut().zip(&gd[t * d..(t + 1) * d]) {
                            *o += x;
                        }
                    }
                });
            }
            Op::RepeatRows(a) => {
                let d = g.cols();
                acc(*a, &|s| {
                    for row in gd.chunks(d) {
                        for (o, v) in s.data_mut().iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                });
            }
            Op::Mode1(k, c) => {
                let (tk, tc) = (&nodes[k.0].value, &nodes[c.0].value);
                let (m, d) = (tc.rows(), tc.cols());
                acc(*c, &|s| {
                    let sd = s.data_mut();
                    for j in 0..m {
                        let slice = &tk.data()[j * d * d..(j + 1) * d * d];
                        matmul_nt_into(&gd[j * d..(j + 1) * d], slice, &mut sd[j * d..(j + 1) * d], 1, d, d);
                    }
                });
                acc(*k, &|s| {
                    let sd = s.data_mut();
                    for j in 0..m {
                        matmul_tn_into(
                            &tc.data()[j * d..(j + 1) * d],
                            &gd[j * d..(j + 1) * d],
                            &mut sd[j * d * d..(j + 1) * d * d],
                            1,
                            d,
                            d,
                        );
                    }
                });
            }
            Op::Gelu(a) => {
                let ta = &nodes[a.0].value;
                acc(*a, &|s| {
                    for ((o, gv), x) in s.data_mut().iter_mut().zip(gd).zip(ta.data()) {
                        *o += gv * gelu_grad(*x);
                    }
                });
            }
            Op::Relu(a) => {
                let ta = &nodes[a.0].value;
                acc(*a, &|s| {
                    for ((o, gv), x) in s.data_mut().iter_mut().zip(gd).zip(ta.data()) {
                        if *x > 0.0 {
                            *o += gv;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                acc(*a, &|s| {
                    for ((o, gv), yv) in s.data_mut().iter_mut().zip(gd).zip(y.data()) {
                        *o += gv * yv * (1.0 - yv);
                    }
                });
            }
            Op::LayerNormRows(a, inv_std) => {
                let y = &node.value;
                let d = y.cols();
                acc(*a, &|s| {
                    for (r, ((srow, grow), yrow)) in
                        s.data_mut().chunks_mut(d).zip(gd.chunks(d)).zip(y.data().chunks(d)).enumerate()
                    {
                        let mean_g = grow.iter().sum::<f64>() / d as f64;
                        let mean_gy = dot(grow, yrow) / d as f64;
                        for ((o, gv), yv) in srow.iter_mut().zip(grow).zip(yrow) {
                            *o += inv_std[r] * (gv - mean_g - yv * mean_gy);
                        }
                    }
                });
            }
            Op::L2NormalizeRows(a, norms) => {
                let y = &node.value;
                let d = y.cols();
                acc(*a, &|s| {
                    for (r, ((srow, grow), yrow)) in
                        s.data_mut().chunks_mut(d).zip(gd.chunks(d)).zip(y.data().chunks(d)).enumerate()
                    {
                        if norms[r] > L2_EPS {
                            let proj = dot(yrow, grow);
                            for ((o, gv), yv) in srow.iter_mut().zip(grow).zip(yrow) {
                                *o += (gv - yv * proj) / norms[r];
                            }
                        } else {
                            for (o, gv) in srow.iter_mut().zip(grow) {
                                *o += gv / L2_EPS;
                            }
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let g0 = gd[0];
                acc(*a, &|s| {
                    for o in s.data_mut() {
                        *o += g0;
                    }
                });
            }
            Op::ColSumSquares(a) => {
                let ta = &nodes[a.0].value;
                let c = ta.cols();
                acc(*a, &|s| {
                    for (srow, xrow) in s.data_mut().chunks_mut(c).zip(ta.data().chunks(c)) {
                        for ((o, x), gv) in srow.iter_mut().zip(xrow).zip(gd) {
                            *o += 2.0 * x * gv;
                        }
                    }
                });
            }
            Op::Sqrt(a) => {
                let y = &node.value;
                acc(*a, &|s| {
                    for ((o, gv), yv) in s.data_mut().iter_mut().zip(gd).zip(y.data()) {
                        *o += 0.5 * gv / yv;
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_fixed_points() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row_vector(&[0.0, -1.0]));
        let g = t.gelu(x);
        let s = t.sigmoid(x);
        let r = t.relu(x);
        assert_eq!(t.value(g).data()[0], 0.0);
        assert_eq!(t.value(s).data()[0], 0.5);
        assert_eq!(t.value(r).data()[1], 0.0);
    }

    #[test]
    fn mode1_identity_kernel_is_pass_through() {
        let (m, d) = (3, 4);
        let mut kern = Tensor::zeros(&[m, d, d]);
        for j in 0..m {
            for a in 0..d {
                kern.data_mut()[j * d * d + a * d + a] = 1.0;
            }
        }
        let c = Tensor::new(&[m, d], (0..m * d).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let mut t = Tape::new();
        let kv = t.constant(kern);
        let cv = t.constant(c.clone());
        let out = t.mode1_product(kv, cv).unwrap();
        assert_eq!(t.value(out), &c);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut t = Tape::new();
        let x = t.param(Tensor::zeros(&[2, 2]));
        assert!(matches!(t.backward(x), Err(Error::InvalidUsage(_))));
    }

    #[test]
    fn linear_sum_gradient_is_outer_product() {
        // root = sum(W x) with W: 2×3, x: 3×1 -> dW[i][j] = x[j]
        let mut t = Tape::new();
        let w = t.param(Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 2.0]]));
        let x = t.constant(Tensor::column_vector(&[0.2, -0.7, 1.5]));
        let y = t.matmul(w, x).unwrap();
        let root = t.sum(y);
        t.backward(root).unwrap();
        let g = t.grad(w).unwrap();
        assert_eq!(g.row(0), &[0.2, -0.7, 1.5]);
        assert_eq!(g.row(1), &[0.2, -0.7, 1.5]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut t = Tape::new();
        let w = t.param(Tensor::row_vector(&[1.5, -2.0]));
        let sq = t.elementwise_mul(w, w).unwrap();
        let root = t.sum(sq);
        t.backward(root).unwrap();
        let first = t.grad(w).unwrap().clone();
        t.backward(root).unwrap();
        let second = t.grad(w).unwrap();
        assert_eq!(first.data(), &[3.0, -4.0]);
        assert_eq!(second.data(), &[6.0, -8.0]);
        t.zero_grad();
        assert!(t.grad(w).is_none());
    }

    #[test]
    fn shape_errors_at_construction() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[3, 2]));
        assert!(t.add(a, b).is_err());
        let bias = t.constant(Tensor::zeros(&[1, 2]));
        assert!(t.add_bias(a, bias).is_err());
        assert!(t.gather_rows(a, Arc::from(vec![0, 5])).is_err());
    }

    #[test]
    fn l2_normalize_zero_row_stays_zero() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0]]));
        let y = t.l2_normalize_rows(a).unwrap();
        assert_eq!(t.value(y).row(0), &[0.6, 0.8]);
        assert_eq!(t.value(y).row(1), &[0.0, 0.0]);
    }
}
