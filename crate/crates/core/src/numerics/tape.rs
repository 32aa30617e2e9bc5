//! Reverse-mode tape.
//!
//! Values are pushed in evaluation order, so a single reverse sweep over the
//! node list visits every node after all of its consumers.

use super::tensor::{gemm, Mat, Tensor};
use super::NumericsError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Transpose(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    Relu(Var),
    Gelu(Var),
    Exp(Var),
    Ln(Var),
    Clip { x: Var, lo: f64, hi: f64 },
    Minimum(Var, Var),
    Attention { q: Var, k: Var, v: Var, probs: Tensor, scale: f64 },
    SegmentAttention { q: Var, k: Var, v: Var, lens: Vec<usize>, probs: Vec<Tensor>, scale: f64 },
    Embedding { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Tensor },
    Bce { p: Var, y: Tensor },
    Sum(Var),
    Mean(Var),
    RowSums(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Pick { x: Var, idx: Vec<usize> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Transpose(..) => "transpose",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Relu(..) => "relu",
            Op::Gelu(..) => "gelu",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "ln",
            Op::Clip { .. } => "clip",
            Op::Minimum(..) => "minimum",
            Op::Attention { .. } => "attention",
            Op::SegmentAttention { .. } => "segment_attention",
            Op::Embedding { .. } => "embedding",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Bce { .. } => "bce",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::RowSums(..) => "row_sums",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::Pick { .. } => "pick",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Layer-norm epsilon added to the variance.
pub const LAYER_NORM_EPS: f64 = 1e-5;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `v`, or zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let [r, c] = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

/// Records a computation so gradients can be pulled back from a scalar.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumericsError {
    NumericsError::shape(op, a.shape(), b.shape())
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

    /// A differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Copies `v`'s value into a new constant leaf, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var, NumericsError> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite { op: op.name() });
        }
        let requires_grad = self.needs(inputs);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta, tb));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    fn row_broadcast_check(&self, op: &'static str, a: Var, row: Var) -> Result<(), NumericsError> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(shape_err(op, ta, tr));
        }
        Ok(())
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        self.row_broadcast_check("add_row", a, row)?;
        let mut out = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..out.rows() {
            for (o, b) in out.row_slice_mut(i).iter_mut().zip(&r) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row), &[a, row])
    }

    /// Multiplies every row of `a` elementwise by a `1 x n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        self.row_broadcast_check("mul_row", a, row)?;
        let mut out = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..out.rows() {
            for (o, g) in out.row_slice_mut(i).iter_mut().zip(&r) {
                *o *= g;
            }
        }
        self.push(out, Op::MulRow(a, row), &[a, row])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NumericsError> {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Result<Var, NumericsError> {
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::Offset(a), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a), &[a])
    }

    /// Row-wise softmax, shifted by the row maximum before exponentiation.
    pub fn softmax(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = softmax_rows(self.value(a));
        self.push(out, Op::Softmax(a), &[a])
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var, NumericsError> {
        let x = self.value(a);
        let mut out = x.clone();
        for i in 0..x.rows() {
            let row = out.row_slice_mut(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        self.push(out, Op::LogSoftmax(a), &[a])
    }

    /// Per-row standardization (no affine part), `eps` = [`LAYER_NORM_EPS`].
    pub fn layer_norm(&mut self, a: Var) -> Result<Var, NumericsError> {
        let x = self.value(a);
        let n = x.cols() as f64;
        let mut out = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let row = out.row_slice_mut(i);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * s;
            }
            inv_std.push(s);
        }
        self.push(out, Op::LayerNorm { x: a, inv_std }, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a), &[a])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).map(|x| {
            let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
            0.5 * x * (1.0 + u.tanh())
        });
        self.push(out, Op::Gelu(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a), &[a])
    }

    pub fn ln(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).map(f64::ln);
        self.push(out, Op::Ln(a), &[a])
    }

    /// Clamps to `[lo, hi]`; gradient passes only inside the closed interval.
    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, NumericsError> {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clip { x: a, lo, hi }, &[a])
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("minimum", a, b)?;
        let out = self.value(a).zip_map(self.value(b), f64::min);
        self.push(out, Op::Minimum(a, b), &[a, b])
    }

    /// `softmax(q k^T / sqrt(d_k) + mask) v`, with `mask` an additive `n x m` matrix.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        mask: Option<&Tensor>,
    ) -> Result<Var, NumericsError> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        if tq.cols() != tk.cols() {
            return Err(shape_err("attention", tq, tk));
        }
        if tk.rows() != tv.rows() {
            return Err(shape_err("attention", tk, tv));
        }
        let scale = 1.0 / (tq.cols() as f64).sqrt();
        let mut scores = Tensor::zeros(tq.rows(), tk.rows());
        gemm(Mat::plain(tq), Mat::transposed(tk), &mut scores, scale, 0.0);
        if let Some(m) = mask {
            if m.shape() != scores.shape() {
                return Err(NumericsError::shape("attention", m.shape(), scores.shape()));
            }
            scores.add_assign(m);
        }
        let probs = softmax_rows(&scores);
        let out = probs.matmul(tv)?;
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                probs,
                scale,
            },
            &[q, k, v],
        )
    }

    /// Self-attention restricted to consecutive row blocks of lengths `lens`:
    /// rows of one block attend only to rows of the same block. Equivalent to
    /// [`Tape::attention`] with a block-diagonal mask, without the quadratic cost.
    pub fn segment_attention(&mut self, q: Var, k: Var, v: Var, lens: &[usize]) -> Result<Var, NumericsError> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        if tq.shape() != tk.shape() {
            return Err(shape_err("segment_attention", tq, tk));
        }
        if tk.rows() != tv.rows() {
            return Err(shape_err("segment_attention", tk, tv));
        }
        let total: usize = lens.iter().sum();
        if total != tq.rows() || lens.contains(&0) {
            return Err(NumericsError::shape("segment_attention", tq.shape(), [total, lens.len()]));
        }
        let scale = 1.0 / (tq.cols() as f64).sqrt();
        let mut out = Tensor::zeros(tq.rows(), tv.cols());
        let mut probs = Vec::with_capacity(lens.len());
        let mut start = 0;
        for &m in lens {
            let (bq, bk, bv) = (rows_block(tq, start, m), rows_block(tk, start, m), rows_block(tv, start, m));
            let mut scores = Tensor::zeros(m, m);
            gemm(Mat::plain(&bq), Mat::transposed(&bk), &mut scores, scale, 0.0);
            let p = softmax_rows(&scores);
            let o = p.matmul(&bv)?;
            write_rows(&mut out, start, &o);
            probs.push(p);
            start += m;
        }
        self.push(
            out,
            Op::SegmentAttention {
                q,
                k,
                v,
                lens: lens.to_vec(),
                probs,
                scale,
            },
            &[q, k, v],
        )
    }

    /// Gathers rows of `table`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumericsError> {
        let t = self.value(table);
        let mut out = Tensor::zeros(ids.len(), t.cols());
        for (i, &id) in ids.iter().enumerate() {
            if id >= t.rows() {
                return Err(NumericsError::Index {
                    op: "embedding",
                    index: id,
                    bound: t.rows(),
                });
            }
            out.row_slice_mut(i).copy_from_slice(t.row_slice(id));
        }
        self.push(
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    /// Sum over rows of `-log softmax(logits)[target]`; returns `1 x 1`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, NumericsError> {
        let x = self.value(logits);
        if targets.len() != x.rows() {
            return Err(NumericsError::shape(
                "cross_entropy",
                x.shape(),
                [targets.len(), 1],
            ));
        }
        let probs = softmax_rows(x);
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= x.cols() {
                return Err(NumericsError::Index {
                    op: "cross_entropy",
                    index: t,
                    bound: x.cols(),
                });
            }
            let row = x.row_slice(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[t];
        }
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// Summed binary cross-entropy of probabilities `p` against targets `y`.
    pub fn bce(&mut self, p: Var, y: &Tensor) -> Result<Var, NumericsError> {
        let tp = self.value(p);
        if tp.shape() != y.shape() {
            return Err(shape_err("bce", tp, y));
        }
        let loss: f64 = tp
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
            .sum();
        self.push(Tensor::scalar(loss), Op::Bce { p, y: y.clone() }, &[p])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(NumericsError::Empty { op: "mean" });
        }
        let s = t.sum() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// `n x m -> n x 1` row sums.
    pub fn row_sums(&mut self, a: Var) -> Result<Var, NumericsError> {
        let t = self.value(a);
        let data = (0..t.rows()).map(|i| t.row_slice(i).iter().sum()).collect();
        let out = Tensor::new(t.rows(), 1, data)?;
        self.push(out, Op::RowSums(a), &[a])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if start + len > t.cols() {
            return Err(NumericsError::Index {
                op: "slice_cols",
                index: start + len,
                bound: t.cols(),
            });
        }
        let mut out = Tensor::zeros(t.rows(), len);
        for i in 0..t.rows() {
            out.row_slice_mut(i)
                .copy_from_slice(&t.row_slice(i)[start..start + len]);
        }
        self.push(out, Op::SliceCols { x: a, start }, &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = parts.first().ok_or(NumericsError::Empty { op: "concat_cols" })?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(shape_err("concat_cols", self.value(*first), t));
            }
            cols += t.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            for i in 0..rows {
                out.row_slice_mut(i)[off..off + t.cols()].copy_from_slice(t.row_slice(i));
            }
            off += t.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// `out[i] = a[i, idx[i]]`, shape `n x 1`.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if idx.len() != t.rows() {
            return Err(NumericsError::shape("pick", t.shape(), [idx.len(), 1]));
        }
        let mut data = Vec::with_capacity(idx.len());
        for (i, &j) in idx.iter().enumerate() {
            if j >= t.cols() {
                return Err(NumericsError::Index {
                    op: "pick",
                    index: j,
                    bound: t.cols(),
                });
            }
            data.push(t.get(i, j));
        }
        let out = Tensor::new(idx.len(), 1, data)?;
        self.push(
            out,
            Op::Pick {
                x: a,
                idx: idx.to_vec(),
            },
            &[a],
        )
    }

    /// Pulls gradients back from the `1 x 1` node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads, NumericsError> {
        let lt = self.value(loss);
        if lt.shape() != [1, 1] {
            return Err(NumericsError::NonScalarLoss { shape: lt.shape() });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        for (g, node) in grads.iter().zip(&self.nodes) {
            if let Some(g) = g {
                if !g.is_finite() {
                    return Err(NumericsError::NonFinite {
                        op: node.op.name(),
                    });
                }
            }
        }
        Ok(Grads {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].requires_grad {
                    let mut da = Tensor::zeros(ta.rows(), ta.cols());
                    gemm(Mat::plain(g), Mat::transposed(tb), &mut da, 1.0, 0.0);
                    self.accumulate(grads, *a, da);
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = Tensor::zeros(tb.rows(), tb.cols());
                    gemm(Mat::transposed(ta), Mat::plain(g), &mut db, 1.0, 0.0);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, g.zip_map(tb, |x, y| x * y));
                self.accumulate(grads, *b, g.zip_map(ta, |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *row, col_sums(g));
            }
            Op::MulRow(a, row) => {
                let (ta, tr) = (self.value(*a), self.value(*row));
                if self.nodes[a.0].requires_grad {
                    let mut da = g.clone();
                    for i in 0..da.rows() {
                        for (d, s) in da.row_slice_mut(i).iter_mut().zip(tr.data()) {
                            *d *= s;
                        }
                    }
                    self.accumulate(grads, *a, da);
                }
                self.accumulate(grads, *row, col_sums(&g.zip_map(ta, |x, y| x * y)));
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.map(|v| v * c)),
            Op::Offset(a) => self.accumulate(grads, *a, g.clone()),
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::Softmax(a) => self.accumulate(grads, *a, softmax_backward(y, g)),
            Op::LogSoftmax(a) => {
                let mut dx = g.clone();
                for i in 0..dx.rows() {
                    let gs: f64 = g.row_slice(i).iter().sum();
                    for (d, ly) in dx.row_slice_mut(i).iter_mut().zip(y.row_slice(i)) {
                        *d -= ly.exp() * gs;
                    }
                }
                self.accumulate(grads, *a, dx);
            }
            Op::LayerNorm { x, inv_std } => {
                let n = y.cols() as f64;
                let mut dx = g.clone();
                for (i, s) in inv_std.iter().enumerate() {
                    let gy = g.row_slice(i);
                    let yy = y.row_slice(i);
                    let mg = gy.iter().sum::<f64>() / n;
                    let mgy = gy.iter().zip(yy).map(|(a, b)| a * b).sum::<f64>() / n;
                    for ((d, &gv), &yv) in dx.row_slice_mut(i).iter_mut().zip(gy).zip(yy) {
                        *d = s * (gv - mg - yv * mgy);
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                self.accumulate(grads, *a, g.zip_map(x, |d, x| if x > 0.0 { d } else { 0.0 }));
            }
            Op::Gelu(a) => {
                let x = self.value(*a);
                self.accumulate(
                    grads,
                    *a,
                    g.zip_map(x, |d, x| {
                        let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
                        let t = u.tanh();
                        let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
                        d * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                    }),
                );
            }
            Op::Exp(a) => self.accumulate(grads, *a, g.zip_map(y, |d, y| d * y)),
            Op::Ln(a) => {
                let x = self.value(*a);
                self.accumulate(grads, *a, g.zip_map(x, |d, x| d / x));
            }
            Op::Clip { x, lo, hi } => {
                let tx = self.value(*x);
                self.accumulate(
                    grads,
                    *x,
                    g.zip_map(tx, |d, v| if v >= *lo && v <= *hi { d } else { 0.0 }),
                );
            }
            Op::Minimum(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mask = ta.zip_map(tb, |x, y| if x <= y { 1.0 } else { 0.0 });
                self.accumulate(grads, *a, g.zip_map(&mask, |d, m| d * m));
                self.accumulate(grads, *b, g.zip_map(&mask, |d, m| d * (1.0 - m)));
            }
            Op::Attention {
                q,
                k,
                v,
                probs,
                scale,
            } => {
                let (tq, tk, tv) = (self.value(*q), self.value(*k), self.value(*v));
                if self.nodes[v.0].requires_grad {
                    let mut dv = Tensor::zeros(tv.rows(), tv.cols());
                    gemm(Mat::transposed(probs), Mat::plain(g), &mut dv, 1.0, 0.0);
                    self.accumulate(grads, *v, dv);
                }
                let mut dp = Tensor::zeros(probs.rows(), probs.cols());
                gemm(Mat::plain(g), Mat::transposed(tv), &mut dp, 1.0, 0.0);
                let ds = softmax_backward(probs, &dp);
                if self.nodes[q.0].requires_grad {
                    let mut dq = Tensor::zeros(tq.rows(), tq.cols());
                    gemm(Mat::plain(&ds), Mat::plain(tk), &mut dq, *scale, 0.0);
                    self.accumulate(grads, *q, dq);
                }
                if self.nodes[k.0].requires_grad {
                    let mut dk = Tensor::zeros(tk.rows(), tk.cols());
                    gemm(Mat::transposed(&ds), Mat::plain(tq), &mut dk, *scale, 0.0);
                    self.accumulate(grads, *k, dk);
                }
            }
            Op::SegmentAttention {
                q,
                k,
                v,
                lens,
                probs,
                scale,
            } => {
                let (tq, tk, tv) = (self.value(*q), self.value(*k), self.value(*v));
                let mut dq = Tensor::zeros(tq.rows(), tq.cols());
                let mut dk = Tensor::zeros(tk.rows(), tk.cols());
                let mut dv = Tensor::zeros(tv.rows(), tv.cols());
                let mut start = 0;
                for (&m, p) in lens.iter().zip(probs) {
                    let (bq, bk, bv) = (rows_block(tq, start, m), rows_block(tk, start, m), rows_block(tv, start, m));
                    let bg = rows_block(g, start, m);
                    let mut bdv = Tensor::zeros(m, tv.cols());
                    gemm(Mat::transposed(p), Mat::plain(&bg), &mut bdv, 1.0, 0.0);
                    write_rows(&mut dv, start, &bdv);
                    let mut dp = Tensor::zeros(m, m);
                    gemm(Mat::plain(&bg), Mat::transposed(&bv), &mut dp, 1.0, 0.0);
                    let ds = softmax_backward(p, &dp);
                    let mut bdq = Tensor::zeros(m, tq.cols());
                    gemm(Mat::plain(&ds), Mat::plain(&bk), &mut bdq, *scale, 0.0);
                    write_rows(&mut dq, start, &bdq);
                    let mut bdk = Tensor::zeros(m, tk.cols());
                    gemm(Mat::transposed(&ds), Mat::plain(&bq), &mut bdk, *scale, 0.0);
                    write_rows(&mut dk, start, &bdk);
                    start += m;
                }
                self.accumulate(grads, *q, dq);
                self.accumulate(grads, *k, dk);
                self.accumulate(grads, *v, dv);
            }
            Op::Embedding { table, ids } => {
                let t = self.value(*table);
                let mut dt = Tensor::zeros(t.rows(), t.cols());
                for (i, &id) in ids.iter().enumerate() {
                    for (d, s) in dt.row_slice_mut(id).iter_mut().zip(g.row_slice(i)) {
                        *d += s;
                    }
                }
                self.accumulate(grads, *table, dt);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let scale = g.item();
                let mut dx = probs.clone();
                for (i, &t) in targets.iter().enumerate() {
                    let v = dx.get(i, t);
                    dx.set(i, t, v - 1.0);
                }
                dx.scale_in_place(scale);
                self.accumulate(grads, *logits, dx);
            }
            Op::Bce { p, y } => {
                let scale = g.item();
                let tp = self.value(*p);
                let dp = tp.zip_map(y, |p, y| scale * (-y / p + (1.0 - y) / (1.0 - p)));
                self.accumulate(grads, *p, dp);
            }
            Op::Sum(a) => {
                let t = self.value(*a);
                self.accumulate(grads, *a, Tensor::full(t.rows(), t.cols(), g.item()));
            }
            Op::Mean(a) => {
                let t = self.value(*a);
                let v = g.item() / t.len() as f64;
                self.accumulate(grads, *a, Tensor::full(t.rows(), t.cols(), v));
            }
            Op::RowSums(a) => {
                let t = self.value(*a);
                let mut dx = Tensor::zeros(t.rows(), t.cols());
                for i in 0..t.rows() {
                    let gi = g.get(i, 0);
                    dx.row_slice_mut(i).iter_mut().for_each(|d| *d = gi);
                }
                self.accumulate(grads, *a, dx);
            }
            Op::SliceCols { x, start } => {
                let t = self.value(*x);
                let mut dx = Tensor::zeros(t.rows(), t.cols());
                for i in 0..t.rows() {
                    dx.row_slice_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row_slice(i));
                }
                self.accumulate(grads, *x, dx);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let t = self.value(p);
                    let mut dp = Tensor::zeros(t.rows(), t.cols());
                    for i in 0..t.rows() {
                        dp.row_slice_mut(i)
                            .copy_from_slice(&g.row_slice(i)[off..off + t.cols()]);
                    }
                    off += t.cols();
                    self.accumulate(grads, p, dp);
                }
            }
            Op::Pick { x, idx } => {
                let t = self.value(*x);
                let mut dx = Tensor::zeros(t.rows(), t.cols());
                for (i, &j) in idx.iter().enumerate() {
                    dx.set(i, j, g.get(i, 0));
                }
                self.accumulate(grads, *x, dx);
            }
        }
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for i in 0..x.rows() {
        let row = out.row_slice_mut(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

fn rows_block(t: &Tensor, start: usize, len: usize) -> Tensor {
    let c = t.cols();
    Tensor::new(len, c, t.data()[start * c..(start + len) * c].to_vec()).expect("block within bounds")
}

fn write_rows(dst: &mut Tensor, start: usize, src: &Tensor) {
    let c = dst.cols();
    dst.data_mut()[start * c..(start + src.rows()) * c].copy_from_slice(src.data());
}

fn softmax_backward(y: &Tensor, g: &Tensor) -> Tensor {
    let mut dx = g.clone();
    for i in 0..y.rows() {
        let yr = y.row_slice(i);
        let dot: f64 = g.row_slice(i).iter().zip(yr).map(|(a, b)| a * b).sum();
        for (d, &yv) in dx.row_slice_mut(i).iter_mut().zip(yr) {
            *d = yv * (*d - dot);
        }
    }
    dx
}

fn col_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols());
    for i in 0..g.rows() {
        for (o, v) in out.row_slice_mut(0).iter_mut().zip(g.row_slice(i)) {
            *o += v;
        }
    }
    out
}
