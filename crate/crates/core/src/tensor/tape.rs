use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;
use crate::tensor::matrix::{dot, norm};
use crate::tensor::Matrix;

/// Probabilities are clamped to this floor before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How [`Tape::masked_cross_entropy`] reduces over the masked nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    grad: Matrix,
}

#[derive(Debug)]
enum Op {
    MatMul(TensorId, TensorId),
    SpMM(Arc<SparseMatrix>, TensorId),
    Gram(TensorId),
    Scale(TensorId, f64),
    Relu(TensorId),
    Sigmoid(TensorId),
    AddScaled(TensorId, TensorId, f64, f64),
    AddRow(TensorId, TensorId),
    Hadamard(TensorId, TensorId),
    ConcatCols(TensorId, TensorId),
    SoftmaxRows(TensorId),
    ChannelSoftmax(Vec<TensorId>, usize),
    L2NormalizeRows(TensorId),
    FrobeniusSqDiff(TensorId, TensorId),
    MeanRowCosine(TensorId, TensorId),
    MaskedCrossEntropy {
        pred: TensorId,
        target: Matrix,
        mask: Vec<usize>,
        reduction: Reduction,
    },
}

#[derive(Debug)]
struct Record {
    op: Op,
    out: TensorId,
}

/// Reverse-mode differentiation tape.
///
/// Every operation appends its output node and a record; [`Tape::backward`]
/// replays the records in reverse. A tape is built and consumed by a single
/// training step.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    records: Vec<Record>,
    backward_done: bool,
}

fn mismatch(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
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

    /// Records a leaf (parameter or constant input).
    pub fn leaf(&mut self, value: Matrix) -> TensorId {
        self.push(value)
    }

    pub fn value(&self, id: TensorId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: TensorId) -> &Matrix {
        &self.nodes[id.0].grad
    }

    fn push(&mut self, value: Matrix) -> TensorId {
        let (r, c) = value.shape();
        self.nodes.push(Node {
            value,
            grad: Matrix::zeros(r, c),
        });
        TensorId(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op, value: Matrix) -> TensorId {
        let out = self.push(value);
        self.records.push(Record { op, out });
        out
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.record(Op::MatMul(a, b), v))
    }

    /// `p * h` for a constant sparse `p`.
    pub fn spmm(&mut self, p: &Arc<SparseMatrix>, h: TensorId) -> Result<TensorId> {
        let v = p.spmm(self.value(h))?;
        Ok(self.record(Op::SpMM(Arc::clone(p), h), v))
    }

    /// `a a^T`.
    pub fn gram(&mut self, a: TensorId) -> TensorId {
        let va = self.value(a);
        let v = va.matmul_t(va).expect("inner dimensions always agree");
        self.record(Op::Gram(a), v)
    }

    pub fn scale(&mut self, a: TensorId, s: f64) -> TensorId {
        let v = self.value(a).map(|x| s * x);
        self.record(Op::Scale(a, s), v)
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.record(Op::Relu(a), v)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let v = self.value(a).map(sigmoid);
        self.record(Op::Sigmoid(a), v)
    }

    /// `wa * a + wb * b`.
    pub fn add_scaled(&mut self, a: TensorId, b: TensorId, wa: f64, wb: f64) -> Result<TensorId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("add_scaled", va, vb));
        }
        let v = va.zip_map(vb, |x, y| wa * x + wb * y);
        Ok(self.record(Op::AddScaled(a, b, wa, wb), v))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.add_scaled(a, b, 1.0, 1.0)
    }

    /// Adds the `1 x c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: TensorId, bias: TensorId) -> Result<TensorId> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(mismatch("add_row", va, vb));
        }
        let mut v = va.clone();
        for i in 0..v.rows() {
            for (o, &b) in v.row_mut(i).iter_mut().zip(vb.as_slice()) {
                *o += b;
            }
        }
        Ok(self.record(Op::AddRow(a, bias), v))
    }

    pub fn hadamard(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("hadamard", va, vb));
        }
        let v = va.zip_map(vb, |x, y| x * y);
        Ok(self.record(Op::Hadamard(a, b), v))
    }

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(mismatch("concat_cols", va, vb));
        }
        let mut v = Matrix::zeros(va.rows(), va.cols() + vb.cols());
        for i in 0..va.rows() {
            let (left, right) = v.row_mut(i).split_at_mut(va.cols());
            left.copy_from_slice(va.row(i));
            right.copy_from_slice(vb.row(i));
        }
        Ok(self.record(Op::ConcatCols(a, b), v))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: TensorId) -> TensorId {
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        self.record(Op::SoftmaxRows(a), v)
    }

    /// Elementwise softmax across same-shaped `channels`, returning the
    /// weight of channel `pick`.
    pub fn channel_softmax(&mut self, channels: &[TensorId], pick: usize) -> Result<TensorId> {
        let first = self.value(channels[0]);
        for &c in &channels[1..] {
            if self.value(c).shape() != first.shape() {
                return Err(mismatch("channel_softmax", first, self.value(c)));
            }
        }
        let v = channel_weights(self, channels, pick);
        Ok(self.record(Op::ChannelSoftmax(channels.to_vec(), pick), v))
    }

    /// Scales every row to unit Euclidean norm; zero rows are an error.
    pub fn l2_normalize_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let n = norm(row);
            if n == 0.0 {
                return Err(Error::ZeroRow {
                    op: "l2_normalize_rows",
                    row: i,
                });
            }
            row.iter_mut().for_each(|x| *x /= n);
        }
        Ok(self.record(Op::L2NormalizeRows(a), v))
    }

    /// Scalar `||a - b||_F^2`.
    pub fn frobenius_sq_diff(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("frobenius_sq_diff", va, vb));
        }
        let s: f64 = va
            .as_slice()
            .iter()
            .zip(vb.as_slice())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(self.record(Op::FrobeniusSqDiff(a, b), Matrix::scalar(s)))
    }

    /// Scalar mean over rows of `cos(a_i, b_i)`.
    pub fn mean_row_cosine(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("mean_row_cosine", va, vb));
        }
        let mut total = 0.0;
        for i in 0..va.rows() {
            let (ra, rb) = (va.row(i), vb.row(i));
            let (na, nb) = (norm(ra), norm(rb));
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroRow {
                    op: "mean_row_cosine",
                    row: i,
                });
            }
            total += dot(ra, rb) / (na * nb);
        }
        let v = Matrix::scalar(total / va.rows() as f64);
        Ok(self.record(Op::MeanRowCosine(a, b), v))
    }

    /// Scalar `-sum_{v in mask} sum_c target[v,c] ln pred[v,c]`, or its mean over
    /// the mask. Predictions are clamped to `[PROB_FLOOR, 1]` before the log.
    pub fn masked_cross_entropy(
        &mut self,
        pred: TensorId,
        target: &Matrix,
        mask: &[usize],
        reduction: Reduction,
    ) -> Result<TensorId> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(mismatch("masked_cross_entropy", p, target));
        }
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        let mut total = 0.0;
        for &v in mask {
            if v >= p.rows() {
                return Err(Error::IndexOutOfRange {
                    index: v,
                    len: p.rows(),
                });
            }
            let sum: f64 = p.row(v).iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::NotProbabilities { row: v, sum });
            }
            for (&q, &y) in p.row(v).iter().zip(target.row(v)) {
                if y != 0.0 {
                    total -= y * q.clamp(PROB_FLOOR, 1.0).ln();
                }
            }
        }
        if reduction == Reduction::Mean {
            total /= mask.len() as f64;
        }
        let op = Op::MaskedCrossEntropy {
            pred,
            target: target.clone(),
            mask: mask.to_vec(),
            reduction,
        };
        Ok(self.record(op, Matrix::scalar(total)))
    }

    /// Populates gradients of every node that `loss` depends on. May only run
    /// once per tape.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::NotScalar {
                op: "backward",
                shape,
            });
        }
        self.backward_done = true;
        self.nodes[loss.0].grad = Matrix::scalar(1.0);

        let records = std::mem::take(&mut self.records);
        for rec in records.iter().rev() {
            if rec.out > loss {
                continue;
            }
            let g = &self.nodes[rec.out.0].grad;
            if g.as_slice().iter().all(|&x| x == 0.0) {
                continue;
            }
            let g = g.clone();
            self.backprop(&rec.op, rec.out, &g)?;
        }
        self.records = records;
        Ok(())
    }

    fn accumulate(&mut self, id: TensorId, delta: &Matrix) {
        self.nodes[id.0].grad.add_assign_scaled(delta, 1.0);
    }

    fn backprop(&mut self, op: &Op, out: TensorId, g: &Matrix) -> Result<()> {
        match op {
            Op::MatMul(a, b) => {
                let da = g.matmul_t(self.value(*b))?;
                let db = self.value(*a).t_matmul(g)?;
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }
            Op::SpMM(p, h) => {
                let dh = p.spmm_transposed(g)?;
                self.accumulate(*h, &dh);
            }
            Op::Gram(a) => {
                // d(A A^T) = (G + G^T) A
                let sym = g.zip_map(&g.transpose(), |x, y| x + y);
                let da = sym.matmul(self.value(*a))?;
                self.accumulate(*a, &da);
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.accumulate(*a, &g.map(|x| s * x));
            }
            Op::Relu(a) => {
                let da = self.value(*a).zip_map(g, |x, gi| if x > 0.0 { gi } else { 0.0 });
                self.accumulate(*a, &da);
            }
            Op::Sigmoid(a) => {
                let da = self.value(out).zip_map(g, |s, gi| gi * s * (1.0 - s));
                self.accumulate(*a, &da);
            }
            Op::AddScaled(a, b, wa, wb) => {
                let (wa, wb) = (*wa, *wb);
                self.accumulate(*a, &g.map(|x| wa * x));
                self.accumulate(*b, &g.map(|x| wb * x));
            }
            Op::AddRow(a, bias) => {
                let mut db = Matrix::zeros(1, g.cols());
                for row in g.row_iter() {
                    for (d, &x) in db.as_mut_slice().iter_mut().zip(row) {
                        *d += x;
                    }
                }
                self.accumulate(*a, g);
                self.accumulate(*bias, &db);
            }
            Op::Hadamard(a, b) => {
                let da = self.value(*b).zip_map(g, |y, gi| y * gi);
                let db = self.value(*a).zip_map(g, |x, gi| x * gi);
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }
            Op::ConcatCols(a, b) => {
                let split = self.value(*a).cols();
                let mut da = Matrix::zeros(g.rows(), split);
                let mut db = Matrix::zeros(g.rows(), g.cols() - split);
                for i in 0..g.rows() {
                    let (left, right) = g.row(i).split_at(split);
                    da.row_mut(i).copy_from_slice(left);
                    db.row_mut(i).copy_from_slice(right);
                }
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }
            Op::SoftmaxRows(a) => {
                let y = self.value(out);
                let mut da = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let inner = dot(yr, gr);
                    for ((d, &yi), &gi) in da.row_mut(i).iter_mut().zip(yr).zip(gr) {
                        *d = yi * (gi - inner);
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::ChannelSoftmax(channels, pick) => {
                let pick_w = self.value(out).clone();
                for (j, &c) in channels.iter().enumerate() {
                    let dc = if j == *pick {
                        pick_w.zip_map(g, |s, gi| gi * s * (1.0 - s))
                    } else {
                        let other = channel_weights(self, channels, j);
                        let prod = pick_w.zip_map(&other, |s, t| -s * t);
                        prod.zip_map(g, |p, gi| p * gi)
                    };
                    self.accumulate(c, &dc);
                }
            }
            Op::L2NormalizeRows(a) => {
                let (x, y) = (self.value(*a), self.value(out));
                let mut da = Matrix::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let n = norm(x.row(i));
                    let (yr, gr) = (y.row(i), g.row(i));
                    let inner = dot(yr, gr);
                    for ((d, &yi), &gi) in da.row_mut(i).iter_mut().zip(yr).zip(gr) {
                        *d = (gi - yi * inner) / n;
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::FrobeniusSqDiff(a, b) => {
                let s = g.item();
                let diff = self.value(*a).zip_map(self.value(*b), |x, y| 2.0 * s * (x - y));
                self.accumulate(*a, &diff);
                self.accumulate(*b, &diff.map(|v| -v));
            }
            Op::MeanRowCosine(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let scale = g.item() / va.rows() as f64;
                let mut da = Matrix::zeros(va.rows(), va.cols());
                let mut db = Matrix::zeros(vb.rows(), vb.cols());
                for i in 0..va.rows() {
                    let (ra, rb) = (va.row(i), vb.row(i));
                    let (na, nb) = (norm(ra), norm(rb));
                    let cos = dot(ra, rb) / (na * nb);
                    for (j, (&x, &y)) in ra.iter().zip(rb).enumerate() {
                        da[(i, j)] = scale * (y / (na * nb) - cos * x / (na * na));
                        db[(i, j)] = scale * (x / (na * nb) - cos * y / (nb * nb));
                    }
                }
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }
            Op::MaskedCrossEntropy {
                pred,
                target,
                mask,
                reduction,
            } => {
                let p = self.value(*pred);
                let mut scale = g.item();
                if *reduction == Reduction::Mean {
                    scale /= mask.len() as f64;
                }
                let mut dp = Matrix::zeros(p.rows(), p.cols());
                for &v in mask {
                    for (j, (&q, &y)) in p.row(v).iter().zip(target.row(v)).enumerate() {
                        if y != 0.0 && q > PROB_FLOOR {
                            dp[(v, j)] -= scale * y / q;
                        }
                    }
                }
                self.accumulate(*pred, &dp);
            }
        }
        Ok(())
    }
}

fn channel_weights(tape: &Tape, channels: &[TensorId], pick: usize) -> Matrix {
    let values: Vec<&Matrix> = channels.iter().map(|&c| tape.value(c)).collect();
    let mut out = Matrix::zeros(values[0].rows(), values[0].cols());
    for (idx, o) in out.as_mut_slice().iter_mut().enumerate() {
        let max = values
            .iter()
            .map(|m| m.as_slice()[idx])
            .fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = values.iter().map(|m| (m.as_slice()[idx] - max).exp()).sum();
        *o = (values[pick].as_slice()[idx] - max).exp() / total;
    }
    out
}
