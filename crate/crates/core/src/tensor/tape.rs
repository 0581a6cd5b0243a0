//! Reverse-mode tape.
//!
//! Every primitive evaluates eagerly, stores its output on the tape and
//! keeps whatever it needs for the backward pass. [`Tape::backward`] replays
//! the tape in reverse and accumulates parameter gradients into the
//! [`ParamStore`] the forward pass read from.

use std::sync::Arc;

use super::{Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Lookup { table: ParamId, indices: Vec<usize> },
    Gather { src: NodeId, rows: Vec<usize> },
    ConcatRows(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    /// `out[dst] += coef * x[src]` over a fixed list of entries.
    SpMM {
        src: NodeId,
        entries: Arc<[(usize, usize, f64)]>,
    },
    RowDot(NodeId, NodeId),
    Softplus(NodeId),
    Mean(NodeId),
    Sum(NodeId),
}

#[derive(Debug)]
struct Entry {
    op: Op,
    value: Matrix,
}

#[derive(Debug, Default)]
pub struct Tape {
    entries: Vec<Entry>,
}

fn ensure_finite(value: &Matrix, what: &str) -> Result<()> {
    if let Some(pos) = value.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{what} produced {} at row {}, col {}",
            value.data[pos],
            pos / value.cols.max(1),
            pos % value.cols.max(1)
        )));
    }
    Ok(())
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `a (n x k) * b (k x m)`.
fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        let arow = a.row(r);
        let orow = &mut out.data[r * b.cols..(r + 1) * b.cols];
        for (k, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(b.row(k)) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `g (n x m) * b^T` where `b` is `k x m`.
fn matmul_bt(g: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(g.rows, b.rows);
    for r in 0..g.rows {
        let grow = g.row(r);
        for k in 0..b.rows {
            out.data[r * b.rows + k] = grow.iter().zip(b.row(k)).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a^T * g` where `a` is `n x k` and `g` is `n x m`.
fn matmul_at(a: &Matrix, g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.cols, g.cols);
    for r in 0..a.rows {
        let grow = g.row(r);
        for (k, &av) in a.row(r).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &gv) in out.data[k * g.cols..(k + 1) * g.cols].iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

fn accumulate(slot: &mut Option<Matrix>, add: Matrix) {
    match slot {
        Some(m) => m.data.iter_mut().zip(&add.data).for_each(|(x, y)| *x += y),
        None => *slot = Some(add),
    }
}

fn accumulate_rows(slot: &mut Option<Matrix>, rows: usize, cols: usize, f: impl FnOnce(&mut Matrix)) {
    let m = slot.get_or_insert_with(|| Matrix::zeros(rows, cols));
    f(m);
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &Matrix {
        &self.entries[node.0].value
    }

    fn push(&mut self, op: Op, value: Matrix, what: &str) -> Result<NodeId> {
        ensure_finite(&value, what)?;
        self.entries.push(Entry { op, value });
        Ok(NodeId(self.entries.len() - 1))
    }

    fn shape(&self, node: NodeId) -> (usize, usize) {
        let v = &self.entries[node.0].value;
        (v.rows, v.cols)
    }

    /// Smallest |pre-activation| seen by any relu on the tape; finite
    /// difference probes with a smaller step than this never cross a kink.
    pub fn min_relu_margin(&self) -> Option<f64> {
        self.entries
            .iter()
            .filter_map(|e| match e.op {
                Op::Relu(src) => Some(&self.entries[src.0].value),
                _ => None,
            })
            .flat_map(|m| m.data.iter().map(|v| v.abs()))
            .reduce(f64::min)
    }

    pub fn constant(&mut self, value: Matrix) -> Result<NodeId> {
        self.push(Op::Constant, value, "constant")
    }

    /// The whole parameter as a matrix.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<NodeId> {
        let value = store.get(id).to_matrix();
        self.push(Op::Param(id), value, "param")
    }

    /// Row gather from a parameter table; gradients scatter back additively.
    pub fn lookup(&mut self, store: &ParamStore, table: ParamId, indices: &[usize]) -> Result<NodeId> {
        let t = store.get(table);
        let (n, d) = (t.rows(), t.cols());
        let mut out = Matrix::zeros(indices.len(), d);
        for (r, &idx) in indices.iter().enumerate() {
            if idx >= n {
                return Err(Error::IndexOutOfRange {
                    what: "embedding table",
                    index: idx,
                    len: n,
                });
            }
            out.row_mut(r).copy_from_slice(t.row(idx));
        }
        self.push(
            Op::Lookup {
                table,
                indices: indices.to_vec(),
            },
            out,
            "lookup",
        )
    }

    pub fn gather(&mut self, src: NodeId, rows: &[usize]) -> Result<NodeId> {
        let s = self.value(src);
        let mut out = Matrix::zeros(rows.len(), s.cols);
        for (r, &idx) in rows.iter().enumerate() {
            if idx >= s.rows {
                return Err(Error::IndexOutOfRange {
                    what: "gathered rows",
                    index: idx,
                    len: s.rows,
                });
            }
            out.row_mut(r).copy_from_slice(s.row(idx));
        }
        self.push(
            Op::Gather {
                src,
                rows: rows.to_vec(),
            },
            out,
            "gather",
        )
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        // zero-row operands carry no column information
        let cols = if ar == 0 { bc } else { ac };
        if ar > 0 && br > 0 && ac != bc {
            return Err(Error::Shape(format!("concat {ar}x{ac} with {br}x{bc}")));
        }
        let mut data = self.value(a).data.clone();
        data.extend_from_slice(&self.value(b).data);
        let out = Matrix::from_vec(ar + br, cols, data)?;
        self.push(Op::ConcatRows(a, b), out, "concat")
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(Error::Shape(format!("matmul {ar}x{ac} by {br}x{bc}")));
        }
        let out = matmul(self.value(a), self.value(b));
        self.push(Op::MatMul(a, b), out, "matmul")
    }

    /// `x + b` with the `1 x cols` row `b` broadcast over rows.
    pub fn add_row(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (xr, xc) = self.shape(x);
        let (br, bc) = self.shape(b);
        if br != 1 || bc != xc {
            return Err(Error::Shape(format!("bias {br}x{bc} for input {xr}x{xc}")));
        }
        let mut out = self.value(x).clone();
        let bias = self.value(b).data.clone();
        for r in 0..xr {
            out.row_mut(r).iter_mut().zip(&bias).for_each(|(o, b)| *o += b);
        }
        self.push(Op::AddRow(x, b), out, "add_row")
    }

    fn elementwise(&mut self, a: NodeId, b: NodeId, sign: f64, op: Op, what: &str) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{what} of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = self.value(a).clone();
        out.data
            .iter_mut()
            .zip(&self.value(b).data)
            .for_each(|(x, y)| *x += sign * y);
        self.push(op, out, what)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, 1.0, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, -1.0, Op::Sub(a, b), "sub")
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        self.push(Op::Scale(x, c), out, "scale")
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(Op::Relu(x), out, "relu")
    }

    /// Sparse-times-dense: an `out_rows x cols` matrix with
    /// `out[dst] += coef * x[src]` for every `(dst, src, coef)` entry.
    pub fn spmm(&mut self, x: NodeId, out_rows: usize, entries: Arc<[(usize, usize, f64)]>) -> Result<NodeId> {
        let src = self.value(x);
        let mut out = Matrix::zeros(out_rows, src.cols);
        for &(d, s, c) in entries.iter() {
            if d >= out_rows || s >= src.rows {
                return Err(Error::IndexOutOfRange {
                    what: "sparse operand rows",
                    index: d.max(s),
                    len: out_rows.min(src.rows),
                });
            }
            let cols = src.cols;
            let (srow, orow) = (&src.data[s * cols..(s + 1) * cols], &mut out.data[d * cols..(d + 1) * cols]);
            orow.iter_mut().zip(srow).for_each(|(o, v)| *o += c * v);
        }
        self.push(Op::SpMM { src: x, entries }, out, "spmm")
    }

    /// Row-wise inner products of two `n x d` matrices, as `n x 1`.
    pub fn row_dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "row_dot of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let data = (0..av.rows)
            .map(|r| av.row(r).iter().zip(bv.row(r)).map(|(x, y)| x * y).sum())
            .collect();
        let out = Matrix::from_vec(av.rows, 1, data)?;
        self.push(Op::RowDot(a, b), out, "row_dot")
    }

    /// Elementwise `ln(1 + e^x)`, computed without overflow.
    pub fn softplus(&mut self, x: NodeId) -> Result<NodeId> {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = softplus(*v));
        self.push(Op::Softplus(x), out, "softplus")
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        if v.data.is_empty() {
            return Err(Error::Shape("mean of an empty matrix".into()));
        }
        let m = v.data.iter().sum::<f64>() / v.data.len() as f64;
        self.push(Op::Mean(x), Matrix::from_vec(1, 1, vec![m])?, "mean")
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).data.iter().sum::<f64>();
        self.push(Op::Sum(x), Matrix::from_vec(1, 1, vec![s])?, "sum")
    }

    /// Back-propagates from `root` (seeded with ones) and adds the resulting
    /// parameter gradients into `store`.
    pub fn backward(&self, root: NodeId, store: &mut ParamStore) -> Result<()> {
        let mut grads: Vec<Option<Matrix>> = (0..=root.0).map(|_| None).collect();
        let rv = self.value(root);
        grads[root.0] = Some(Matrix {
            rows: rv.rows,
            cols: rv.cols,
            data: vec![1.0; rv.data.len()],
        });

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let entry = &self.entries[idx];
            match &entry.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let t = store.get_mut(*id);
                    t.grad.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b);
                }
                Op::Lookup { table, indices } => {
                    let t = store.get_mut(*table);
                    let d = t.cols();
                    for (r, &i) in indices.iter().enumerate() {
                        t.grad[i * d..(i + 1) * d]
                            .iter_mut()
                            .zip(g.row(r))
                            .for_each(|(a, b)| *a += b);
                    }
                }
                Op::Gather { src, rows } => {
                    let (sr, sc) = self.shape(*src);
                    accumulate_rows(&mut grads[src.0], sr, sc, |m| {
                        for (r, &i) in rows.iter().enumerate() {
                            m.row_mut(i).iter_mut().zip(g.row(r)).for_each(|(a, b)| *a += b);
                        }
                    });
                }
                Op::ConcatRows(a, b) => {
                    let (ar, ac) = self.shape(*a);
                    let (br, bc) = self.shape(*b);
                    let split = ar * g.cols;
                    accumulate(&mut grads[a.0], Matrix::from_vec(ar, ac, g.data[..split].to_vec())?);
                    accumulate(&mut grads[b.0], Matrix::from_vec(br, bc, g.data[split..].to_vec())?);
                }
                Op::MatMul(a, b) => {
                    let ga = matmul_bt(&g, self.value(*b));
                    let gb = matmul_at(self.value(*a), &g);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::AddRow(x, b) => {
                    let mut gb = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        gb.data.iter_mut().zip(g.row(r)).for_each(|(a, v)| *a += v);
                    }
                    accumulate(&mut grads[b.0], gb);
                    accumulate(&mut grads[x.0], g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[b.0], g.clone());
                    accumulate(&mut grads[a.0], g);
                }
                Op::Sub(a, b) => {
                    let mut neg = g.clone();
                    neg.data.iter_mut().for_each(|v| *v = -*v);
                    accumulate(&mut grads[b.0], neg);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Scale(x, c) => {
                    let mut gx = g;
                    gx.data.iter_mut().for_each(|v| *v *= c);
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Relu(x) => {
                    let mut gx = g;
                    gx.data
                        .iter_mut()
                        .zip(&self.value(*x).data)
                        .for_each(|(gv, &xv)| {
                            if xv <= 0.0 {
                                *gv = 0.0
                            }
                        });
                    accumulate(&mut grads[x.0], gx);
                }
                Op::SpMM { src, entries } => {
                    let (sr, sc) = self.shape(*src);
                    accumulate_rows(&mut grads[src.0], sr, sc, |m| {
                        for &(d, s, c) in entries.iter() {
                            m.row_mut(s).iter_mut().zip(g.row(d)).for_each(|(a, v)| *a += c * v);
                        }
                    });
                }
                Op::RowDot(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut ga = Matrix::zeros(av.rows, av.cols);
                    let mut gb = Matrix::zeros(bv.rows, bv.cols);
                    for r in 0..av.rows {
                        let gr = g.data[r];
                        ga.row_mut(r).iter_mut().zip(bv.row(r)).for_each(|(o, v)| *o = gr * v);
                        gb.row_mut(r).iter_mut().zip(av.row(r)).for_each(|(o, v)| *o = gr * v);
                    }
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Softplus(x) => {
                    let mut gx = g;
                    gx.data
                        .iter_mut()
                        .zip(&self.value(*x).data)
                        .for_each(|(gv, &xv)| *gv *= sigmoid(xv));
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Mean(x) => {
                    let (r, c) = self.shape(*x);
                    let share = g.data[0] / (r * c) as f64;
                    accumulate(&mut grads[x.0], Matrix::from_vec(r, c, vec![share; r * c])?);
                }
                Op::Sum(x) => {
                    let (r, c) = self.shape(*x);
                    accumulate(&mut grads[x.0], Matrix::from_vec(r, c, vec![g.data[0]; r * c])?);
                }
            }
        }
        for t in store.iter() {
            if let Some(pos) = t.grad.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of {} at flat index {pos}",
                    t.name
                )));
            }
        }
        Ok(())
    }
}
