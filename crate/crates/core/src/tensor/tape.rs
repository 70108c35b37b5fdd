//! Define-by-run reverse-mode differentiation over 2-D matrices.
//!
//! Every value on a [`Tape`] is a row-major `rows x cols` matrix. Operations
//! record a node when any input requires a gradient; [`Tape::backward`] then
//! walks the nodes in reverse creation order, which is a valid reverse
//! topological order because inputs always precede outputs. A tape can be
//! differentiated once.

use std::cell::{Cell, Ref, RefCell};
use std::sync::Arc;

use super::kernels::{matmul_acc, matmul_nt_acc};
use super::params::{GradBuffer, ParamId, ParamStore};
use crate::error::{Error, Result};

pub(crate) enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulNT(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    MaxPoolSegments {
        x: usize,
        argmax: Vec<usize>,
    },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize),
    GatherRows(usize, Vec<usize>),
    Transpose(usize),
    Sum(usize),
    Mean(usize),
    SumRows(usize),
    Pick(usize, Vec<usize>),
    RowNorm(usize),
    L2NormalizeRows {
        x: usize,
        norms: Vec<f64>,
        clamped: Vec<bool>,
    },
    QuatToRotmat(usize),
    RigidTransform {
        rot: usize,
        trans: Option<usize>,
        points: Arc<Vec<f64>>,
        per_part: usize,
    },
    ChamferSegments {
        a: usize,
        b: usize,
        seg_a: usize,
        seg_b: usize,
        nn_ab: Vec<usize>,
        nn_ba: Vec<usize>,
    },
}

pub(crate) struct Node {
    pub(crate) rows: usize,
    pub(crate) cols: usize,
    pub(crate) value: Vec<f64>,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
    pub(crate) param: Option<ParamId>,
}

/// Records operations for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (r, c) = self.shape();
        write!(f, "Var#{}[{r}x{c}]", self.id)
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(usize, ParamId)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> Option<&[f64]> {
        self.grads.get(v.id).and_then(|g| g.as_deref())
    }

    /// Adds every parameter leaf's gradient into `buf`.
    pub fn accumulate(&self, buf: &mut GradBuffer) {
        for &(node, pid) in &self.params {
            if let Some(g) = &self.grads[node] {
                buf.add(pid, g);
            }
        }
    }
}

fn shape_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Shape {
        op,
        lhs: vec![a.0, a.1],
        rhs: vec![b.0, b.1],
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

    fn push(&self, rows: usize, cols: usize, value: Vec<f64>, op: Op, requires_grad: bool) -> Var<'_> {
        debug_assert_eq!(value.len(), rows * cols);
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        let op = if requires_grad { op } else { Op::Leaf };
        nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad,
            param: None,
        });
        Var { tape: self, id }
    }

    /// A value that does not require a gradient.
    pub fn constant(&self, rows: usize, cols: usize, value: Vec<f64>) -> Var<'_> {
        assert_eq!(value.len(), rows * cols, "constant data length");
        self.push(rows, cols, value, Op::Leaf, false)
    }

    /// A leaf whose gradient is tracked.
    pub fn leaf(&self, rows: usize, cols: usize, value: Vec<f64>) -> Var<'_> {
        assert_eq!(value.len(), rows * cols, "leaf data length");
        self.push(rows, cols, value, Op::Leaf, true)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(1, 1, vec![v])
    }

    /// Leaf holding a copy of a stored parameter. 1-D parameters become row vectors.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        let t = store.get(id);
        let (rows, cols) = t.matrix_dims();
        let v = self.push(rows, cols, t.data.clone(), Op::Leaf, true);
        self.nodes.borrow_mut()[v.id].param = Some(id);
        v
    }

    fn dims(&self, id: usize) -> (usize, usize) {
        let n = &self.nodes.borrow()[id];
        (n.rows, n.cols)
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Runs the backward pass from a 1x1 `loss`. The tape cannot be
    /// differentiated again afterwards.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if self.consumed.replace(true) {
            return Err(Error::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        let l = &nodes[loss.id];
        if l.rows * l.cols != 1 {
            return Err(Error::Domain(format!(
                "backward needs a scalar loss, got {}x{}",
                l.rows, l.cols
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                super::backward::propagate(&nodes, id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        let params = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (i, p)))
            .collect();
        Ok(Gradients { grads, params })
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.dims(self.id)
    }

    pub fn rows(&self) -> usize {
        self.shape().0
    }

    pub fn cols(&self) -> usize {
        self.shape().1
    }

    pub fn value(&self) -> Ref<'t, [f64]> {
        Ref::map(self.tape.nodes.borrow(), |n| n[self.id].value.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.value().to_vec()
    }

    /// Value of a 1x1 var.
    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.len(), 1, "item() on a non-scalar");
        v[0]
    }

    fn unary(&self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var<'t> {
        let rg = self.tape.needs(&[self.id]);
        self.tape.push(rows, cols, value, op, rg)
    }

    fn binary(&self, other: &Var<'t>, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var<'t> {
        let rg = self.tape.needs(&[self.id, other.id]);
        self.tape.push(rows, cols, value, op, rg)
    }

    pub fn matmul(&self, b: &Var<'t>) -> Result<Var<'t>> {
        let (n, k) = self.shape();
        let (k2, m) = b.shape();
        if k != k2 {
            return Err(shape_err("matmul", (n, k), (k2, m)));
        }
        let mut out = vec![0.0; n * m];
        {
            let nodes = self.tape.nodes.borrow();
            matmul_acc(&nodes[self.id].value, &nodes[b.id].value, &mut out, n, k, m);
        }
        Ok(self.binary(b, n, m, out, Op::MatMul(self.id, b.id)))
    }

    /// `self * b^T`.
    pub fn matmul_t(&self, b: &Var<'t>) -> Result<Var<'t>> {
        let (n, k) = self.shape();
        let (m, k2) = b.shape();
        if k != k2 {
            return Err(shape_err("matmul_t", (n, k), (m, k2)));
        }
        let mut out = vec![0.0; n * m];
        {
            let nodes = self.tape.nodes.borrow();
            matmul_nt_acc(&nodes[self.id].value, &nodes[b.id].value, &mut out, n, k, m);
        }
        Ok(self.binary(b, n, m, out, Op::MatMulNT(self.id, b.id)))
    }

    fn zip_same(&self, b: &Var<'t>, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        if self.shape() != b.shape() {
            return Err(shape_err(name, self.shape(), b.shape()));
        }
        let nodes = self.tape.nodes.borrow();
        Ok(nodes[self.id]
            .value
            .iter()
            .zip(&nodes[b.id].value)
            .map(|(x, y)| f(*x, *y))
            .collect())
    }

    pub fn add(&self, b: &Var<'t>) -> Result<Var<'t>> {
        let v = self.zip_same(b, "add", |x, y| x + y)?;
        let (r, c) = self.shape();
        Ok(self.binary(b, r, c, v, Op::Add(self.id, b.id)))
    }

    pub fn sub(&self, b: &Var<'t>) -> Result<Var<'t>> {
        let v = self.zip_same(b, "sub", |x, y| x - y)?;
        let (r, c) = self.shape();
        Ok(self.binary(b, r, c, v, Op::Sub(self.id, b.id)))
    }

    /// Elementwise product.
    pub fn mul(&self, b: &Var<'t>) -> Result<Var<'t>> {
        let v = self.zip_same(b, "mul", |x, y| x * y)?;
        let (r, c) = self.shape();
        Ok(self.binary(b, r, c, v, Op::Mul(self.id, b.id)))
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row(&self, bias: &Var<'t>) -> Result<Var<'t>> {
        let (r, c) = self.shape();
        if bias.shape() != (1, c) {
            return Err(shape_err("add_row", (r, c), bias.shape()));
        }
        let mut v = self.to_vec();
        {
            let nodes = self.tape.nodes.borrow();
            let b = &nodes[bias.id].value;
            for row in v.chunks_mut(c) {
                for (x, y) in row.iter_mut().zip(b) {
                    *x += y;
                }
            }
        }
        Ok(self.binary(bias, r, c, v, Op::AddRow(self.id, bias.id)))
    }

    pub fn scale(&self, s: f64) -> Var<'t> {
        let (r, c) = self.shape();
        let v = self.value().iter().map(|x| x * s).collect();
        self.unary(r, c, v, Op::Scale(self.id, s))
    }

    pub fn add_scalar(&self, s: f64) -> Var<'t> {
        let (r, c) = self.shape();
        let v = self.value().iter().map(|x| x + s).collect();
        self.unary(r, c, v, Op::AddScalar(self.id))
    }

    pub fn neg(&self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn relu(&self) -> Var<'t> {
        let (r, c) = self.shape();
        let v = self.value().iter().map(|x| x.max(0.0)).collect();
        self.unary(r, c, v, Op::Relu(self.id))
    }

    pub fn exp(&self) -> Var<'t> {
        let (r, c) = self.shape();
        let v = self.value().iter().map(|x| x.exp()).collect();
        self.unary(r, c, v, Op::Exp(self.id))
    }

    pub fn ln(&self) -> Var<'t> {
        let (r, c) = self.shape();
        let v = self.value().iter().map(|x| x.ln()).collect();
        self.unary(r, c, v, Op::Log(self.id))
    }

    pub fn softmax_rows(&self) -> Var<'t> {
        let (r, c) = self.shape();
        let mut v = self.to_vec();
        for row in v.chunks_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        self.unary(r, c, v, Op::SoftmaxRows(self.id))
    }

    pub fn log_softmax_rows(&self) -> Var<'t> {
        let (r, c) = self.shape();
        let mut v = self.to_vec();
        for row in v.chunks_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        self.unary(r, c, v, Op::LogSoftmaxRows(self.id))
    }

    /// Row-wise layer normalization with affine `gamma`, `beta` (both `1 x cols`).
    pub fn layer_norm(&self, gamma: &Var<'t>, beta: &Var<'t>, eps: f64) -> Result<Var<'t>> {
        let (r, c) = self.shape();
        if gamma.shape() != (1, c) || beta.shape() != (1, c) {
            return Err(shape_err("layer_norm", (r, c), gamma.shape()));
        }
        let x = self.to_vec();
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        {
            let nodes = self.tape.nodes.borrow();
            let g = &nodes[gamma.id].value;
            let b = &nodes[beta.id].value;
            for i in 0..r {
                let row = &x[i * c..(i + 1) * c];
                let mean = row.iter().sum::<f64>() / c as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
                let is = 1.0 / (var + eps).sqrt();
                inv_std[i] = is;
                for j in 0..c {
                    let h = (row[j] - mean) * is;
                    xhat[i * c + j] = h;
                    out[i * c + j] = h * g[j] + b[j];
                }
            }
        }
        let rg = self.tape.needs(&[self.id, gamma.id, beta.id]);
        Ok(self.tape.push(
            r,
            c,
            out,
            Op::LayerNorm {
                x: self.id,
                gamma: gamma.id,
                beta: beta.id,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Column-wise max over consecutive blocks of `seg` rows:
    /// `[n*seg, c] -> [n, c]`.
    pub fn max_pool_rows(&self, seg: usize) -> Result<Var<'t>> {
        let (r, c) = self.shape();
        if seg == 0 || r % seg != 0 {
            return Err(Error::Domain(format!("cannot pool {r} rows in blocks of {seg}")));
        }
        let n = r / seg;
        let mut out = vec![f64::NEG_INFINITY; n * c];
        let mut argmax = vec![0usize; n * c];
        {
            let v = self.value();
            for s in 0..n {
                for i in s * seg..(s + 1) * seg {
                    let row = &v[i * c..(i + 1) * c];
                    for j in 0..c {
                        if row[j] > out[s * c + j] {
                            out[s * c + j] = row[j];
                            argmax[s * c + j] = i;
                        }
                    }
                }
            }
        }
        Ok(self.unary(n, c, out, Op::MaxPoolSegments { x: self.id, argmax }))
    }

    pub fn transpose(&self) -> Var<'t> {
        let (r, c) = self.shape();
        let mut out = vec![0.0; r * c];
        {
            let v = self.value();
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = v[i * c + j];
                }
            }
        }
        self.unary(c, r, out, Op::Transpose(self.id))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var<'t>> {
        let (r, c) = self.shape();
        if start >= end || end > c {
            return Err(Error::Domain(format!("column slice {start}..{end} of {c} columns")));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(r * w);
        {
            let v = self.value();
            for row in v.chunks(c) {
                out.extend_from_slice(&row[start..end]);
            }
        }
        Ok(self.unary(r, w, out, Op::SliceCols(self.id, start)))
    }

    /// Sum of all entries as a 1x1 var.
    pub fn sum(&self) -> Var<'t> {
        let s = self.value().iter().sum();
        self.unary(1, 1, vec![s], Op::Sum(self.id))
    }

    pub fn mean(&self) -> Var<'t> {
        let v = self.value();
        let s = v.iter().sum::<f64>() / v.len() as f64;
        drop(v);
        self.unary(1, 1, vec![s], Op::Mean(self.id))
    }

    /// Sum over each row: `[r, c] -> [r, 1]`.
    pub fn sum_rows(&self) -> Var<'t> {
        let (r, c) = self.shape();
        let out = self.value().chunks(c).map(|row| row.iter().sum()).collect();
        self.unary(r, 1, out, Op::SumRows(self.id))
    }

    /// Gathers rows by index; indices may repeat.
    pub fn gather_rows(&self, index: &[usize]) -> Result<Var<'t>> {
        let (r, c) = self.shape();
        if let Some(&bad) = index.iter().find(|&&i| i >= r) {
            return Err(Error::Domain(format!("row index {bad} out of range for {r} rows")));
        }
        let mut out = Vec::with_capacity(index.len() * c);
        {
            let v = self.value();
            for &i in index {
                out.extend_from_slice(&v[i * c..(i + 1) * c]);
            }
        }
        Ok(self.unary(index.len(), c, out, Op::GatherRows(self.id, index.to_vec())))
    }

    /// Selects entries by flat index into a `k x 1` column.
    pub fn pick(&self, flat_index: &[usize]) -> Result<Var<'t>> {
        let len = self.rows() * self.cols();
        if let Some(&bad) = flat_index.iter().find(|&&i| i >= len) {
            return Err(Error::Domain(format!("flat index {bad} out of range for {len} entries")));
        }
        let out = {
            let v = self.value();
            flat_index.iter().map(|&i| v[i]).collect()
        };
        Ok(self.unary(flat_index.len(), 1, out, Op::Pick(self.id, flat_index.to_vec())))
    }

    /// Euclidean norm of every row: `[r, c] -> [r, 1]`. The subgradient at a
    /// zero row is zero.
    pub fn row_norm(&self) -> Var<'t> {
        let (r, c) = self.shape();
        let out = self
            .value()
            .chunks(c)
            .map(|row| row.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        self.unary(r, 1, out, Op::RowNorm(self.id))
    }

    /// Each row divided by `max(|row|, eps)`. Rows at or below `eps` are
    /// only scaled, never blown up.
    pub fn l2_normalize_rows(&self, eps: f64) -> Var<'t> {
        let (r, c) = self.shape();
        let mut out = self.to_vec();
        let mut norms = Vec::with_capacity(r);
        let mut clamped = Vec::with_capacity(r);
        for row in out.chunks_mut(c) {
            let len = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            let n = if len > eps { len } else { eps };
            norms.push(n);
            clamped.push(len <= eps);
            for x in row.iter_mut() {
                *x /= n;
            }
        }
        self.unary(r, c, out, Op::L2NormalizeRows { x: self.id, norms, clamped })
    }

    /// Rotation matrices (row-major, 9 columns) of `[n, 4]` quaternions
    /// `(w, x, y, z)`, which should already be unit length.
    pub fn quat_to_rotmat(&self) -> Result<Var<'t>> {
        let (r, c) = self.shape();
        if c != 4 {
            return Err(shape_err("quat_to_rotmat", (r, c), (r, 4)));
        }
        let out = self
            .value()
            .chunks(4)
            .flat_map(|q| {
                let m = crate::geometry::quat_to_matrix([q[0], q[1], q[2], q[3]]);
                m.into_iter().flatten()
            })
            .collect();
        Ok(self.unary(r, 9, out, Op::QuatToRotmat(self.id)))
    }

    /// Applies per-part rotations (`[n, 9]`) and optional translations
    /// (`[n, 3]`) to constant points laid out as `n` blocks of `per_part` rows.
    pub fn rigid_transform(
        &self,
        trans: Option<&Var<'t>>,
        points: Arc<Vec<f64>>,
        per_part: usize,
    ) -> Result<Var<'t>> {
        let (n, c) = self.shape();
        if c != 9 {
            return Err(shape_err("rigid_transform", (n, c), (n, 9)));
        }
        if let Some(t) = trans {
            if t.shape() != (n, 3) {
                return Err(shape_err("rigid_transform", (n, 3), t.shape()));
            }
        }
        if points.len() != n * per_part * 3 {
            return Err(Error::Domain(format!(
                "expected {} point coordinates, got {}",
                n * per_part * 3,
                points.len()
            )));
        }
        let mut out = vec![0.0; n * per_part * 3];
        {
            let nodes = self.tape.nodes.borrow();
            let rot = &nodes[self.id].value;
            let tv = trans.map(|t| &nodes[t.id].value);
            for i in 0..n {
                let r = &rot[i * 9..i * 9 + 9];
                let t = tv.map(|t| [t[i * 3], t[i * 3 + 1], t[i * 3 + 2]]).unwrap_or([0.0; 3]);
                for p in 0..per_part {
                    let k = (i * per_part + p) * 3;
                    let (x, y, z) = (points[k], points[k + 1], points[k + 2]);
                    out[k] = r[0] * x + r[1] * y + r[2] * z + t[0];
                    out[k + 1] = r[3] * x + r[4] * y + r[5] * z + t[1];
                    out[k + 2] = r[6] * x + r[7] * y + r[8] * z + t[2];
                }
            }
        }
        let ids: Vec<usize> = std::iter::once(self.id).chain(trans.map(|t| t.id)).collect();
        let rg = self.tape.needs(&ids);
        Ok(self.tape.push(
            n * per_part,
            3,
            out,
            Op::RigidTransform {
                rot: self.id,
                trans: trans.map(|t| t.id),
                points,
                per_part,
            },
            rg,
        ))
    }

    /// Chamfer distance per segment: `self` holds `s` blocks of `seg_a`
    /// points, `other` holds `s` blocks of `seg_b` points; returns `[s, 1]`.
    pub fn chamfer_segments(&self, other: &Var<'t>, seg_a: usize, seg_b: usize) -> Result<Var<'t>> {
        let (ra, ca) = self.shape();
        let (rb, cb) = other.shape();
        if ca != 3 || cb != 3 || seg_a == 0 || seg_b == 0 || ra % seg_a != 0 || rb % seg_b != 0 {
            return Err(shape_err("chamfer_segments", (ra, ca), (rb, cb)));
        }
        let s = ra / seg_a;
        if rb / seg_b != s {
            return Err(shape_err("chamfer_segments", (ra, ca), (rb, cb)));
        }
        let mut out = vec![0.0; s];
        let mut nn_ab = vec![0usize; ra];
        let mut nn_ba = vec![0usize; rb];
        {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].value;
            let b = &nodes[other.id].value;
            for k in 0..s {
                let ab = nearest(a, b, k * seg_a, seg_a, k * seg_b, seg_b, &mut nn_ab);
                let ba = nearest(b, a, k * seg_b, seg_b, k * seg_a, seg_a, &mut nn_ba);
                out[k] = ab / seg_a as f64 + ba / seg_b as f64;
            }
        }
        let rg = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(
            s,
            1,
            out,
            Op::ChamferSegments {
                a: self.id,
                b: other.id,
                seg_a,
                seg_b,
                nn_ab,
                nn_ba,
            },
            rg,
        ))
    }
}

/// Sum over `from[f0..f0+nf]` of the squared distance to the nearest point in
/// `to[t0..t0+nt]`; records the nearest (global) indices.
fn nearest(from: &[f64], to: &[f64], f0: usize, nf: usize, t0: usize, nt: usize, nn: &mut [usize]) -> f64 {
    let mut total = 0.0;
    for i in f0..f0 + nf {
        let (x, y, z) = (from[i * 3], from[i * 3 + 1], from[i * 3 + 2]);
        let mut best = f64::INFINITY;
        let mut arg = t0;
        for j in t0..t0 + nt {
            let dx = x - to[j * 3];
            let dy = y - to[j * 3 + 1];
            let dz = z - to[j * 3 + 2];
            let d = dx * dx + dy * dy + dz * dz;
            if d < best {
                best = d;
                arg = j;
            }
        }
        nn[i] = arg;
        total += best;
    }
    total
}

/// Concatenates along columns; all inputs must have the same row count.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Domain("concat of zero tensors".into()))?;
    let tape = first.tape;
    let r = first.rows();
    let mut total = 0;
    for p in parts {
        if p.rows() != r {
            return Err(shape_err("concat_cols", first.shape(), p.shape()));
        }
        total += p.cols();
    }
    let mut out = vec![0.0; r * total];
    {
        let nodes = tape.nodes.borrow();
        let mut off = 0;
        for p in parts {
            let n = &nodes[p.id];
            for i in 0..r {
                out[i * total + off..i * total + off + n.cols]
                    .copy_from_slice(&n.value[i * n.cols..(i + 1) * n.cols]);
            }
            off += n.cols;
        }
    }
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let rg = tape.needs(&ids);
    Ok(tape.push(r, total, out, Op::ConcatCols(ids), rg))
}

/// Concatenates along rows; all inputs must have the same column count.
pub fn concat_rows<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Domain("concat of zero tensors".into()))?;
    let tape = first.tape;
    let c = first.cols();
    let mut rows = 0;
    let mut out = Vec::new();
    {
        let nodes = tape.nodes.borrow();
        for p in parts {
            let n = &nodes[p.id];
            if n.cols != c {
                return Err(shape_err("concat_rows", first.shape(), (n.rows, n.cols)));
            }
            rows += n.rows;
            out.extend_from_slice(&n.value);
        }
    }
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let rg = tape.needs(&ids);
    Ok(tape.push(rows, c, out, Op::ConcatRows(ids), rg))
}
