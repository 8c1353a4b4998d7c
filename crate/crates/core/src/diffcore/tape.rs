//! Eager reverse-mode tape.
//!
//! Every operation computes its value immediately and appends a node;
//! nodes only reference earlier nodes, so the node vector is already in
//! topological order and [`Tape::backward`] is a single reverse sweep.
//! Parameter leaves borrow their values from a [`ParamSet`] instead of
//! copying them.

use super::{Gradients, ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Additive mask applied to padded positions before normalization.
pub const MASK_VALUE: f64 = -1e30;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul { a: Var, b: Var, transpose_b: bool },
    Add(Var, Var),
    Mul(Var, Var),
    Concat(Vec<Var>),
    Lookup { table: Var, ids: Vec<usize> },
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    LogSoftmax { x: Var, valid: usize },
    Select { x: Var, idx: Vec<usize> },
    Sum(Var),
    Scale(Var, f64),
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    // Empty for parameter leaves; read through the ParamSet instead.
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || rows * cols == value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0];
        match n.op {
            Op::Param(id) => self.params.get(id).data(),
            _ => &n.value,
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let (r, c) = self.shape(v);
        Tensor::matrix(r, c, self.value(v).to_vec()).expect("node shape")
    }

    pub fn constant(&mut self, t: &Tensor) -> Result<Var> {
        let (r, c) = t.dims2()?;
        Ok(self.push(r, c, t.data().to_vec(), Op::Constant))
    }

    pub fn constant_matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if rows * cols != data.len() {
            return Err(Error::Shape {
                op: "constant",
                left: vec![rows, cols],
                right: vec![data.len()],
            });
        }
        Ok(self.push(rows, cols, data, Op::Constant))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(rows, cols, vec![0.0; rows * cols], Op::Constant)
    }

    /// Leaf for a trainable parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if let Some(v) = self.param_vars[id.index()] {
            return Ok(v);
        }
        let (r, c) = self.params.get(id).dims2()?;
        let v = self.push(r, c, Vec::new(), Op::Param(id));
        self.param_vars[id.index()] = Some(v);
        Ok(v)
    }

    /// `a · b` for `(m×k)·(k×n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                let brow = &bv[p * n..(p + 1) * n];
                for (o, y) in row.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        Ok(self.push(
            m,
            n,
            out,
            Op::MatMul {
                a,
                b,
                transpose_b: false,
            },
        ))
    }

    /// `a · bᵀ` for `(m×k)·(n×k)ᵀ`; scores a batch of rows against a set
    /// of candidate vectors.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        if k != k2 {
            return Err(self.mismatch("matmul_nt", a, b));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &bv[j * k..(j + 1) * k];
                out[i * n + j] = dot(arow, brow);
            }
        }
        Ok(self.push(
            m,
            n,
            out,
            Op::MatMul {
                a,
                b,
                transpose_b: true,
            },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("add", a, b));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let (r, c) = self.shape(a);
        Ok(self.push(r, c, out, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("mul", a, b));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let (r, c) = self.shape(a);
        Ok(self.push(r, c, out, Op::Mul(a, b)))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Shape {
                op: "concat",
                left: vec![],
                right: vec![],
            });
        };
        let rows = self.shape(first).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(self.mismatch("concat", first, p));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        Ok(self.push(rows, cols, out, Op::Concat(parts.to_vec())))
    }

    /// Gathers rows `ids` of `table` into an `ids.len() × cols` matrix.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = self.shape(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::OutOfRange {
                what: "embedding table",
                index: bad,
                len: rows,
            });
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            out.extend_from_slice(&tv[i * cols..(i + 1) * cols]);
        }
        Ok(self.push(
            ids.len(),
            cols,
            out,
            Op::Lookup {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Repeats a single-row value `n` times (a lookup of row 0).
    pub fn repeat_rows(&mut self, row: Var, n: usize) -> Result<Var> {
        if self.shape(row).0 != 1 {
            return Err(Error::Shape {
                op: "repeat_rows",
                left: vec![self.shape(row).0, self.shape(row).1],
                right: vec![1],
            });
        }
        self.embedding_lookup(row, &vec![0; n])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.exp()).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Exp(a))
    }

    /// Row-wise log-softmax where only the first `valid` columns take part
    /// in normalization; the rest receive an additive [`MASK_VALUE`].
    pub fn log_softmax(&mut self, x: Var, valid: usize) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if valid > cols {
            return Err(Error::Shape {
                op: "log_softmax",
                left: vec![rows, cols],
                right: vec![valid],
            });
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let row = &xv[r * cols..(r + 1) * cols];
            let shifted: Vec<f64> = row
                .iter()
                .enumerate()
                .map(|(j, &v)| if j < valid { v } else { v + MASK_VALUE })
                .collect();
            let max = shifted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + shifted.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            out.extend(shifted.iter().map(|v| v - lse));
        }
        Ok(self.push(rows, cols, out, Op::LogSoftmax { x, valid }))
    }

    /// Picks flat (row-major) positions of `x` into a `1 × idx.len()` row.
    pub fn select(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let len = self.value(x).len();
        if let Some(&bad) = idx.iter().find(|&&i| i >= len) {
            return Err(Error::OutOfRange {
                what: "select",
                index: bad,
                len,
            });
        }
        let xv = self.value(x);
        let out = idx.iter().map(|&i| xv[i]).collect();
        Ok(self.push(1, idx.len(), out, Op::Select { x, idx: idx.to_vec() }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * factor).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Scale(a, factor))
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> Error {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        Error::Shape {
            op,
            left: vec![ar, ac],
            right: vec![br, bc],
        }
    }

    /// Reverse sweep from a `1 × 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let mut grads = Gradients::for_params(self.params);
        self.backward_into(loss, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Tape::backward`] but accumulates into existing buffers.
    pub fn backward_into(&self, loss: Var, out: &mut Gradients) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            let (r, c) = self.shape(loss);
            return Err(Error::Shape {
                op: "backward",
                left: vec![r, c],
                right: vec![1, 1],
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    out.accumulate(*id, self.params.get(*id).shape(), &g);
                }
                &Op::MatMul { a, b, transpose_b } => {
                    let (m, k) = self.shape(a);
                    let n = node.cols;
                    let (av, bv) = (self.value(a), self.value(b));
                    if self.needs_grad(a) {
                        let ga = slot(&mut grads, a, m * k);
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            let garow = &mut ga[i * k..(i + 1) * k];
                            if transpose_b {
                                // dA[i,:] += Σ_j g[i,j] · B[j,:]
                                for (j, &gij) in grow.iter().enumerate() {
                                    if gij != 0.0 {
                                        axpy(garow, gij, &bv[j * k..(j + 1) * k]);
                                    }
                                }
                            } else {
                                // dA[i,p] += g[i,:] · B[p,:]
                                for (p, o) in garow.iter_mut().enumerate() {
                                    *o += dot(grow, &bv[p * n..(p + 1) * n]);
                                }
                            }
                        }
                    }
                    if self.needs_grad(b) {
                        let gb = slot(&mut grads, b, k * n);
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            let arow = &av[i * k..(i + 1) * k];
                            if transpose_b {
                                // dB[j,:] += g[i,j] · A[i,:]
                                for (j, &gij) in grow.iter().enumerate() {
                                    if gij != 0.0 {
                                        axpy(&mut gb[j * k..(j + 1) * k], gij, arow);
                                    }
                                }
                            } else {
                                // dB[p,:] += A[i,p] · g[i,:]
                                for (p, &aip) in arow.iter().enumerate() {
                                    if aip != 0.0 {
                                        axpy(&mut gb[p * n..(p + 1) * n], aip, grow);
                                    }
                                }
                            }
                        }
                    }
                }
                &Op::Add(a, b) => {
                    for v in [a, b] {
                        if self.needs_grad(v) {
                            add_into(slot(&mut grads, v, g.len()), &g);
                        }
                    }
                }
                &Op::Mul(a, b) => {
                    if self.needs_grad(a) {
                        let bv = self.value(b);
                        let ga = slot(&mut grads, a, g.len());
                        for ((o, gi), y) in ga.iter_mut().zip(&g).zip(bv) {
                            *o += gi * y;
                        }
                    }
                    if self.needs_grad(b) {
                        let av = self.value(a);
                        let gb = slot(&mut grads, b, g.len());
                        for ((o, gi), x) in gb.iter_mut().zip(&g).zip(av) {
                            *o += gi * x;
                        }
                    }
                }
                Op::Concat(parts) => {
                    let cols = node.cols;
                    let mut offset = 0;
                    for &p in parts {
                        let (pr, pc) = self.shape(p);
                        if self.needs_grad(p) {
                            let gp = slot(&mut grads, p, pr * pc);
                            for r in 0..pr {
                                add_into(&mut gp[r * pc..(r + 1) * pc], &g[r * cols + offset..r * cols + offset + pc]);
                            }
                        }
                        offset += pc;
                    }
                }
                Op::Lookup { table, ids } => {
                    if self.needs_grad(*table) {
                        let (tr, tc) = self.shape(*table);
                        let gt = slot(&mut grads, *table, tr * tc);
                        for (row, &id) in ids.iter().enumerate() {
                            add_into(&mut gt[id * tc..(id + 1) * tc], &g[row * tc..(row + 1) * tc]);
                        }
                    }
                }
                &Op::Sigmoid(a) => {
                    if self.needs_grad(a) {
                        let ga = slot(&mut grads, a, g.len());
                        for ((o, gi), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                            *o += gi * y * (1.0 - y);
                        }
                    }
                }
                &Op::Tanh(a) => {
                    if self.needs_grad(a) {
                        let ga = slot(&mut grads, a, g.len());
                        for ((o, gi), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                            *o += gi * (1.0 - y * y);
                        }
                    }
                }
                &Op::Exp(a) => {
                    if self.needs_grad(a) {
                        let ga = slot(&mut grads, a, g.len());
                        for ((o, gi), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                            *o += gi * y;
                        }
                    }
                }
                &Op::LogSoftmax { x, valid } => {
                    // Masked entries carry no gradient in either direction.
                    if self.needs_grad(x) {
                        let cols = node.cols;
                        let gx = slot(&mut grads, x, g.len());
                        for r in 0..node.rows {
                            let gr = &g[r * cols..r * cols + valid];
                            let yr = &node.value[r * cols..r * cols + valid];
                            let total: f64 = gr.iter().sum();
                            for j in 0..valid {
                                gx[r * cols + j] += gr[j] - yr[j].exp() * total;
                            }
                        }
                    }
                }
                Op::Select { x, idx } => {
                    if self.needs_grad(*x) {
                        let len = self.value(*x).len();
                        let gx = slot(&mut grads, *x, len);
                        for (gi, &j) in g.iter().zip(idx) {
                            gx[j] += gi;
                        }
                    }
                }
                &Op::Sum(a) => {
                    if self.needs_grad(a) {
                        let len = self.value(a).len();
                        let ga = slot(&mut grads, a, len);
                        for o in ga.iter_mut() {
                            *o += g[0];
                        }
                    }
                }
                &Op::Scale(a, factor) => {
                    if self.needs_grad(a) {
                        let ga = slot(&mut grads, a, g.len());
                        for (o, gi) in ga.iter_mut().zip(&g) {
                            *o += gi * factor;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    // Constants never need gradient buffers.
    fn needs_grad(&self, v: Var) -> bool {
        !matches!(self.nodes[v.0].op, Op::Constant)
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn axpy(dst: &mut [f64], alpha: f64, x: &[f64]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d += alpha * v;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
