//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] is created per forward pass. Every operation appends a node
//! holding its output value; [`Tape::backward`] walks the nodes in exact
//! reverse order and returns the gradients of every leaf that requires one.

use std::cell::{Ref, RefCell};
use std::sync::Arc;

use rand::Rng;

use super::tensor::{matmul_nn, matmul_nt, matmul_tn, softmax_rows};
use super::{ParamId, ParamStore, SparseMatrix, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    SparseMatMul(Arc<SparseMatrix>, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Mul(usize, usize),
    MaskMul(usize, Tensor),
    Scale(usize, f64),
    Relu(usize),
    SoftmaxRows(usize),
    LogClamped(usize, f64),
    LayerNormRows(usize, Vec<f64>),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize),
    GatherRows(usize, Vec<usize>),
    Reshape(usize),
    Sum(usize),
    Trace(usize),
    FrobeniusNorm(usize),
    DivScalar(usize, usize),
    Im2col {
        input: usize,
        block: usize,
        kernel: usize,
    },
    BlockMaxRows {
        input: usize,
        argmax: Vec<usize>,
    },
    BlockMatMulNT {
        a: usize,
        b: usize,
        block: usize,
    },
    BlockMatMul {
        p: usize,
        v: usize,
        block: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<(usize, ParamId)>>,
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients {
    leaves: Vec<Option<Tensor>>,
    params: Vec<(usize, ParamId)>,
    visited: Vec<usize>,
}

impl Gradients {
    /// Gradient of a leaf; `None` for leaves that do not require one.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(v.id).and_then(Option::as_ref)
    }

    /// Adds every parameter leaf gradient into the store's accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(node, pid) in &self.params {
            if let Some(g) = &self.leaves[node] {
                store.grad_mut(pid).add_assign(g);
            }
        }
    }

    /// Node ids in the order backward processed them.
    pub fn visit_order(&self) -> &[usize] {
        &self.visited
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

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(
                format!("output of {op:?}").chars().take(80).collect(),
            ));
        }
        let mut nodes = self.nodes.borrow_mut();
        let (rows, cols) = value.shape();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var {
            id: nodes.len() - 1,
            rows,
            cols,
        })
    }

    fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let (rows, cols) = value.shape();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var {
            id: nodes.len() - 1,
            rows,
            cols,
        }
    }

    /// Leaf without gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Leaf with gradient, not tied to a parameter store.
    pub fn variable(&self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf bound to a stored parameter; its gradient is routed back by
    /// [`Gradients::accumulate_into`].
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.leaf(store.value(id).clone(), true);
        self.params.borrow_mut().push((v.id, id));
        v
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.id].value)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.id].value.get(0, 0)
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn unary(&self, a: Var, f: impl FnOnce(&Tensor) -> Tensor, op: Op) -> Result<Var> {
        let out = f(&self.nodes.borrow()[a.id].value);
        let rg = self.needs(&[a.id]);
        self.push(out, op, rg)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        if a.cols != b.rows {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", a.shape(), b.shape()),
            ));
        }
        let out = {
            let n = self.nodes.borrow();
            matmul_nn(&n[a.id].value, &n[b.id].value)
        };
        self.push(out, Op::MatMul(a.id, b.id), self.needs(&[a.id, b.id]))
    }

    /// Constant sparse matrix times `b`.
    pub fn sparse_matmul(&self, a: &Arc<SparseMatrix>, b: Var) -> Result<Var> {
        if a.cols() != b.rows {
            return Err(Error::shape(
                "sparse_matmul",
                format!("{}x{} by {:?}", a.rows(), a.cols(), b.shape()),
            ));
        }
        let out = a.matmul(&self.nodes.borrow()[b.id].value);
        self.push(
            out,
            Op::SparseMatMul(Arc::clone(a), b.id),
            self.needs(&[b.id]),
        )
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        self.unary(a, Tensor::transpose, Op::Transpose(a.id))
    }

    fn same_shape(op: &'static str, a: Var, b: Var) -> Result<()> {
        if a.shape() != b.shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", a.shape(), b.shape()),
            ));
        }
        Ok(())
    }

    fn binary(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let out = {
            let n = self.nodes.borrow();
            n[a.id].value.zip_map(&n[b.id].value, f)
        };
        self.push(out, op, self.needs(&[a.id, b.id]))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        Self::same_shape("add", a, b)?;
        self.binary(a, b, |x, y| x + y, Op::Add(a.id, b.id))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        Self::same_shape("sub", a, b)?;
        self.binary(a, b, |x, y| x - y, Op::Sub(a.id, b.id))
    }

    /// Hadamard product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        Self::same_shape("mul", a, b)?;
        self.binary(a, b, |x, y| x * y, Op::Mul(a.id, b.id))
    }

    /// Adds a `1×n` row vector to every row of `a`.
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var> {
        if row.rows != 1 || row.cols != a.cols {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + {:?}", a.shape(), row.shape()),
            ));
        }
        let out = {
            let n = self.nodes.borrow();
            let mut out = n[a.id].value.clone();
            let r = n[row.id].value.row(0);
            for i in 0..out.rows() {
                for (o, b) in out.row_mut(i).iter_mut().zip(r) {
                    *o += b;
                }
            }
            out
        };
        self.push(out, Op::AddRow(a.id, row.id), self.needs(&[a.id, row.id]))
    }

    /// Multiplies every row of `a` elementwise by a `1×n` row vector.
    pub fn mul_row(&self, a: Var, row: Var) -> Result<Var> {
        if row.rows != 1 || row.cols != a.cols {
            return Err(Error::shape(
                "mul_row",
                format!("{:?} * {:?}", a.shape(), row.shape()),
            ));
        }
        let out = {
            let n = self.nodes.borrow();
            let mut out = n[a.id].value.clone();
            let r = n[row.id].value.row(0);
            for i in 0..out.rows() {
                for (o, g) in out.row_mut(i).iter_mut().zip(r) {
                    *o *= g;
                }
            }
            out
        };
        self.push(out, Op::MulRow(a.id, row.id), self.needs(&[a.id, row.id]))
    }

    pub fn scale(&self, a: Var, s: f64) -> Result<Var> {
        self.unary(a, |t| t.scale(s), Op::Scale(a.id, s))
    }

    pub fn relu(&self, a: Var) -> Result<Var> {
        self.unary(a, |t| t.map(|v| v.max(0.0)), Op::Relu(a.id))
    }

    pub fn softmax_rows(&self, a: Var) -> Result<Var> {
        self.unary(a, softmax_rows, Op::SoftmaxRows(a.id))
    }

    /// `ln(max(a, floor))` elementwise.
    pub fn log_clamped(&self, a: Var, floor: f64) -> Result<Var> {
        self.unary(
            a,
            |t| t.map(|v| v.max(floor).ln()),
            Op::LogClamped(a.id, floor),
        )
    }

    /// Per-row standardization `(x − mean)/√(var + eps)` without affine terms.
    pub fn layer_norm_rows(&self, a: Var, eps: f64) -> Result<Var> {
        let (out, inv_std) = {
            let n = self.nodes.borrow();
            let x = &n[a.id].value;
            let mut out = x.clone();
            let mut inv = Vec::with_capacity(x.rows());
            let width = x.cols() as f64;
            for r in 0..x.rows() {
                let row = out.row_mut(r);
                let mean = row.iter().sum::<f64>() / width;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width;
                let is = 1.0 / (var + eps).sqrt();
                for v in row.iter_mut() {
                    *v = (*v - mean) * is;
                }
                inv.push(is);
            }
            (out, inv)
        };
        self.push(out, Op::LayerNormRows(a.id, inv_std), self.needs(&[a.id]))
    }

    /// Inverted dropout: in training mode zeroes entries with probability
    /// `rate` and rescales survivors by `1/(1 − rate)`.
    pub fn dropout<R: Rng + ?Sized>(
        &self,
        a: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Param(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mut mask = Tensor::zeros(a.rows, a.cols);
        for m in mask.data_mut() {
            if rng.random::<f64>() >= rate {
                *m = keep;
            }
        }
        let out = self.nodes.borrow()[a.id].value.zip_map(&mask, |x, m| x * m);
        self.push(out, Op::MaskMul(a.id, mask), self.needs(&[a.id]))
    }

    /// Elementwise product with a fixed (non-differentiable) mask.
    pub fn mask_mul(&self, a: Var, mask: Tensor) -> Result<Var> {
        if mask.shape() != a.shape() {
            return Err(Error::shape(
                "mask_mul",
                format!("{:?} vs {:?}", a.shape(), mask.shape()),
            ));
        }
        let out = self.nodes.borrow()[a.id].value.zip_map(&mask, |x, m| x * m);
        self.push(out, Op::MaskMul(a.id, mask), self.needs(&[a.id]))
    }

    /// Stacks columns left to right, preserving argument order.
    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols", "no inputs"));
        }
        let out = {
            let n = self.nodes.borrow();
            let refs: Vec<&Tensor> = parts.iter().map(|p| &n[p.id].value).collect();
            Tensor::concat_cols(&refs)?
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = self.needs(&ids);
        self.push(out, Op::ConcatCols(ids), rg)
    }

    pub fn slice_cols(&self, a: Var, start: usize, len: usize) -> Result<Var> {
        if start + len > a.cols || len == 0 {
            return Err(Error::shape(
                "slice_cols",
                format!("[{start}, {}) of {} cols", start + len, a.cols),
            ));
        }
        self.unary(
            a,
            |t| {
                let mut out = Tensor::zeros(t.rows(), len);
                for r in 0..t.rows() {
                    out.row_mut(r)
                        .copy_from_slice(&t.row(r)[start..start + len]);
                }
                out
            },
            Op::SliceCols(a.id, start),
        )
    }

    pub fn gather_rows(&self, a: Var, idx: &[usize]) -> Result<Var> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= a.rows) {
            return Err(Error::shape(
                "gather_rows",
                format!("row {bad} of {}", a.rows),
            ));
        }
        self.unary(
            a,
            |t| t.select_rows(idx),
            Op::GatherRows(a.id, idx.to_vec()),
        )
    }

    /// Row-major reinterpretation to a new shape with the same element count.
    pub fn reshape(&self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        if rows * cols != a.rows * a.cols {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> ({rows}, {cols})", a.shape()),
            ));
        }
        self.unary(
            a,
            |t| Tensor::from_vec(rows, cols, t.data().to_vec()).expect("checked"),
            Op::Reshape(a.id),
        )
    }

    pub fn sum(&self, a: Var) -> Result<Var> {
        self.unary(a, |t| Tensor::scalar(t.sum()), Op::Sum(a.id))
    }

    pub fn trace(&self, a: Var) -> Result<Var> {
        if a.rows != a.cols {
            return Err(Error::shape(
                "trace",
                format!("{:?} is not square", a.shape()),
            ));
        }
        self.unary(a, |t| Tensor::scalar(t.trace()), Op::Trace(a.id))
    }

    pub fn frobenius_norm(&self, a: Var) -> Result<Var> {
        self.unary(
            a,
            |t| Tensor::scalar(t.frobenius_norm()),
            Op::FrobeniusNorm(a.id),
        )
    }

    /// Divides every entry of `a` by the `1×1` value `s`.
    pub fn div_scalar(&self, a: Var, s: Var) -> Result<Var> {
        if s.shape() != (1, 1) {
            return Err(Error::shape(
                "div_scalar",
                format!("divisor {:?}", s.shape()),
            ));
        }
        let out = {
            let n = self.nodes.borrow();
            let d = n[s.id].value.get(0, 0);
            n[a.id].value.map(|v| v / d)
        };
        self.push(out, Op::DivScalar(a.id, s.id), self.needs(&[a.id, s.id]))
    }

    /// Sliding windows over consecutive row blocks. `a` stacks blocks of
    /// `block` rows (positions) by `C` columns (channels); the output row for
    /// block `b`, position `p` holds rows `p..p+kernel` of that block laid out
    /// as `offset * C + channel`.
    pub fn im2col(&self, a: Var, block: usize, kernel: usize) -> Result<Var> {
        if block == 0 || !a.rows.is_multiple_of(block) || kernel == 0 || kernel > block {
            return Err(Error::shape(
                "im2col",
                format!("{} rows, block {block}, kernel {kernel}", a.rows),
            ));
        }
        let out = {
            let n = self.nodes.borrow();
            im2col_forward(&n[a.id].value, block, kernel)
        };
        self.push(
            out,
            Op::Im2col {
                input: a.id,
                block,
                kernel,
            },
            self.needs(&[a.id]),
        )
    }

    /// Column-wise maximum within each block of `block` rows.
    pub fn block_max_rows(&self, a: Var, block: usize) -> Result<Var> {
        if block == 0 || !a.rows.is_multiple_of(block) {
            return Err(Error::shape(
                "block_max_rows",
                format!("{} rows, block {block}", a.rows),
            ));
        }
        let (out, argmax) = {
            let n = self.nodes.borrow();
            let x = &n[a.id].value;
            let blocks = x.rows() / block;
            let c = x.cols();
            let mut out = Tensor::zeros(blocks, c);
            let mut argmax = vec![0usize; blocks * c];
            for b in 0..blocks {
                for j in 0..c {
                    let mut best = b * block;
                    for r in b * block + 1..(b + 1) * block {
                        if x.get(r, j) > x.get(best, j) {
                            best = r;
                        }
                    }
                    out.set(b, j, x.get(best, j));
                    argmax[b * c + j] = best;
                }
            }
            (out, argmax)
        };
        self.push(
            out,
            Op::BlockMaxRows {
                input: a.id,
                argmax,
            },
            self.needs(&[a.id]),
        )
    }

    /// Per-block `a_b · b_bᵀ` for blocks of `block` rows; output is
    /// `(blocks·block) × block`.
    pub fn block_matmul_nt(&self, a: Var, b: Var, block: usize) -> Result<Var> {
        if a.shape() != b.shape() || block == 0 || !a.rows.is_multiple_of(block) {
            return Err(Error::shape(
                "block_matmul_nt",
                format!("{:?}, {:?}, block {block}", a.shape(), b.shape()),
            ));
        }
        let out = {
            let n = self.nodes.borrow();
            let (x, y) = (&n[a.id].value, &n[b.id].value);
            let mut out = Tensor::zeros(x.rows(), block);
            for r in 0..x.rows() {
                let base = r / block * block;
                for j in 0..block {
                    let v = x
                        .row(r)
                        .iter()
                        .zip(y.row(base + j))
                        .map(|(p, q)| p * q)
                        .sum();
                    out.set(r, j, v);
                }
            }
            out
        };
        self.push(
            out,
            Op::BlockMatMulNT {
                a: a.id,
                b: b.id,
                block,
            },
            self.needs(&[a.id, b.id]),
        )
    }

    /// Per-block `p_b · v_b` where `p` is `(blocks·block) × block`.
    pub fn block_matmul(&self, p: Var, v: Var, block: usize) -> Result<Var> {
        if p.cols != block || p.rows != v.rows || block == 0 || !p.rows.is_multiple_of(block) {
            return Err(Error::shape(
                "block_matmul",
                format!("{:?}, {:?}, block {block}", p.shape(), v.shape()),
            ));
        }
        let out = {
            let n = self.nodes.borrow();
            let (pm, vm) = (&n[p.id].value, &n[v.id].value);
            let mut out = Tensor::zeros(vm.rows(), vm.cols());
            for r in 0..pm.rows() {
                let base = r / block * block;
                for j in 0..block {
                    let w = pm.get(r, j);
                    if w == 0.0 {
                        continue;
                    }
                    let src = vm.row(base + j).to_vec();
                    for (o, s) in out.row_mut(r).iter_mut().zip(&src) {
                        *o += w * s;
                    }
                }
            }
            out
        };
        self.push(
            out,
            Op::BlockMatMul {
                p: p.id,
                v: v.id,
                block,
            },
            self.needs(&[p.id, v.id]),
        )
    }

    /// Reverse sweep from a `1×1` output.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss has shape {:?}", loss.shape()),
            ));
        }
        let nodes = self.nodes.borrow();
        let count = nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..count).map(|_| None).collect();
        let mut leaves: Vec<Option<Tensor>> = (0..count).map(|_| None).collect();
        let mut visited = Vec::new();
        grads[loss.id] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            visited.push(id);
            let Some(g) = grads[id].take() else {
                if matches!(node.op, Op::Leaf) {
                    let (r, c) = node.value.shape();
                    leaves[id] = Some(Tensor::zeros(r, c));
                }
                continue;
            };
            backprop(&nodes, id, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                leaves[id] = Some(g);
            }
        }
        // Leaves recorded after the loss cannot influence it.
        for id in loss.id + 1..count {
            if nodes[id].requires_grad && matches!(nodes[id].op, Op::Leaf) {
                let (r, c) = nodes[id].value.shape();
                leaves[id] = Some(Tensor::zeros(r, c));
            }
        }
        Ok(Gradients {
            leaves,
            params: self.params.borrow().clone(),
            visited,
        })
    }
}

fn im2col_forward(x: &Tensor, block: usize, kernel: usize) -> Tensor {
    let c = x.cols();
    let blocks = x.rows() / block;
    let out_block = block - kernel + 1;
    let mut out = Tensor::zeros(blocks * out_block, kernel * c);
    for b in 0..blocks {
        for p in 0..out_block {
            let dst = out.row_mut(b * out_block + p);
            for o in 0..kernel {
                dst[o * c..(o + 1) * c].copy_from_slice(x.row(b * block + p + o));
            }
        }
    }
    out
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn backprop(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |i: usize| &nodes[i].value;
    let rg = |i: usize| nodes[i].requires_grad;
    match &nodes[id].op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            if rg(a) {
                accumulate(grads, a, matmul_nt(g, val(b)));
            }
            if rg(b) {
                accumulate(grads, b, matmul_tn(val(a), g));
            }
        }
        Op::SparseMatMul(a, b) => accumulate(grads, *b, a.transpose_matmul(g)),
        &Op::Transpose(a) => accumulate(grads, a, g.transpose()),
        &Op::Add(a, b) => {
            if rg(a) {
                accumulate(grads, a, g.clone());
            }
            if rg(b) {
                accumulate(grads, b, g.clone());
            }
        }
        &Op::Sub(a, b) => {
            if rg(a) {
                accumulate(grads, a, g.clone());
            }
            if rg(b) {
                accumulate(grads, b, g.scale(-1.0));
            }
        }
        &Op::AddRow(a, row) => {
            if rg(a) {
                accumulate(grads, a, g.clone());
            }
            if rg(row) {
                let mut gr = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, v) in gr.row_mut(0).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(grads, row, gr);
            }
        }
        &Op::MulRow(a, row) => {
            let w = val(row);
            if rg(a) {
                let mut ga = g.clone();
                for r in 0..ga.rows() {
                    for (o, s) in ga.row_mut(r).iter_mut().zip(w.row(0)) {
                        *o *= s;
                    }
                }
                accumulate(grads, a, ga);
            }
            if rg(row) {
                let x = val(a);
                let mut gr = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for ((o, gv), xv) in gr.row_mut(0).iter_mut().zip(g.row(r)).zip(x.row(r)) {
                        *o += gv * xv;
                    }
                }
                accumulate(grads, row, gr);
            }
        }
        &Op::Mul(a, b) => {
            if rg(a) {
                accumulate(grads, a, g.zip_map(val(b), |x, y| x * y));
            }
            if rg(b) {
                accumulate(grads, b, g.zip_map(val(a), |x, y| x * y));
            }
        }
        Op::MaskMul(a, mask) => accumulate(grads, *a, g.zip_map(mask, |x, m| x * m)),
        &Op::Scale(a, s) => accumulate(grads, a, g.scale(s)),
        &Op::Relu(a) => accumulate(
            grads,
            a,
            g.zip_map(val(a), |gv, x| if x > 0.0 { gv } else { 0.0 }),
        ),
        &Op::SoftmaxRows(a) => {
            let y = &nodes[id].value;
            let mut ga = Tensor::zeros(y.rows(), y.cols());
            for r in 0..y.rows() {
                let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(p, q)| p * q).sum();
                for ((o, gv), yv) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                    *o = yv * (gv - dot);
                }
            }
            accumulate(grads, a, ga);
        }
        &Op::LogClamped(a, floor) => accumulate(
            grads,
            a,
            g.zip_map(val(a), |gv, x| if x > floor { gv / x } else { 0.0 }),
        ),
        Op::LayerNormRows(a, inv_std) => {
            let y = &nodes[id].value;
            let width = y.cols() as f64;
            let mut ga = Tensor::zeros(y.rows(), y.cols());
            for r in 0..y.rows() {
                let (gr, yr) = (g.row(r), y.row(r));
                let mean_g = gr.iter().sum::<f64>() / width;
                let mean_gy = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / width;
                for ((o, gv), yv) in ga.row_mut(r).iter_mut().zip(gr).zip(yr) {
                    *o = inv_std[r] * (gv - mean_g - yv * mean_gy);
                }
            }
            accumulate(grads, *a, ga);
        }
        Op::ConcatCols(ids) => {
            let mut off = 0;
            for &p in ids {
                let w = val(p).cols();
                if rg(p) {
                    let mut gp = Tensor::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                    }
                    accumulate(grads, p, gp);
                }
                off += w;
            }
        }
        &Op::SliceCols(a, start) => {
            let (rows, cols) = val(a).shape();
            let mut ga = Tensor::zeros(rows, cols);
            for r in 0..rows {
                ga.row_mut(r)[start..start + g.cols()].copy_from_slice(g.row(r));
            }
            accumulate(grads, a, ga);
        }
        Op::GatherRows(a, idx) => {
            let (rows, cols) = val(*a).shape();
            let mut ga = Tensor::zeros(rows, cols);
            for (o, &i) in idx.iter().enumerate() {
                for (d, s) in ga.row_mut(i).iter_mut().zip(g.row(o)) {
                    *d += s;
                }
            }
            accumulate(grads, *a, ga);
        }
        &Op::Reshape(a) => {
            let (rows, cols) = val(a).shape();
            accumulate(
                grads,
                a,
                Tensor::from_vec(rows, cols, g.data().to_vec()).expect("reshape"),
            );
        }
        &Op::Sum(a) => {
            let (rows, cols) = val(a).shape();
            accumulate(grads, a, Tensor::filled(rows, cols, g.get(0, 0)));
        }
        &Op::Trace(a) => {
            let n = val(a).rows();
            let mut ga = Tensor::zeros(n, n);
            for i in 0..n {
                ga.set(i, i, g.get(0, 0));
            }
            accumulate(grads, a, ga);
        }
        &Op::FrobeniusNorm(a) => {
            let norm = nodes[id].value.get(0, 0);
            let x = val(a);
            let ga = if norm > 0.0 {
                x.scale(g.get(0, 0) / norm)
            } else {
                Tensor::zeros(x.rows(), x.cols())
            };
            accumulate(grads, a, ga);
        }
        &Op::DivScalar(a, s) => {
            let d = val(s).get(0, 0);
            if rg(a) {
                accumulate(grads, a, g.scale(1.0 / d));
            }
            if rg(s) {
                let dot: f64 = g.data().iter().zip(val(a).data()).map(|(p, q)| p * q).sum();
                accumulate(grads, s, Tensor::scalar(-dot / (d * d)));
            }
        }
        &Op::Im2col {
            input,
            block,
            kernel,
        } => {
            let (rows, c) = val(input).shape();
            let mut ga = Tensor::zeros(rows, c);
            let out_block = block - kernel + 1;
            for b in 0..rows / block {
                for p in 0..out_block {
                    let src = g.row(b * out_block + p);
                    for o in 0..kernel {
                        let dst = ga.row_mut(b * block + p + o);
                        for (d, s) in dst.iter_mut().zip(&src[o * c..(o + 1) * c]) {
                            *d += s;
                        }
                    }
                }
            }
            accumulate(grads, input, ga);
        }
        Op::BlockMaxRows { input, argmax } => {
            let (rows, c) = val(*input).shape();
            let mut ga = Tensor::zeros(rows, c);
            for b in 0..g.rows() {
                for j in 0..c {
                    let r = argmax[b * c + j];
                    ga.set(r, j, ga.get(r, j) + g.get(b, j));
                }
            }
            accumulate(grads, *input, ga);
        }
        &Op::BlockMatMulNT { a, b, block } => {
            let (x, y) = (val(a), val(b));
            let mut gx = Tensor::zeros(x.rows(), x.cols());
            let mut gy = Tensor::zeros(y.rows(), y.cols());
            for r in 0..x.rows() {
                let base = r / block * block;
                for j in 0..block {
                    let w = g.get(r, j);
                    if w == 0.0 {
                        continue;
                    }
                    for c in 0..x.cols() {
                        gx.set(r, c, gx.get(r, c) + w * y.get(base + j, c));
                        gy.set(base + j, c, gy.get(base + j, c) + w * x.get(r, c));
                    }
                }
            }
            if rg(a) {
                accumulate(grads, a, gx);
            }
            if rg(b) {
                accumulate(grads, b, gy);
            }
        }
        &Op::BlockMatMul { p, v, block } => {
            let (pm, vm) = (val(p), val(v));
            let mut gp = Tensor::zeros(pm.rows(), pm.cols());
            let mut gv = Tensor::zeros(vm.rows(), vm.cols());
            for r in 0..pm.rows() {
                let base = r / block * block;
                for j in 0..block {
                    let dot: f64 = g
                        .row(r)
                        .iter()
                        .zip(vm.row(base + j))
                        .map(|(x, y)| x * y)
                        .sum();
                    gp.set(r, j, dot);
                    let w = pm.get(r, j);
                    for c in 0..vm.cols() {
                        gv.set(base + j, c, gv.get(base + j, c) + w * g.get(r, c));
                    }
                }
            }
            if rg(p) {
                accumulate(grads, p, gp);
            }
            if rg(v) {
                accumulate(grads, v, gv);
            }
        }
    }
}
