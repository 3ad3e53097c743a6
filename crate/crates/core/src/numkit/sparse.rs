//! Compressed sparse row matrices used as constant left operands.

use super::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Keeps exactly the nonzero entries of `dense`.
    pub fn from_dense(dense: &Tensor) -> Self {
        let mut indptr = Vec::with_capacity(dense.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..dense.rows() {
            for (c, &v) in dense.row(r).iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            rows: dense.rows(),
            cols: dense.cols(),
            indptr,
            indices,
            values,
        }
    }

    /// Builds from per-row `(column, value)` lists; columns within a row must
    /// be strictly increasing and below `cols`.
    pub fn from_row_entries(cols: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for w in row.windows(2) {
                assert!(w[0].0 < w[1].0, "columns must be strictly increasing");
            }
            for &(c, v) in row {
                assert!(c < cols, "column {c} out of range {cols}");
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `r` in ascending column order.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                t.set(r, c, v);
            }
        }
        t
    }

    /// `self · b`.
    pub(crate) fn matmul(&self, b: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(self.rows, b.cols());
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                let src = b.row(c);
                for (o, &x) in out.row_mut(r).iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        out
    }

    /// `selfᵀ · g`.
    pub(crate) fn transpose_matmul(&self, g: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(self.cols, g.cols());
        for r in 0..self.rows {
            let src = g.row(r);
            for (c, v) in self.row_entries(r) {
                for (o, &x) in out.row_mut(c).iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        out
    }
}
