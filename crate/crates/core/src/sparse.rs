//! Compressed sparse row matrices used as constant propagation operators.

use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(col, value)` lists; columns are sorted per row.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                debug_assert!(c < cols);
                indices.push(c);
                values.push(v);
            }
            offsets.push(indices.len());
        }
        Self {
            rows: n,
            cols,
            offsets,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
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

    /// Iterates the stored `(col, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                t.set(r, c, v);
            }
        }
        t
    }

    /// `self · x` for a dense `x`.
    pub fn matmul_dense(&self, x: &Tensor) -> Result<Tensor> {
        if x.rows() != self.cols {
            return dim_err(
                "spmm",
                format!("{}x{} · {:?}", self.rows, self.cols, x.shape()),
            );
        }
        let k = x.cols();
        let mut out = Tensor::zeros(self.rows, k);
        for r in 0..self.rows {
            let o = out.row_mut(r);
            for (c, v) in self.row(r) {
                for (dst, src) in o.iter_mut().zip(x.row(c)) {
                    *dst += v * src;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · g` for a dense `g`.
    pub fn transpose_matmul_dense(&self, g: &Tensor) -> Result<Tensor> {
        if g.rows() != self.rows {
            return dim_err(
                "spmm_t",
                format!("({}x{})ᵀ · {:?}", self.rows, self.cols, g.shape()),
            );
        }
        let k = g.cols();
        let mut out = Tensor::zeros(self.cols, k);
        for r in 0..self.rows {
            let src = g.row(r).to_vec();
            for (c, v) in self.row(r) {
                for (dst, s) in out.row_mut(c).iter_mut().zip(&src) {
                    *dst += v * s;
                }
            }
        }
        Ok(out)
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                sums[c] += v;
            }
        }
        sums
    }

    /// `self · v` for a plain vector.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).map(|(c, a)| a * v[c]).sum())
            .collect()
    }

    pub fn permute(&self, perm: &[usize]) -> Self {
        // new index of old node i is perm[i]
        let mut rows = vec![Vec::new(); self.rows];
        for r in 0..self.rows {
            rows[perm[r]] = self.row(r).map(|(c, v)| (perm[c], v)).collect();
        }
        Self::from_rows(self.cols, rows)
    }
}
