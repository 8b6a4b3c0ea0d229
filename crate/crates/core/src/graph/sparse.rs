use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Compressed sparse row matrix. Column indices are strictly increasing within
/// each row and explicit zeros are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets in any order. Duplicate
    /// coordinates are summed; entries that end up zero are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= n_rows {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    len: n_rows,
                });
            }
            if c >= n_cols {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    len: n_cols,
                });
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0; n_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut iter = entries.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if (r2, c2) != (r, c) {
                    break;
                }
                v += v2;
                iter.next();
            }
            if v != 0.0 {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let triplets = (0..self.n_rows).flat_map(|i| self.row(i).map(move |(j, v)| (j, i, v)));
        Self::from_triplets(self.n_cols, self.n_rows, triplets.collect::<Vec<_>>())
            .expect("transpose of a valid matrix is valid")
    }

    /// Sparse-dense product `self * dense`.
    pub fn spmm(&self, dense: &Matrix) -> Result<Matrix> {
        if self.n_cols != dense.rows() {
            return Err(Error::ShapeMismatch {
                op: "spmm",
                left: (self.n_rows, self.n_cols),
                right: dense.shape(),
            });
        }
        let mut out = Matrix::zeros(self.n_rows, dense.cols());
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                let src = dense.row(j);
                for (o, &s) in out.row_mut(i).iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * dense`, scattering row by row so no transpose is built.
    pub fn spmm_transposed(&self, dense: &Matrix) -> Result<Matrix> {
        if self.n_rows != dense.rows() {
            return Err(Error::ShapeMismatch {
                op: "spmm_transposed",
                left: (self.n_rows, self.n_cols),
                right: dense.shape(),
            });
        }
        let mut out = Matrix::zeros(self.n_cols, dense.cols());
        for i in 0..self.n_rows {
            let src = dense.row(i);
            for (j, v) in self.row(i) {
                for (o, &s) in out.row_mut(j).iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        Ok(out)
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols
            && (0..self.n_rows).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }
}
