//! Compressed sparse column storage, shifted sparse LU and Matrix Market I/O.

mod lu;
mod market;

pub use lu::{factorization_count, factorize, factorize_at, Factorization, FillStats};
pub use market::{read_matrix_market, write_matrix_market, write_matrix_market_dense};

use std::ops::Range;

use faer::{c64, Col, ColRef, Mat, MatRef};

use crate::dense::{DenseMat, DenseVec};
use crate::error::{Error, Result};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// Complex matrix in compressed sparse column form.
///
/// Row indices are strictly increasing inside each column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<c64>,
}

impl SparseMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, col_ptr: vec![0; ncols + 1], row_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![c64::new(1.0, 0.0); n])
    }

    pub fn from_diag(diag: &[c64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate positions
    /// are rejected.
    pub fn try_from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, c64)]) -> Result<Self> {
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_unstable_by_key(|&t| (entries[t].1, entries[t].0));
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &t in &order {
            let (i, j, v) = entries[t];
            if i >= nrows || j >= ncols {
                return Err(Error::invalid(format!("entry ({i}, {j}) outside a {nrows}x{ncols} matrix")));
            }
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::invalid(format!("non-finite entry at ({i}, {j})")));
            }
            if last == Some((i, j)) {
                return Err(Error::invalid(format!("duplicate entry at ({i}, {j})")));
            }
            last = Some((i, j));
            col_ptr[j + 1] += 1;
            row_idx.push(i);
            values.push(v);
        }
        for j in 0..ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(Self { nrows, ncols, col_ptr, row_idx, values })
    }

    /// Sparse copy of a dense matrix; exact zeros are not stored.
    pub fn from_dense(m: MatRef<'_, c64>) -> Self {
        let mut col_ptr = Vec::with_capacity(m.ncols() + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != ZERO {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self { nrows: m.nrows(), ncols: m.ncols(), col_ptr, row_idx, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[c64] {
        &self.values
    }

    /// `(row, value)` pairs of column `j`.
    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, c64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        match self.row_idx[r.clone()].binary_search(&i) {
            Ok(p) => self.values[r.start + p],
            Err(_) => ZERO,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, c64)> {
        (0..self.ncols).flat_map(|j| self.col(j).map(move |(i, v)| (i, j, v))).collect()
    }

    pub fn to_dense(&self) -> DenseMat {
        let mut out = Mat::zeros(self.nrows, self.ncols);
        for j in 0..self.ncols {
            for (i, v) in self.col(j) {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// `self · x` for a dense block `x`.
    pub fn mul_dense(&self, x: MatRef<'_, c64>) -> DenseMat {
        assert_eq!(x.nrows(), self.ncols, "sparse product: inner dimension mismatch");
        let mut out = Mat::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            for j in 0..self.ncols {
                let xj = x[(j, c)];
                if xj == ZERO {
                    continue;
                }
                for (i, v) in self.col(j) {
                    out[(i, c)] += v * xj;
                }
            }
        }
        out
    }

    pub fn mul_col(&self, x: ColRef<'_, c64>) -> DenseVec {
        assert_eq!(x.nrows(), self.ncols, "sparse product: inner dimension mismatch");
        let mut out = Col::zeros(self.nrows);
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == ZERO {
                continue;
            }
            for (i, v) in self.col(j) {
                out[i] += v * xj;
            }
        }
        out
    }

    /// `selfᴴ · x` for a dense block `x`.
    pub fn adjoint_mul_dense(&self, x: MatRef<'_, c64>) -> DenseMat {
        assert_eq!(x.nrows(), self.nrows, "sparse adjoint product: inner dimension mismatch");
        let mut out = Mat::zeros(self.ncols, x.ncols());
        for c in 0..x.ncols() {
            for j in 0..self.ncols {
                let mut acc = ZERO;
                for (i, v) in self.col(j) {
                    acc += v.conj() * x[(i, c)];
                }
                out[(j, c)] = acc;
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut t: Vec<(usize, usize, c64)> =
            self.triplets().into_iter().map(|(i, j, v)| (j, i, v.conj())).collect();
        t.sort_unstable_by_key(|e| (e.1, e.0));
        Self::try_from_triplets(self.ncols, self.nrows, &t).expect("adjoint of a valid matrix is valid")
    }

    /// Induced ∞-norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        self.row_abs_sums().into_iter().fold(0.0, f64::max)
    }

    pub(crate) fn row_abs_sums(&self) -> Vec<f64> {
        let mut rows = vec![0.0; self.nrows];
        for (&i, v) in self.row_idx.iter().zip(&self.values) {
            rows[i] += v.norm();
        }
        rows
    }

    pub fn norm_max(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    pub fn scaled(&self, alpha: c64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `self − σ·I`; the diagonal is stored explicitly even where it becomes zero.
    pub fn shifted(&self, sigma: c64) -> Self {
        assert!(self.is_square(), "shift of a non-square matrix");
        let eye = Self::identity(self.nrows);
        Self::linear_combination_with_pattern(self.nrows, self.ncols, &[(c64::new(1.0, 0.0), self), (-sigma, &eye)])
    }

    /// `Σ cᵢ·Mᵢ`. Terms with a zero coefficient are skipped; the result keeps
    /// the union pattern of the remaining terms.
    pub fn linear_combination(nrows: usize, ncols: usize, terms: &[(c64, &SparseMat)]) -> Self {
        let live: Vec<(c64, &SparseMat)> = terms.iter().copied().filter(|(c, _)| *c != ZERO).collect();
        Self::linear_combination_with_pattern(nrows, ncols, &live)
    }

    fn linear_combination_with_pattern(nrows: usize, ncols: usize, terms: &[(c64, &SparseMat)]) -> Self {
        for (_, m) in terms {
            assert!(m.nrows == nrows && m.ncols == ncols, "linear combination of mismatched shapes");
        }
        let mut acc = vec![ZERO; nrows];
        let mut seen = vec![false; nrows];
        let mut touched = Vec::new();
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..ncols {
            for (c, m) in terms {
                for (i, v) in m.col(j) {
                    if !seen[i] {
                        seen[i] = true;
                        touched.push(i);
                    }
                    acc[i] += *c * v;
                }
            }
            touched.sort_unstable();
            for &i in &touched {
                row_idx.push(i);
                values.push(acc[i]);
                acc[i] = ZERO;
                seen[i] = false;
            }
            touched.clear();
            col_ptr.push(row_idx.len());
        }
        Self { nrows, ncols, col_ptr, row_idx, values }
    }

    /// Sub-block `self[rows, cols]` as a sparse matrix.
    pub fn submatrix(&self, rows: Range<usize>, cols: Range<usize>) -> Self {
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for j in cols.clone() {
            for (i, v) in self.col(j) {
                if rows.contains(&i) {
                    row_idx.push(i - rows.start);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self { nrows: rows.len(), ncols: cols.len(), col_ptr, row_idx, values }
    }

    /// Sub-block `self[rows, cols]` as a dense matrix.
    pub fn dense_block(&self, rows: Range<usize>, cols: Range<usize>) -> DenseMat {
        let mut out = Mat::zeros(rows.len(), cols.len());
        for (jj, j) in cols.enumerate() {
            for (i, v) in self.col(j) {
                if rows.contains(&i) {
                    out[(i - rows.start, jj)] = v;
                }
            }
        }
        out
    }

    /// Symmetric permutation `P·M·Pᵀ` where new index `i` takes old index `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if !self.is_square() || perm.len() != self.nrows {
            return Err(Error::shape("permutation length must match a square matrix"));
        }
        let mut inv = vec![usize::MAX; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            if old >= perm.len() || inv[old] != usize::MAX {
                return Err(Error::invalid("permutation is not a bijection"));
            }
            inv[old] = new;
        }
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (inv[i], inv[j], v)).collect();
        Self::try_from_triplets(self.nrows, self.ncols, &t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    #[test]
    fn triplets_are_sorted_and_checked() {
        let m = SparseMat::try_from_triplets(3, 3, &[(2, 0, c(3.0)), (0, 0, c(1.0)), (1, 2, c(2.0))]).unwrap();
        assert_eq!(m.col_ptr(), &[0, 2, 2, 3]);
        assert_eq!(m.row_idx(), &[0, 2, 1]);
        assert!(SparseMat::try_from_triplets(2, 2, &[(0, 0, c(1.0)), (0, 0, c(1.0))]).is_err());
        assert!(SparseMat::try_from_triplets(2, 2, &[(2, 0, c(1.0))]).is_err());
    }

    #[test]
    fn products_match_dense() {
        let m = SparseMat::try_from_triplets(
            3,
            2,
            &[(0, 0, c64::new(1.0, 2.0)), (2, 0, c(-1.0)), (1, 1, c64::new(0.0, 3.0))],
        )
        .unwrap();
        let x = Mat::from_fn(2, 2, |i, j| c64::new(i as f64 + 1.0, j as f64));
        let d = m.to_dense();
        let diff = m.mul_dense(x.as_ref()) - &d * &x;
        assert!(crate::dense::norm_max(diff.as_ref()) < 1e-15);
        let y = Mat::from_fn(3, 1, |i, _| c64::new(1.0, -(i as f64)));
        let diff = m.adjoint_mul_dense(y.as_ref()) - d.adjoint() * &y;
        assert!(crate::dense::norm_max(diff.as_ref()) < 1e-15);
        assert_eq!(m.adjoint().to_dense(), d.adjoint().to_owned());
    }

    #[test]
    fn shifted_keeps_explicit_diagonal() {
        let a = SparseMat::from_diag(&[c(1.0), c(3.0)]);
        let s = a.shifted(c(1.0));
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.get(0, 0), c(0.0));
        assert_eq!(s.get(1, 1), c(2.0));
    }

    #[test]
    fn blocks_and_permutation() {
        let t: Vec<_> = (0..4).flat_map(|i| (0..4).map(move |j| (i, j, c((4 * i + j) as f64)))).collect();
        let m = SparseMat::try_from_triplets(4, 4, &t).unwrap();
        let b = m.submatrix(1..3, 2..4);
        assert_eq!(b.get(0, 0), c(6.0));
        assert_eq!(m.dense_block(3..4, 0..2)[(0, 1)], c(13.0));
        let p = m.permuted(&[3, 2, 1, 0]).unwrap();
        assert_eq!(p.get(0, 0), c(15.0));
        assert_eq!(p.get(0, 3), c(12.0));
        assert!(m.permuted(&[0, 0, 1, 2]).is_err());
    }
}
