//! Left-looking sparse LU with threshold partial pivoting.
//!
//! Columns are visited in an approximate-minimum-degree order computed on the
//! pattern of `M + Mᵀ`; within a column the diagonal entry is kept as pivot
//! when it is within [`DIAG_PREFERENCE`] of the largest candidate. This keeps
//! banded and structurally symmetric shifted matrices at their natural fill.

use std::sync::atomic::{AtomicUsize, Ordering};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::amd;
use faer::sparse::SymbolicSparseColMat;
use faer::{c64, Mat, MatRef};

use super::SparseMat;
use crate::dense::DenseMat;
use crate::error::{Error, Result};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
const DIAG_PREFERENCE: f64 = 0.1;

static FACTORIZATIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of sparse factorizations performed by this process so far.
pub fn factorization_count() -> usize {
    FACTORIZATIONS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FillStats {
    pub nnz_matrix: usize,
    pub nnz_l: usize,
    pub nnz_u: usize,
}

/// Reusable factorization `P·M·Q = L·U`.
///
/// `L` is unit lower triangular with its diagonal stored first in each
/// column; `U` stores its diagonal last. Both use pivot-order row indices.
#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    shift: Option<c64>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<c64>,
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<c64>,
    /// original row → pivot position
    pinv: Vec<usize>,
    /// pivot position → original column
    q: Vec<usize>,
    stats: FillStats,
}

pub fn factorize(m: &SparseMat) -> Result<Factorization> {
    factorize_impl(m, None)
}

/// Factorizes `m`, recording the shift `s` it was formed at.
pub fn factorize_at(m: &SparseMat, s: c64) -> Result<Factorization> {
    factorize_impl(m, Some(s))
}

fn factorize_impl(m: &SparseMat, shift: Option<c64>) -> Result<Factorization> {
    if !m.is_square() {
        return Err(Error::shape(format!("cannot factorize a {}x{} matrix", m.nrows(), m.ncols())));
    }
    FACTORIZATIONS.fetch_add(1, Ordering::Relaxed);
    let n = m.nrows();
    let q = fill_reducing_order(m);

    let mut l_ptr = Vec::with_capacity(n + 1);
    let mut l_idx: Vec<usize> = Vec::with_capacity(4 * m.nnz() + n);
    let mut l_val: Vec<c64> = Vec::with_capacity(4 * m.nnz() + n);
    let mut u_ptr = Vec::with_capacity(n + 1);
    let mut u_idx: Vec<usize> = Vec::with_capacity(4 * m.nnz() + n);
    let mut u_val: Vec<c64> = Vec::with_capacity(4 * m.nnz() + n);

    const UNSET: usize = usize::MAX;
    let mut pinv = vec![UNSET; n];
    let mut x = vec![ZERO; n];
    let mut reach = Reach::new(n);

    for k in 0..n {
        l_ptr.push(l_idx.len());
        u_ptr.push(u_idx.len());
        let col = q[k];

        // x = L \ M[:, col] restricted to the reachable set
        let top = reach.compute(&l_ptr, &l_idx, m, col, &pinv);
        for &i in &reach.xi[top..] {
            x[i] = ZERO;
        }
        let mut col_max = 0.0f64;
        for (i, v) in m.col(col) {
            x[i] = v;
            col_max = col_max.max(v.norm());
        }
        for &j in &reach.xi[top..] {
            let jj = pinv[j];
            if jj == UNSET {
                continue;
            }
            let xj = x[j];
            // unit diagonal is stored first
            for p in l_ptr[jj] + 1..l_end(&l_ptr, jj, l_idx.len()) {
                x[l_idx[p]] -= l_val[p] * xj;
            }
        }

        let mut ipiv = UNSET;
        let mut best = -1.0f64;
        for &i in &reach.xi[top..] {
            if pinv[i] == UNSET {
                let t = x[i].norm();
                if t > best {
                    best = t;
                    ipiv = i;
                }
            } else {
                u_idx.push(pinv[i]);
                u_val.push(x[i]);
            }
        }
        if ipiv == UNSET || !(best > f64::EPSILON * col_max) || !best.is_finite() {
            return Err(Error::SingularPivot { column: col });
        }
        if pinv[col] == UNSET && x[col].norm() >= DIAG_PREFERENCE * best {
            ipiv = col;
        }
        let pivot = x[ipiv];
        u_idx.push(k);
        u_val.push(pivot);
        pinv[ipiv] = k;
        l_idx.push(ipiv);
        l_val.push(c64::new(1.0, 0.0));
        let inv = pivot.inv();
        for &i in &reach.xi[top..] {
            if pinv[i] == UNSET {
                l_idx.push(i);
                l_val.push(x[i] * inv);
            }
            x[i] = ZERO;
        }
    }
    l_ptr.push(l_idx.len());
    u_ptr.push(u_idx.len());
    for i in l_idx.iter_mut() {
        *i = pinv[*i];
    }

    let stats = FillStats { nnz_matrix: m.nnz(), nnz_l: l_idx.len(), nnz_u: u_idx.len() };
    Ok(Factorization { n, shift, l_ptr, l_idx, l_val, u_ptr, u_idx, u_val, pinv, q, stats })
}

/// End of column `j` of the partially built L; the current column has no
/// closing pointer yet.
fn l_end(l_ptr: &[usize], j: usize, len: usize) -> usize {
    if j + 1 < l_ptr.len() {
        l_ptr[j + 1]
    } else {
        len
    }
}

/// Workspace for the depth-first reach computation of a sparse triangular solve.
struct Reach {
    xi: Vec<usize>,
    stack: Vec<usize>,
    pstack: Vec<usize>,
    marked: Vec<bool>,
}

impl Reach {
    fn new(n: usize) -> Self {
        Self { xi: vec![0; n], stack: vec![0; n], pstack: vec![0; n], marked: vec![false; n] }
    }

    /// Topologically ordered set of rows reachable from the pattern of
    /// `b[:, col]` through the graph of `L`; stored in `xi[top..]`.
    fn compute(&mut self, l_ptr: &[usize], l_idx: &[usize], b: &SparseMat, col: usize, pinv: &[usize]) -> usize {
        let n = self.xi.len();
        let mut top = n;
        for (i, _) in b.col(col) {
            if !self.marked[i] {
                top = self.dfs(i, l_ptr, l_idx, top, pinv);
            }
        }
        for &i in &self.xi[top..] {
            self.marked[i] = false;
        }
        top
    }

    fn dfs(&mut self, start: usize, l_ptr: &[usize], l_idx: &[usize], mut top: usize, pinv: &[usize]) -> usize {
        let mut head = 0usize;
        self.stack[0] = start;
        let len = l_idx.len();
        loop {
            let j = self.stack[head];
            let jnew = pinv[j];
            if !self.marked[j] {
                self.marked[j] = true;
                self.pstack[head] = if jnew == usize::MAX { 0 } else { l_ptr[jnew] };
            }
            let end = if jnew == usize::MAX { 0 } else { l_end(l_ptr, jnew, len) };
            let mut done = true;
            let mut p = self.pstack[head];
            while p < end {
                let i = l_idx[p];
                if !self.marked[i] {
                    self.pstack[head] = p;
                    head += 1;
                    self.stack[head] = i;
                    done = false;
                    break;
                }
                p += 1;
            }
            if done {
                top -= 1;
                self.xi[top] = j;
                if head == 0 {
                    return top;
                }
                head -= 1;
            }
        }
    }
}

fn fill_reducing_order(m: &SparseMat) -> Vec<usize> {
    let n = m.nrows();
    if n <= 2 {
        return (0..n).collect();
    }
    // pattern of M + Mᵀ without the diagonal
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for (i, _) in m.col(j) {
            if i != j {
                cols[j].push(i);
                cols[i].push(j);
            }
        }
    }
    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut row_idx = Vec::new();
    col_ptr.push(0usize);
    for c in cols.iter_mut() {
        c.sort_unstable();
        c.dedup();
        row_idx.extend_from_slice(c);
        col_ptr.push(row_idx.len());
    }
    let nnz = row_idx.len();
    let pattern = SymbolicSparseColMat::<usize>::new_checked(n, n, col_ptr, None, row_idx);
    let mut perm = vec![0usize; n];
    let mut perm_inv = vec![0usize; n];
    let mut mem = MemBuffer::new(amd::order_scratch::<usize>(n, nnz));
    match amd::order(&mut perm, &mut perm_inv, pattern.as_ref(), amd::Control::default(), MemStack::new(&mut mem)) {
        Ok(_) => perm,
        Err(_) => (0..n).collect(),
    }
}

impl Factorization {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shift(&self) -> Option<c64> {
        self.shift
    }

    pub fn stats(&self) -> FillStats {
        self.stats
    }

    /// `M⁻¹·rhs`, or `(Mᴴ)⁻¹·rhs` when `adjoint` is set.
    pub fn solve_multi(&self, rhs: MatRef<'_, c64>, adjoint: bool) -> Result<DenseMat> {
        if rhs.nrows() != self.n {
            return Err(Error::shape(format!(
                "right-hand side has {} rows, factorization is {}x{}",
                rhs.nrows(),
                self.n,
                self.n
            )));
        }
        let mut out = Mat::zeros(self.n, rhs.ncols());
        let mut work = vec![ZERO; self.n];
        for c in 0..rhs.ncols() {
            let b = rhs.col(c);
            if adjoint {
                self.solve_adjoint_col(b.iter().copied(), &mut work);
                for i in 0..self.n {
                    out[(i, c)] = work[self.pinv[i]];
                }
            } else {
                for i in 0..self.n {
                    work[self.pinv[i]] = b[i];
                }
                self.solve_col_permuted(&mut work);
                for k in 0..self.n {
                    out[(self.q[k], c)] = work[k];
                }
            }
        }
        Ok(out)
    }

    /// In place: `work ← U⁻¹ L⁻¹ work` (pivot-order indices throughout).
    fn solve_col_permuted(&self, work: &mut [c64]) {
        let n = self.n;
        for j in 0..n {
            let xj = work[j];
            if xj == ZERO {
                continue;
            }
            for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                work[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for j in (0..n).rev() {
            let last = self.u_ptr[j + 1] - 1;
            work[j] /= self.u_val[last];
            let xj = work[j];
            if xj == ZERO {
                continue;
            }
            for p in self.u_ptr[j]..last {
                work[self.u_idx[p]] -= self.u_val[p] * xj;
            }
        }
    }

    /// `work ← L⁻ᴴ U⁻ᴴ Qᵀ b` in pivot order.
    fn solve_adjoint_col(&self, b: impl Iterator<Item = c64>, work: &mut [c64]) {
        let n = self.n;
        let b: Vec<c64> = b.collect();
        for k in 0..n {
            work[k] = b[self.q[k]];
        }
        for j in 0..n {
            let last = self.u_ptr[j + 1] - 1;
            let mut acc = work[j];
            for p in self.u_ptr[j]..last {
                acc -= self.u_val[p].conj() * work[self.u_idx[p]];
            }
            work[j] = acc / self.u_val[last].conj();
        }
        for j in (0..n).rev() {
            let mut acc = work[j];
            for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                acc -= self.l_val[p].conj() * work[self.l_idx[p]];
            }
            work[j] = acc;
        }
    }
}
