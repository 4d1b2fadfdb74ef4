//! Dense complex kernels for the small reduced problems.
//!
//! Everything here operates on column-major [`DenseMat`] values and is a pure
//! function of its inputs. The generalized eigensolver is the QZ in [`qz`];
//! SVD, QR and LU come from `faer`.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{c64, Col, ColRef, Mat, MatRef};

use crate::error::{Error, Result};

mod qz;

pub type DenseMat = Mat<c64>;
pub type DenseVec = Col<c64>;

/// Default relative threshold under which a new basis direction is dropped.
pub const DEFAULT_DROP_TOL: f64 = 1e-10;

/// Number of projection sweeps against the existing basis.
const REORTH_PASSES: usize = 2;

/// Finite generalized eigenpairs of a pencil `(A, B)`.
#[derive(Debug, Clone)]
pub struct PencilEigs {
    pub values: Vec<c64>,
    /// Column `i` is the right eigenvector of `values[i]`, scaled to unit ∞-norm.
    pub vectors: DenseMat,
    pub infinite_count: usize,
}

#[derive(Debug, Clone)]
pub struct SingularTriple {
    pub sigma: f64,
    pub u: DenseVec,
    pub v: DenseVec,
}

/// Induced ∞-norm (maximum absolute row sum).
pub fn norm_inf(m: MatRef<'_, c64>) -> f64 {
    let mut rows = vec![0.0f64; m.nrows()];
    for j in 0..m.ncols() {
        for (i, r) in rows.iter_mut().enumerate() {
            *r += m[(i, j)].norm();
        }
    }
    rows.into_iter().fold(0.0, f64::max)
}

/// Largest entry magnitude.
pub fn norm_max(m: MatRef<'_, c64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].norm());
        }
    }
    out
}

pub fn vec_norm_inf(v: ColRef<'_, c64>) -> f64 {
    v.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn identity(n: usize) -> DenseMat {
    Mat::from_fn(n, n, |i, j| if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) })
}

/// All finite generalized eigenvalues of `A - λB` with right eigenvectors.
///
/// An eigenvalue `α/β` counts as finite iff `|β| > 1e3·ε·‖B‖_∞`.
pub fn pencil_eigs(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<PencilEigs> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::shape(format!(
            "pencil needs two square matrices of equal size, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if n == 0 {
        return Ok(PencilEigs { values: Vec::new(), vectors: Mat::zeros(0, 0), infinite_count: 0 });
    }
    let schur = qz::generalized_schur(a, b)?;
    let floor = 1e3 * f64::EPSILON * norm_inf(b);
    let mut values = Vec::new();
    let mut keep = Vec::new();
    for i in 0..n {
        if schur.beta(i).norm() > floor {
            values.push(schur.alpha(i) / schur.beta(i));
            keep.push(i);
        }
    }
    let mut vectors = Mat::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let col = schur.eigenvector(i);
        let scale = col.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let scale = if scale > 0.0 { 1.0 / scale } else { 1.0 };
        for (r, z) in col.iter().enumerate() {
            vectors[(r, c)] = z * scale;
        }
    }
    let infinite_count = n - keep.len();
    Ok(PencilEigs { values, vectors, infinite_count })
}

/// Smallest singular value with its left/right singular vectors.
pub fn smallest_singular(m: MatRef<'_, c64>) -> Result<SingularTriple> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::invalid("smallest_singular of an empty matrix"));
    }
    let size = m.nrows().max(m.ncols());
    let svd = m
        .thin_svd()
        .map_err(|_| Error::Decomposition { what: "singular value decomposition", size })?;
    let s = svd.S().column_vector();
    let mut idx = 0;
    for i in 1..s.nrows() {
        if s[i].re < s[idx].re {
            idx = i;
        }
    }
    Ok(SingularTriple {
        sigma: s[idx].re.max(0.0),
        u: svd.U().col(idx).to_owned(),
        v: svd.V().col(idx).to_owned(),
    })
}

/// Only the smallest singular value.
pub fn sigma_min(m: MatRef<'_, c64>) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::invalid("sigma_min of an empty matrix"));
    }
    let size = m.nrows().max(m.ncols());
    let s = m
        .singular_values()
        .map_err(|_| Error::Decomposition { what: "singular value decomposition", size })?;
    Ok(s.into_iter().fold(f64::INFINITY, f64::min).max(0.0))
}

/// Appends to `basis` an orthonormal basis for the part of `new_cols` that is
/// orthogonal to it.
///
/// Each candidate column is projected against the current basis twice
/// (classical Gram-Schmidt with one reorthogonalization). A column is dropped
/// when its norm after projection is below `drop_tol` times its norm before.
pub fn orthonormal_extend(
    basis: Option<MatRef<'_, c64>>,
    new_cols: MatRef<'_, c64>,
    drop_tol: f64,
) -> DenseMat {
    let k = basis.map_or(new_cols.nrows(), |b| b.nrows());
    assert_eq!(new_cols.nrows(), k, "orthonormal_extend: row count mismatch");
    let r0 = basis.map_or(0, |b| b.ncols());

    let mut out: DenseMat = Mat::zeros(k, r0 + new_cols.ncols());
    if let Some(b) = basis {
        out.as_mut().get_mut(.., ..r0).copy_from(b);
    }
    let mut r = r0;
    for j in 0..new_cols.ncols() {
        let mut c: DenseVec = new_cols.col(j).to_owned();
        let before = c.norm_l2();
        if before == 0.0 || !before.is_finite() {
            continue;
        }
        for _ in 0..REORTH_PASSES {
            if r == 0 {
                break;
            }
            let q = out.as_ref().get(.., ..r);
            let h = q.adjoint() * &c;
            c -= q * &h;
        }
        let after = c.norm_l2();
        if after <= drop_tol * before {
            continue;
        }
        let inv = 1.0 / after;
        for i in 0..k {
            out[(i, r)] = c[i] * inv;
        }
        r += 1;
    }
    out.truncate(k, r);
    out
}

/// Solves `M X = RHS`, or `Mᴴ X = RHS` when `adjoint` is set.
pub fn dense_solve(m: MatRef<'_, c64>, rhs: MatRef<'_, c64>, adjoint: bool) -> Result<DenseMat> {
    let n = m.nrows();
    if m.ncols() != n || rhs.nrows() != n {
        return Err(Error::shape(format!(
            "dense_solve: {}x{} matrix with {} right-hand-side rows",
            m.nrows(),
            m.ncols(),
            rhs.nrows()
        )));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, rhs.ncols()));
    }
    let lu = m.partial_piv_lu();
    let u = lu.U();
    let (mut umin, mut umax) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let d = u[(i, i)].norm();
        umin = umin.min(d);
        umax = umax.max(d);
    }
    if !(umin > n as f64 * f64::EPSILON * umax) {
        let cond = if umin > 0.0 { umax / umin } else { f64::INFINITY };
        return Err(Error::Singular { cond });
    }
    Ok(if adjoint { lu.solve_adjoint(rhs) } else { lu.solve(rhs) })
}

/// LU solve without the singularity check; used where a nearly singular
/// matrix is expected (inverse iteration).
pub(crate) fn solve_unchecked(m: MatRef<'_, c64>, rhs: MatRef<'_, c64>) -> DenseMat {
    m.partial_piv_lu().solve(rhs)
}

#[allow(dead_code)]
pub(crate) fn inverse(m: MatRef<'_, c64>) -> DenseMat {
    m.partial_piv_lu().inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    fn from_real(rows: &[&[f64]]) -> DenseMat {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| c(rows[i][j]))
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, cc: usize) -> DenseMat {
        Mat::from_fn(r, cc, |_, _| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn sorted_re(mut v: Vec<c64>) -> Vec<c64> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        v
    }

    #[test]
    fn pencil_diagonal() {
        let a = from_real(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let e = pencil_eigs(a.as_ref(), identity(2).as_ref()).unwrap();
        let v = sorted_re(e.values);
        assert!((v[0] - c(1.0)).norm() < 1e-14 && (v[1] - c(2.0)).norm() < 1e-14);
        assert_eq!(e.infinite_count, 0);
    }

    #[test]
    fn pencil_with_one_infinite_eigenvalue() {
        let a = from_real(&[&[2.0, 1.0], &[1.0, 1.0]]);
        let b = from_real(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let e = pencil_eigs(a.as_ref(), b.as_ref()).unwrap();
        assert_eq!(e.values.len(), 1);
        assert_eq!(e.infinite_count, 1);
        assert!((e.values[0] - c(1.0)).norm() < 1e-13);
    }

    #[test]
    fn pencil_all_infinite() {
        let e = pencil_eigs(identity(2).as_ref(), Mat::<c64>::zeros(2, 2).as_ref()).unwrap();
        assert!(e.values.is_empty());
        assert_eq!(e.infinite_count, 2);
    }

    #[test]
    fn pencil_rejects_bad_shapes() {
        let a = Mat::<c64>::zeros(2, 3);
        assert!(matches!(pencil_eigs(a.as_ref(), a.as_ref()), Err(Error::Shape(_))));
    }

    #[test]
    fn pencil_residuals_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &n in &[3usize, 17, 60, 200] {
            let a = random(&mut rng, n, n);
            let b = random(&mut rng, n, n);
            let e = pencil_eigs(a.as_ref(), b.as_ref()).unwrap();
            let (na, nb) = (norm_inf(a.as_ref()), norm_inf(b.as_ref()));
            for (i, &lam) in e.values.iter().enumerate() {
                let x = e.vectors.col(i);
                assert!((vec_norm_inf(x) - 1.0).abs() < 1e-12);
                let r = &a * x - (&b * x) * faer::Scale(lam);
                let bound = 1e-10 * (na + lam.norm() * nb);
                assert!(vec_norm_inf(r.as_ref()) <= bound, "n={n} residual {}", vec_norm_inf(r.as_ref()));
            }
        }
    }

    #[test]
    fn smallest_singular_examples() {
        let s = smallest_singular(identity(3).as_ref()).unwrap();
        assert!((s.sigma - 1.0).abs() < 1e-14);

        let m = from_real(&[&[3.0, 0.0], &[0.0, 0.5]]);
        let s = smallest_singular(m.as_ref()).unwrap();
        assert!((s.sigma - 0.5).abs() < 1e-14);
        assert!((s.v[1].norm() - 1.0).abs() < 1e-14 && s.v[0].norm() < 1e-14);

        let m = from_real(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(smallest_singular(m.as_ref()).unwrap().sigma < 1e-15);
    }

    #[test]
    fn smallest_singular_triple_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random(&mut rng, 12, 12);
        let s = smallest_singular(m.as_ref()).unwrap();
        let lhs = &m * &s.v;
        let rhs = &s.u * faer::Scale(c(s.sigma));
        assert!(vec_norm_inf((lhs - rhs).as_ref()) < 1e-13);
        assert!((sigma_min(m.as_ref()).unwrap() - s.sigma).abs() < 1e-13);
        for _ in 0..100 {
            let mut w = random(&mut rng, 12, 1).col(0).to_owned();
            let nw = w.norm_l2();
            w *= faer::Scale(c(1.0 / nw));
            assert!(s.sigma <= (&m * &w).norm_l2() + 1e-14);
        }
    }

    #[test]
    fn orthonormal_extend_examples() {
        let v = Col::from_fn(4, |i| c64::new(i as f64 + 1.0, -(i as f64)));
        let pair = Mat::from_fn(4, 2, |i, j| v[i] * c((j + 1) as f64));
        let g = orthonormal_extend(None, pair.as_ref(), DEFAULT_DROP_TOL);
        assert_eq!(g.ncols(), 1);
        assert!((g.col(0).norm_l2() - 1.0).abs() < 1e-14);

        let e1 = Mat::from_fn(3, 1, |i, _| c(if i == 0 { 1.0 } else { 0.0 }));
        let new = Mat::from_fn(3, 1, |i, _| c(if i < 2 { 1.0 } else { 0.0 }));
        let g = orthonormal_extend(Some(e1.as_ref()), new.as_ref(), DEFAULT_DROP_TOL);
        assert_eq!(g.ncols(), 2);
        assert!((g[(1, 1)] - c(1.0)).norm() < 1e-15);
        assert!(g[(0, 1)].norm() < 1e-15 && g[(2, 1)].norm() < 1e-15);
    }

    #[test]
    fn orthonormal_extend_keeps_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = orthonormal_extend(None, random(&mut rng, 300, 20).as_ref(), DEFAULT_DROP_TOL);
        let g = orthonormal_extend(Some(q.as_ref()), random(&mut rng, 300, 15).as_ref(), DEFAULT_DROP_TOL);
        assert_eq!(g.ncols(), 35);
        let gram = g.adjoint() * &g - identity(35);
        assert!(norm_max(gram.as_ref()) <= 1e-12);
        // old columns untouched
        assert!(norm_max((g.as_ref().get(.., ..20) - &q).as_ref()) == 0.0);
    }

    #[test]
    fn dense_solve_examples() {
        let b = from_real(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let x = dense_solve(identity(2).as_ref(), b.as_ref(), false).unwrap();
        assert!(norm_max((x - &b).as_ref()) < 1e-15);

        let m = from_real(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let x = dense_solve(m.as_ref(), from_real(&[&[2.0], &[4.0]]).as_ref(), false).unwrap();
        assert!((x[(0, 0)] - c(1.0)).norm() < 1e-15 && (x[(1, 0)] - c(1.0)).norm() < 1e-15);

        let m = from_real(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let x = dense_solve(m.as_ref(), from_real(&[&[1.0], &[0.0]]).as_ref(), true).unwrap();
        assert!(x[(0, 0)].norm() < 1e-15 && (x[(1, 0)] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn dense_solve_adjoint_is_conjugate_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random(&mut rng, 8, 8);
        let b = random(&mut rng, 8, 2);
        let x = dense_solve(m.as_ref(), b.as_ref(), true).unwrap();
        let r = m.adjoint() * &x - &b;
        assert!(norm_max(r.as_ref()) < 1e-12);
    }

    #[test]
    fn dense_solve_reports_singularity() {
        let m = from_real(&[&[1.0, 2.0], &[2.0, 4.0]]);
        match dense_solve(m.as_ref(), identity(2).as_ref(), false) {
            Err(Error::Singular { cond }) => assert!(cond > 1e14),
            other => panic!("expected singular error, got {other:?}"),
        }
    }
}
