//! Split-form nonlinear problems `T(s) = Σ f_j(s)·T_j` and their 2×2 block
//! partition with leading block `A(s)` (k×k) and trailing block `D(s)` (m×m).

use faer::{c64, Col, ColRef, Mat, MatRef};

use crate::dense::{self, DenseMat};
use crate::error::{Error, Result};
use crate::rep::horner;
use crate::sparse::{factorize_at, Factorization, SparseMat};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// Scalar coefficient function with closed-form derivatives of every order.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarFn {
    /// `s^p`
    Monomial(u32),
    /// `e^{αs}`
    Exp { alpha: c64 },
    /// `i·sqrt(s − shift)` on the principal branch.
    SqrtBranch { shift: c64 },
    /// `p(s)/d(s)` with coefficients lowest degree first and `d` monic.
    Rational { numer: Vec<c64>, denom: Vec<c64> },
    Constant(c64),
}

impl ScalarFn {
    pub fn rational(numer: Vec<c64>, denom: Vec<c64>) -> Result<Self> {
        match denom.last() {
            Some(&d) if d == ONE => Ok(ScalarFn::Rational { numer, denom }),
            _ => Err(Error::invalid("rational coefficient function needs a monic denominator")),
        }
    }

    pub fn eval(&self, s: c64) -> Result<c64> {
        Ok(self.derivs(s, 0)?[0])
    }

    /// `[f(s), f′(s), …, f^{(up_to)}(s)]`.
    pub fn derivs(&self, s: c64, up_to: usize) -> Result<Vec<c64>> {
        let mut out = Vec::with_capacity(up_to + 1);
        match self {
            ScalarFn::Monomial(p) => {
                let p = *p as usize;
                for j in 0..=up_to {
                    if j > p {
                        out.push(ZERO);
                    } else {
                        let w: f64 = ((p - j + 1)..=p).map(|t| t as f64).product();
                        out.push(s.powu((p - j) as u32) * w);
                    }
                }
            }
            ScalarFn::Exp { alpha } => {
                let e = (alpha * s).exp();
                let mut a = ONE;
                for _ in 0..=up_to {
                    out.push(a * e);
                    a *= alpha;
                }
            }
            ScalarFn::SqrtBranch { shift } => {
                let mut z = s - shift;
                if z == ZERO {
                    return Err(Error::Pole { s });
                }
                // −0.0 would select the other side of the cut
                if z.im == 0.0 {
                    z.im = 0.0;
                }
                let w = z.sqrt();
                let i = c64::new(0.0, 1.0);
                let mut coef = 1.0;
                let mut zp = ONE;
                for j in 0..=up_to {
                    out.push(i * w * coef / zp);
                    coef *= 0.5 - j as f64;
                    zp *= z;
                }
            }
            ScalarFn::Rational { numer, denom } => {
                let a = taylor(numer, s, up_to);
                let b = taylor(denom, s, up_to);
                let scale: f64 = denom.iter().rev().fold(0.0, |acc, d| acc * s.norm() + d.norm());
                if b[0].norm() <= f64::EPSILON * scale {
                    return Err(Error::Pole { s });
                }
                let mut qs: Vec<c64> = Vec::with_capacity(up_to + 1);
                for i in 0..=up_to {
                    let mut t = a[i];
                    for l in 1..=i {
                        t -= b[l] * qs[i - l];
                    }
                    qs.push(t / b[0]);
                }
                let mut fact = 1.0;
                for (i, q) in qs.into_iter().enumerate() {
                    if i > 0 {
                        fact *= i as f64;
                    }
                    out.push(q * fact);
                }
            }
            ScalarFn::Constant(c) => {
                out.push(*c);
                out.extend(std::iter::repeat_n(ZERO, up_to));
            }
        }
        Ok(out)
    }

    /// Coefficients (lowest first) when the function is a polynomial.
    pub fn polynomial_coeffs(&self) -> Option<Vec<c64>> {
        match self {
            ScalarFn::Monomial(p) => {
                let mut c = vec![ZERO; *p as usize + 1];
                c[*p as usize] = ONE;
                Some(c)
            }
            ScalarFn::Constant(c) => Some(vec![*c]),
            ScalarFn::Rational { numer, denom } if denom.len() == 1 => Some(numer.clone()),
            _ => None,
        }
    }
}

/// Taylor coefficients `p^{(i)}(s)/i!`, `i = 0..=up_to`.
fn taylor(coeffs: &[c64], s: c64, up_to: usize) -> Vec<c64> {
    let mut out = vec![ZERO; up_to + 1];
    let mut work = coeffs.to_vec();
    for o in out.iter_mut() {
        if work.is_empty() {
            break;
        }
        *o = horner(&work, s);
        // synthetic division by (x − s) drops one degree
        let deg = work.len() - 1;
        let mut q = vec![ZERO; deg];
        let mut carry = ZERO;
        for i in (1..=deg).rev() {
            carry = carry * s + work[i];
            q[i - 1] = carry;
        }
        work = q;
    }
    out
}

/// `[f(s), …, f^{(up_to)}(s)]`.
pub fn fn_derivs(f: &ScalarFn, s: c64, up_to: usize) -> Result<Vec<c64>> {
    f.derivs(s, up_to)
}

#[derive(Debug, Clone)]
pub struct SplitNEP {
    n: usize,
    fns: Vec<ScalarFn>,
    mats: Vec<SparseMat>,
    norms: Vec<f64>,
}

impl SplitNEP {
    pub fn new(terms: Vec<(ScalarFn, SparseMat)>) -> Result<Self> {
        let Some(n) = terms.first().map(|t| t.1.nrows()) else {
            return Err(Error::invalid("a split-form problem needs at least one term"));
        };
        if n == 0 {
            return Err(Error::invalid("split-form problem of size 0"));
        }
        for (j, (_, t)) in terms.iter().enumerate() {
            if t.nrows() != n || t.ncols() != n {
                return Err(Error::shape(format!("T_{j} is {}x{}, expected {n}x{n}", t.nrows(), t.ncols())));
            }
        }
        let (fns, mats): (Vec<_>, Vec<_>) = terms.into_iter().unzip();
        let norms = mats.iter().map(SparseMat::norm_inf).collect();
        Ok(Self { n, fns, mats, norms })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_terms(&self) -> usize {
        self.fns.len()
    }

    pub fn fns(&self) -> &[ScalarFn] {
        &self.fns
    }

    pub fn mats(&self) -> &[SparseMat] {
        &self.mats
    }

    /// `‖T_j‖_∞`, cached at construction.
    pub fn term_norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn coeffs(&self, s: c64) -> Result<Vec<c64>> {
        self.fns.iter().map(|f| f.eval(s)).collect()
    }

    /// `Σ |f_j(s)|·‖T_j‖_∞`.
    pub fn scale(&self, s: c64) -> Result<f64> {
        Ok(self.coeffs(s)?.iter().zip(&self.norms).map(|(f, t)| f.norm() * t).sum())
    }

    pub fn eval(&self, s: c64) -> Result<SparseMat> {
        let coeffs = self.coeffs(s)?;
        let terms: Vec<_> = coeffs.into_iter().zip(&self.mats).collect();
        Ok(SparseMat::linear_combination(self.n, self.n, &terms))
    }

    pub fn eval_dense(&self, s: c64) -> Result<DenseMat> {
        Ok(self.eval(s)?.to_dense())
    }

    /// `T^{(j)}(s)` as a dense matrix.
    pub fn eval_deriv_dense(&self, s: c64, j: usize) -> Result<DenseMat> {
        let mut out = Mat::zeros(self.n, self.n);
        for (f, t) in self.fns.iter().zip(&self.mats) {
            let d = f.derivs(s, j)?[j];
            if d != ZERO {
                for col in 0..self.n {
                    for (i, v) in t.col(col) {
                        out[(i, col)] += d * v;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn is_polynomial(&self) -> bool {
        self.fns.iter().all(|f| f.polynomial_coeffs().is_some())
    }

    /// Dense coefficients `P_0..P_d` when every function is a polynomial.
    pub fn polynomial_coeffs(&self) -> Option<Vec<DenseMat>> {
        let polys: Vec<Vec<c64>> = self.fns.iter().map(|f| f.polynomial_coeffs()).collect::<Option<_>>()?;
        let deg = polys.iter().map(|p| p.len()).max().unwrap_or(1).max(1);
        let mut out = vec![Mat::zeros(self.n, self.n); deg];
        for (p, t) in polys.iter().zip(&self.mats) {
            for (i, &c) in p.iter().enumerate() {
                if c != ZERO {
                    for col in 0..self.n {
                        for (row, v) in t.col(col) {
                            out[i][(row, col)] += c * v;
                        }
                    }
                }
            }
        }
        while out.len() > 1 && dense::norm_max(out.last().unwrap().as_ref()) == 0.0 {
            out.pop();
        }
        Some(out)
    }

    /// Symmetric permutation; new index `i` takes old index `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mats = self.mats.iter().map(|t| t.permuted(perm)).collect::<Result<Vec<_>>>()?;
        Self::new(self.fns.iter().cloned().zip(mats).collect())
    }
}

/// Block views `A_j` (sparse k×k), `B_j` (k×m), `C_j` (m×k), `D_j` (m×m) of
/// every term.
#[derive(Debug, Clone)]
pub struct PartitionedNEP {
    k: usize,
    m: usize,
    fns: Vec<ScalarFn>,
    a: Vec<SparseMat>,
    b: Vec<DenseMat>,
    c: Vec<DenseMat>,
    d: Vec<DenseMat>,
}

impl PartitionedNEP {
    pub fn new(nep: &SplitNEP, m: usize) -> Result<Self> {
        let n = nep.n();
        if m == 0 || m >= n {
            return Err(Error::invalid(format!("partition size m = {m} must satisfy 1 <= m < n = {n}")));
        }
        let k = n - m;
        let mut out = Self { k, m, fns: nep.fns.clone(), a: Vec::new(), b: Vec::new(), c: Vec::new(), d: Vec::new() };
        for t in &nep.mats {
            out.a.push(t.submatrix(0..k, 0..k));
            out.b.push(t.dense_block(0..k, k..n));
            out.c.push(t.dense_block(k..n, 0..k));
            out.d.push(t.dense_block(k..n, k..n));
        }
        Ok(out)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn fns(&self) -> &[ScalarFn] {
        &self.fns
    }

    pub fn a_blocks(&self) -> &[SparseMat] {
        &self.a
    }

    pub fn b_blocks(&self) -> &[DenseMat] {
        &self.b
    }

    pub fn c_blocks(&self) -> &[DenseMat] {
        &self.c
    }

    pub fn d_blocks(&self) -> &[DenseMat] {
        &self.d
    }

    fn derivs(&self, s: c64, up_to: usize) -> Result<Vec<Vec<c64>>> {
        self.fns.iter().map(|f| f.derivs(s, up_to)).collect()
    }

    /// `A(s) = Σ f_j(s)·A_j`.
    pub fn a_at(&self, s: c64) -> Result<SparseMat> {
        let f = self.derivs(s, 0)?;
        Ok(self.a_combination(&f, 0))
    }

    fn a_combination(&self, f: &[Vec<c64>], i: usize) -> SparseMat {
        let terms: Vec<_> = f.iter().map(|d| d[i]).zip(&self.a).collect();
        SparseMat::linear_combination(self.k, self.k, &terms)
    }
}

fn dense_combination(f: &[Vec<c64>], i: usize, mats: &[DenseMat]) -> DenseMat {
    let mut out = Mat::zeros(mats[0].nrows(), mats[0].ncols());
    for (d, m) in f.iter().zip(mats) {
        if d[i] != ZERO {
            out += faer::Scale(d[i]) * m;
        }
    }
    out
}

/// Block derivatives `A^{(i)}(s)`, `B^{(i)}(s)`, `C^{(i)}(s)` for `i ≤ up_to`
/// and `D(s)`.
#[derive(Debug, Clone)]
pub struct BlockDerivs {
    pub a: Vec<SparseMat>,
    pub b: Vec<DenseMat>,
    pub c: Vec<DenseMat>,
    pub d: DenseMat,
}

pub fn eval_blocks(p: &PartitionedNEP, s: c64, up_to: usize) -> Result<BlockDerivs> {
    let f = p.derivs(s, up_to)?;
    Ok(BlockDerivs {
        a: (0..=up_to).map(|i| p.a_combination(&f, i)).collect(),
        b: (0..=up_to).map(|i| dense_combination(&f, i, &p.b)).collect(),
        c: (0..=up_to).map(|i| dense_combination(&f, i, &p.c)).collect(),
        d: dense_combination(&f, 0, &p.d),
    })
}

/// Derivatives of `X(s) = A(s)⁻¹B(s)` and of `Y(s) = (C(s)A(s)⁻¹)ᴴ` at one
/// point.
#[derive(Debug, Clone)]
pub struct Chain {
    pub x: Vec<DenseMat>,
    pub y: Option<Vec<DenseMat>>,
}

/// `X^{(j)}`, `j = 0..q`, from
/// `X^{(j)} = A⁻¹(B^{(j)} − Σ_{i=1..j} C(j,i)·A^{(i)}·X^{(j−i)})` and the
/// adjoint analogue `Y^{(j)} = A⁻ᴴ(C^{(j)ᴴ} − Σ C(j,i)·A^{(i)ᴴ}·Y^{(j−i)})`,
/// all with one factorization of `A(s)`.
pub fn solve_chain(p: &PartitionedNEP, s: c64, q: usize, adjoint: bool) -> Result<Chain> {
    let (chain, _) = solve_chain_counted(p, s, q, adjoint)?;
    Ok(chain)
}

pub(crate) fn solve_chain_counted(p: &PartitionedNEP, s: c64, q: usize, adjoint: bool) -> Result<(Chain, usize)> {
    if q == 0 {
        return Err(Error::invalid("derivative chain of length 0"));
    }
    let blocks = eval_blocks(p, s, q - 1)?;
    let f = factorize_at(&blocks.a[0], s).map_err(|e| match e {
        Error::SingularPivot { .. } => Error::Pole { s },
        other => other,
    })?;
    let right = || leibniz(&f, &blocks.a, &blocks.b, q, false);
    let (x, y) = if adjoint {
        let ch: Vec<DenseMat> = blocks.c.iter().map(|c| c.adjoint().to_owned()).collect();
        let (x, y) = rayon::join(right, || leibniz(&f, &blocks.a, &ch, q, true));
        (x?, Some(y?))
    } else {
        (right()?, None)
    };
    Ok((Chain { x, y }, 1))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn leibniz(f: &Factorization, a: &[SparseMat], rhs: &[DenseMat], q: usize, adjoint: bool) -> Result<Vec<DenseMat>> {
    let mut out: Vec<DenseMat> = Vec::with_capacity(q);
    for j in 0..q {
        let mut r = rhs[j].clone();
        for i in 1..=j {
            let prev = out[j - i].as_ref();
            let prod = if adjoint { a[i].adjoint_mul_dense(prev) } else { a[i].mul_dense(prev) };
            r -= faer::Scale(c64::new(binomial(j, i), 0.0)) * &prod;
        }
        out.push(f.solve_multi(r.as_ref(), adjoint)?);
    }
    Ok(out)
}

/// Relative residual `‖T(λ)·diag(V, I_m)·v‖_∞/‖v‖_∞` over
/// `Σ |f_j(λ)|·‖T_j‖_∞`.
///
/// With `embedded_norm` the denominator norm is taken of the lifted vector
/// instead of the reduced one.
pub fn residual_split(
    nep: &SplitNEP,
    lambda: c64,
    v_reduced: ColRef<'_, c64>,
    v: MatRef<'_, c64>,
    m: usize,
    embedded_norm: bool,
) -> Result<f64> {
    let n = nep.n();
    let r = v.ncols();
    if m > n || v.nrows() != n - m || v_reduced.nrows() != r + m {
        return Err(Error::shape(format!(
            "reduced vector of length {} with a {}x{r} basis does not embed into size {n} with m = {m}",
            v_reduced.nrows(),
            v.nrows()
        )));
    }
    let y = embed(v_reduced, v, m);
    let norm = if embedded_norm { dense::vec_norm_inf(y.as_ref()) } else { dense::vec_norm_inf(v_reduced) };
    if norm == 0.0 {
        return Err(Error::invalid("residual of a zero vector"));
    }
    let coeffs = nep.coeffs(lambda)?;
    let mut z = Col::<c64>::zeros(n);
    let mut scale = 0.0;
    for ((f, t), tn) in coeffs.iter().zip(&nep.mats).zip(&nep.norms) {
        scale += f.norm() * tn;
        if *f != ZERO {
            z += faer::Scale(*f) * t.mul_col(y.as_ref());
        }
    }
    Ok(dense::vec_norm_inf(z.as_ref()) / norm / scale)
}

/// `diag(V, I_m)·v`.
pub fn embed(v_reduced: ColRef<'_, c64>, v: MatRef<'_, c64>, m: usize) -> Col<c64> {
    let r = v.ncols();
    let k = v.nrows();
    let top = v * v_reduced.get(..r);
    Col::from_fn(k + m, |i| if i < k { top[i] } else { v_reduced[r + i - k] })
}
