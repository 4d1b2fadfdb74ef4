//! Rational eigenvalue problems `R(s) = P(s) + C(sI − A)⁻¹B`.

use faer::{c64, Col, ColRef, Mat, MatRef};

use crate::dense::{self, DenseMat};
use crate::error::{Error, Result};
use crate::sparse::{factorize_at, SparseMat};

const ONE: c64 = c64 { re: 1.0, im: 0.0 };
const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// Transfer-function form with sparse `A` (k×k), dense `B` (k×n), `C` (n×k)
/// and dense polynomial coefficients `P_0..P_d` (empty means `P ≡ 0`).
#[derive(Debug, Clone)]
pub struct StateSpaceREP {
    p: Vec<DenseMat>,
    a: SparseMat,
    b: DenseMat,
    c: DenseMat,
    n: usize,
    abc_norm: f64,
}

impl StateSpaceREP {
    pub fn new(p: Vec<DenseMat>, a: SparseMat, b: DenseMat, c: DenseMat) -> Result<Self> {
        let k = a.nrows();
        if !a.is_square() || k == 0 {
            return Err(Error::shape(format!("A must be square and nonempty, got {}x{}", a.nrows(), a.ncols())));
        }
        let n = b.ncols();
        if b.nrows() != k || c.nrows() != n || c.ncols() != k || n == 0 {
            return Err(Error::shape(format!(
                "B is {}x{} and C is {}x{} for a {k}x{k} A",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        for (j, pj) in p.iter().enumerate() {
            if pj.nrows() != n || pj.ncols() != n {
                return Err(Error::shape(format!("P_{j} is {}x{}, expected {n}x{n}", pj.nrows(), pj.ncols())));
            }
        }
        for (what, m) in [("B", b.as_ref()), ("C", c.as_ref())].into_iter().chain(p.iter().map(|m| ("P", m.as_ref()))) {
            if !all_finite(m) {
                return Err(Error::invalid(format!("{what} has non-finite entries")));
            }
        }
        // ‖[[A, B], [C, 0]]‖_∞ from the row sums of the blocks.
        let mut top = a.row_abs_sums();
        for (i, t) in top.iter_mut().enumerate() {
            *t += (0..n).map(|j| b[(i, j)].norm()).sum::<f64>();
        }
        let bottom = dense::norm_inf(c.as_ref());
        let abc_norm = top.into_iter().fold(bottom, f64::max);
        Ok(Self { p, a, b, c, n, abc_norm })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    /// Degree used by the linearization; at least 1.
    pub fn degree(&self) -> usize {
        self.p.len().saturating_sub(1).max(1)
    }

    pub fn p(&self) -> &[DenseMat] {
        &self.p
    }

    pub fn a(&self) -> &SparseMat {
        &self.a
    }

    pub fn b(&self) -> &DenseMat {
        &self.b
    }

    pub fn c(&self) -> &DenseMat {
        &self.c
    }

    /// `P_j`, with zero for indices past the stored degree.
    pub fn p_coeff(&self, j: usize) -> DenseMat {
        self.p.get(j).cloned().unwrap_or_else(|| Mat::zeros(self.n, self.n))
    }

    /// `‖[[A, B], [C, 0]]‖_∞`, cached at construction.
    pub fn abc_norm(&self) -> f64 {
        self.abc_norm
    }

    /// `P(s)` by Horner.
    pub fn eval_poly(&self, s: c64) -> DenseMat {
        poly_derivative(&self.p, self.n, s, 0)
    }

    pub fn eval_r(&self, s: c64) -> Result<DenseMat> {
        Ok(self.eval_r_derivs(s, 0)?.swap_remove(0))
    }

    /// `[R(s), R′(s), …, R^{(up_to)}(s)]` using
    /// `R^{(j)}(s) = P^{(j)}(s) − j!·C(A − sI)^{−(j+1)}B`.
    pub fn eval_r_derivs(&self, s: c64, up_to: usize) -> Result<Vec<DenseMat>> {
        let f = factorize_at(&self.a.shifted(s), s).map_err(|e| match e {
            Error::SingularPivot { .. } => Error::Pole { s },
            other => other,
        })?;
        let mut x = self.b.clone();
        let mut fact = 1.0;
        let mut out = Vec::with_capacity(up_to + 1);
        for j in 0..=up_to {
            if j > 0 {
                fact *= j as f64;
            }
            x = f.solve_multi(x.as_ref(), false)?;
            let cx = &self.c * &x;
            let mut r = poly_derivative(&self.p, self.n, s, j);
            r -= faer::Scale(c64::new(fact, 0.0)) * &cx;
            out.push(r);
        }
        Ok(out)
    }
}

fn all_finite(m: MatRef<'_, c64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].re.is_finite() && m[(i, j)].im.is_finite()))
}

/// `j`-th derivative of `Σ sⁱ Pᵢ` at `s`.
pub(crate) fn poly_derivative(p: &[DenseMat], n: usize, s: c64, j: usize) -> DenseMat {
    let mut acc: DenseMat = Mat::zeros(n, n);
    for i in (j..p.len()).rev() {
        // falling factorial i!/(i−j)!
        let w: f64 = ((i - j + 1)..=i).map(|t| t as f64).product();
        acc = faer::Scale(s) * &acc;
        acc += faer::Scale(c64::new(w, 0.0)) * &p[i];
    }
    acc
}

/// One scalar-weighted low-rank term `(p(s)/d(s))·L·Uᴴ`.
///
/// Coefficients are stored lowest degree first; `denom` is monic.
#[derive(Debug, Clone)]
pub struct PartialFraction {
    pub numer: Vec<c64>,
    pub denom: Vec<c64>,
    pub l: DenseMat,
    pub u: DenseMat,
}

impl PartialFraction {
    pub fn order(&self) -> usize {
        self.denom.len().saturating_sub(1)
    }

    pub fn rank(&self) -> usize {
        self.l.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct PartialFractionREP {
    pub p: Vec<DenseMat>,
    pub terms: Vec<PartialFraction>,
}

impl PartialFractionREP {
    pub fn new(p: Vec<DenseMat>, terms: Vec<PartialFraction>) -> Result<Self> {
        let out = Self { p, terms };
        out.validate()?;
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.terms.first().map_or_else(|| self.p.first().map_or(0, |m| m.nrows()), |t| t.l.nrows())
    }

    fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::invalid("a partial-fraction problem needs at least one term"));
        }
        let n = self.n();
        for (j, pj) in self.p.iter().enumerate() {
            if pj.nrows() != n || pj.ncols() != n {
                return Err(Error::shape(format!("P_{j} is {}x{}, expected {n}x{n}", pj.nrows(), pj.ncols())));
            }
        }
        for (j, t) in self.terms.iter().enumerate() {
            let kj = t.order();
            if kj == 0 {
                return Err(Error::invalid(format!("term {j}: denominator must have degree at least 1")));
            }
            if t.denom[kj] != ONE {
                return Err(Error::invalid(format!("term {j}: denominator is not monic")));
            }
            if t.numer.len() > kj {
                return Err(Error::invalid(format!("term {j}: numerator degree must be below {kj}")));
            }
            let r = t.rank();
            if r == 0 || t.l.nrows() != n || t.u.nrows() != n || t.u.ncols() != r {
                return Err(Error::shape(format!(
                    "term {j}: L is {}x{} and U is {}x{}, expected {n}xr for both",
                    t.l.nrows(),
                    t.l.ncols(),
                    t.u.nrows(),
                    t.u.ncols()
                )));
            }
            for (what, m) in [("L", &t.l), ("U", &t.u)] {
                let s = m.singular_values().map_err(|_| Error::Decomposition {
                    what: "singular value decomposition",
                    size: n,
                })?;
                let smax = s.iter().copied().fold(0.0, f64::max);
                let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
                if r > n || !(smin > 1e-12 * smax) {
                    return Err(Error::invalid(format!("term {j}: {what} does not have full column rank")));
                }
            }
        }
        Ok(())
    }

    /// Direct evaluation `P(s) + Σ (p_j(s)/d_j(s))·L_j U_jᴴ`.
    pub fn eval(&self, s: c64) -> Result<DenseMat> {
        let n = self.n();
        let mut out = poly_derivative(&self.p, n, s, 0);
        for t in &self.terms {
            let d = horner(&t.denom, s);
            if d == ZERO {
                return Err(Error::Pole { s });
            }
            let w = horner(&t.numer, s) / d;
            out += faer::Scale(w) * (&t.l * t.u.adjoint());
        }
        Ok(out)
    }
}

pub(crate) fn horner(coeffs: &[c64], s: c64) -> c64 {
    coeffs.iter().rev().fold(ZERO, |acc, &c| acc * s + c)
}

/// State-space realization with exactly `Σ r_j·k_j` states.
///
/// Each term uses the controllable companion form of `d_j` expanded by
/// `⊗ I_{r_j}`, with input `(e_k ⊗ I)U_jᴴ` and output `L_j(c ⊗ I)` where `c`
/// holds the numerator coefficients.
pub fn realize(pf: &PartialFractionREP) -> Result<StateSpaceREP> {
    pf.validate()?;
    let n = pf.n();
    let k: usize = pf.terms.iter().map(|t| t.order() * t.rank()).sum();
    let mut a_trip = Vec::new();
    let mut b = Mat::zeros(k, n);
    let mut c = Mat::zeros(n, k);
    let mut off = 0;
    for t in &pf.terms {
        let (kj, r) = (t.order(), t.rank());
        for a in 0..kj {
            for i in 0..r {
                let row = off + a * r + i;
                if a + 1 < kj {
                    a_trip.push((row, off + (a + 1) * r + i, ONE));
                } else {
                    for (bb, &dv) in t.denom[..kj].iter().enumerate() {
                        if dv != ZERO {
                            a_trip.push((row, off + bb * r + i, -dv));
                        }
                    }
                }
            }
        }
        for i in 0..r {
            let row = off + (kj - 1) * r + i;
            for col in 0..n {
                b[(row, col)] = t.u[(col, i)].conj();
            }
        }
        for (a, &pv) in t.numer.iter().enumerate() {
            for i in 0..r {
                for row in 0..n {
                    c[(row, off + a * r + i)] = pv * t.l[(row, i)];
                }
            }
        }
        off += kj * r;
    }
    let a = SparseMat::try_from_triplets(k, k, &a_trip)?;
    StateSpaceREP::new(pf.p.clone(), a, b, c)
}

/// The pencil `𝓐 − s𝓑` of size `k + n·d` whose finite eigenvalues (away from
/// the spectrum of `A`) are the eigenvalues of `R`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub acal: SparseMat,
    pub bcal: SparseMat,
}

impl Linearization {
    pub fn size(&self) -> usize {
        self.acal.nrows()
    }
}

/// Layout: first block row `[A, 0, …, B]`, second `[C, P_{d−1}, …, P_0]`,
/// then `−I` on the block subdiagonal; `𝓑 = diag(I_k, −P_d, −I, …, −I)`.
/// A missing or constant `P` is treated as `d = 1` with `P_1 = 0`.
pub fn build_linearization(sys: &StateSpaceREP) -> Linearization {
    let (k, n, d) = (sys.k(), sys.n(), sys.degree());
    let size = k + n * d;
    let mut at = sys.a.triplets();
    let last = k + n * (d - 1);
    push_dense(&mut at, sys.b.as_ref(), 0, last);
    push_dense(&mut at, sys.c.as_ref(), k, 0);
    for blk in 0..d {
        let pj = d - 1 - blk;
        if let Some(p) = sys.p.get(pj) {
            push_dense(&mut at, p.as_ref(), k, k + blk * n);
        }
    }
    for blk in 1..d {
        for i in 0..n {
            at.push((k + blk * n + i, k + (blk - 1) * n + i, -ONE));
        }
    }
    let mut bt: Vec<_> = (0..k).map(|i| (i, i, ONE)).collect();
    if let Some(pd) = sys.p.get(d) {
        push_dense(&mut bt, (-pd).as_ref(), k, k);
    }
    for blk in 1..d {
        for i in 0..n {
            bt.push((k + blk * n + i, k + blk * n + i, -ONE));
        }
    }
    Linearization {
        acal: SparseMat::try_from_triplets(size, size, &at).expect("linearization blocks do not overlap"),
        bcal: SparseMat::try_from_triplets(size, size, &bt).expect("linearization blocks do not overlap"),
    }
}

fn push_dense(t: &mut Vec<(usize, usize, c64)>, m: MatRef<'_, c64>, r0: usize, c0: usize) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != ZERO {
                t.push((r0 + i, c0 + j, m[(i, j)]));
            }
        }
    }
}

/// Relative residual of a reduced pencil eigenpair lifted by `diag(V, I_{nd})`:
/// `‖L(λ)·y‖_∞/‖v‖_∞` over `|λ| + ‖[[A, B], [C, 0]]‖_∞`.
pub fn residual_rational(
    sys: &StateSpaceREP,
    lin: &Linearization,
    lambda: c64,
    v_reduced: ColRef<'_, c64>,
    v: MatRef<'_, c64>,
) -> Result<f64> {
    let (k, nd) = (sys.k(), sys.n() * sys.degree());
    let r = v.ncols();
    if v.nrows() != k || v_reduced.nrows() != r + nd || lin.size() != k + nd {
        return Err(Error::shape(format!(
            "reduced vector of length {} with a {}x{} basis does not embed into size {}",
            v_reduced.nrows(),
            v.nrows(),
            r,
            lin.size()
        )));
    }
    let vnorm = dense::vec_norm_inf(v_reduced);
    if vnorm == 0.0 {
        return Err(Error::invalid("residual of a zero vector"));
    }
    let top = v * v_reduced.get(..r);
    let y = Col::from_fn(k + nd, |i| if i < k { top[i] } else { v_reduced[r + i - k] });
    let ay = lin.acal.mul_col(y.as_ref());
    let by = lin.bcal.mul_col(y.as_ref());
    let z = ay - faer::Scale(lambda) * &by;
    Ok(dense::vec_norm_inf(z.as_ref()) / vnorm / (lambda.norm() + sys.abc_norm))
}
