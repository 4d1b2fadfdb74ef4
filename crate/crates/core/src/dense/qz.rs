//! Complex QZ for the generalized eigenproblem `A − λB`.
//!
//! Hessenberg-triangular reduction by Givens rotations followed by
//! single-shift implicit QZ sweeps with Wilkinson shifts. Zero diagonal
//! entries of the triangular factor are chased to the bottom of the active
//! block and deflated as infinite eigenvalues. Only the right transformation
//! `Z` is accumulated, since only right eigenvectors are needed.

use faer::{c64, MatRef};

use crate::error::{Error, Result};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
/// Sweeps allowed per eigenvalue before giving up.
const SWEEPS_PER_EIGENVALUE: usize = 40;
/// An exceptional shift replaces the Wilkinson shift every this many sweeps
/// without deflation.
const EXCEPTIONAL_EVERY: usize = 10;

/// Square column-major scratch matrix.
struct Sq {
    n: usize,
    data: Vec<c64>,
}

impl Sq {
    fn from_ref(m: MatRef<'_, c64>) -> Self {
        let n = m.nrows();
        let mut data = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                data.push(m[(i, j)]);
            }
        }
        Self { n, data }
    }

    fn identity(n: usize) -> Self {
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            data[i * n + i] = c64::new(1.0, 0.0);
        }
        Self { n, data }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> c64 {
        self.data[j * self.n + i]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: c64) {
        self.data[j * self.n + i] = v;
    }

    fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rows `(p, q) ← G·(p, q)` over the given columns, `G = [c s; −s̄ c]`.
    fn rot_rows(&mut self, p: usize, q: usize, c: f64, s: c64, cols: std::ops::Range<usize>) {
        let n = self.n;
        for j in cols {
            let (x, y) = (self.data[j * n + p], self.data[j * n + q]);
            self.data[j * n + p] = x * c + s * y;
            self.data[j * n + q] = y * c - s.conj() * x;
        }
    }

    /// Columns `(p, q) ← (p, q)·[c s; −s̄ c]` over the given rows.
    fn rot_cols(&mut self, p: usize, q: usize, c: f64, s: c64, rows: std::ops::Range<usize>) {
        let n = self.n;
        let (cp, cq) = (p * n, q * n);
        for i in rows {
            let (x, y) = (self.data[cp + i], self.data[cq + i]);
            self.data[cp + i] = x * c - s.conj() * y;
            self.data[cq + i] = s * x + y * c;
        }
    }
}

/// `(c, s)` with `[c s; −s̄ c]·[a; b] = [r; 0]`, `c` real.
fn givens(a: c64, b: c64) -> (f64, c64) {
    let (na, nb) = (a.norm(), b.norm());
    if nb == 0.0 {
        return (1.0, ZERO);
    }
    if na == 0.0 {
        return (0.0, b.conj() / nb);
    }
    let r = na.hypot(nb);
    ((na / r), (a / na) * b.conj() / r)
}

/// Column rotation on `(p, q)` that zeroes `x` in a row holding `x` at
/// column `p` and `y` at column `q`.
fn col_givens(x: c64, y: c64) -> (f64, c64) {
    givens(y, x)
}

/// Generalized Schur form `(S, P)` with right factor `Z`.
pub(crate) struct GeneralizedSchur {
    s: Sq,
    p: Sq,
    z: Sq,
}

impl GeneralizedSchur {
    pub(crate) fn alpha(&self, j: usize) -> c64 {
        self.s.at(j, j)
    }

    pub(crate) fn beta(&self, j: usize) -> c64 {
        self.p.at(j, j)
    }

    /// Right eigenvector of the finite eigenvalue `j` in the original
    /// coordinates, by back substitution on `β·S − α·P`.
    pub(crate) fn eigenvector(&self, j: usize) -> Vec<c64> {
        let n = self.s.n;
        let (alpha, beta) = (self.alpha(j), self.beta(j));
        let scale = (beta.norm() * self.s.frobenius()).max(alpha.norm() * self.p.frobenius()).max(f64::MIN_POSITIVE);
        let small = f64::EPSILON * scale;
        let mut x = vec![ZERO; j + 1];
        x[j] = c64::new(1.0, 0.0);
        for i in (0..j).rev() {
            let mut sum = ZERO;
            for (l, xl) in x.iter().enumerate().take(j + 1).skip(i + 1) {
                sum += (beta * self.s.at(i, l) - alpha * self.p.at(i, l)) * xl;
            }
            let mut d = beta * self.s.at(i, i) - alpha * self.p.at(i, i);
            if d.norm() < small {
                d = c64::new(small, 0.0);
            }
            x[i] = -sum / d;
            let big = x.iter().fold(0.0f64, |m, z| m.max(z.norm()));
            if big > 1e100 {
                for v in x.iter_mut() {
                    *v /= big;
                }
            }
        }
        let mut out = vec![ZERO; n];
        for (l, xl) in x.iter().enumerate() {
            for (r, o) in out.iter_mut().enumerate() {
                *o += self.z.at(r, l) * xl;
            }
        }
        out
    }
}

/// Generalized Schur decomposition of `(a, b)`.
pub(crate) fn generalized_schur(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<GeneralizedSchur> {
    let n = a.nrows();
    let qr = b.qr();
    let q = qr.compute_Q();
    let h = q.adjoint() * a;
    let t = qr.R().to_owned();
    let mut h = Sq::from_ref(h.as_ref());
    let mut t = Sq::from_ref(t.as_ref());
    // deflation tests rely on T being exactly upper triangular
    for j in 0..n {
        for i in j + 1..n {
            t.set(i, j, ZERO);
        }
    }
    let mut z = Sq::identity(n);
    hessenberg_triangular(&mut h, &mut t, &mut z);
    qz_iterate(&mut h, &mut t, &mut z)?;
    Ok(GeneralizedSchur { s: h, p: t, z })
}

fn hessenberg_triangular(h: &mut Sq, t: &mut Sq, z: &mut Sq) {
    let n = h.n;
    for j in 0..n.saturating_sub(2) {
        for i in (j + 2..n).rev() {
            let (c, s) = givens(h.at(i - 1, j), h.at(i, j));
            h.rot_rows(i - 1, i, c, s, j..n);
            h.set(i, j, ZERO);
            t.rot_rows(i - 1, i, c, s, i - 1..n);
            let (c, s) = col_givens(t.at(i, i - 1), t.at(i, i));
            t.rot_cols(i - 1, i, c, s, 0..i + 1);
            t.set(i, i - 1, ZERO);
            h.rot_cols(i - 1, i, c, s, 0..n);
            z.rot_cols(i - 1, i, c, s, 0..n);
        }
    }
}

/// Eigenvalue of the trailing 2×2 pencil closest to `h22/t22`.
fn wilkinson_shift(h: &Sq, t: &Sq, k: usize) -> c64 {
    let (h11, h12, h21, h22) = (h.at(k - 1, k - 1), h.at(k - 1, k), h.at(k, k - 1), h.at(k, k));
    let (t11, t12, t22) = (t.at(k - 1, k - 1), t.at(k - 1, k), t.at(k, k));
    let target = h22 / t22;
    // det(H₂ − λT₂) = aλ² − bλ + c
    let qa = t11 * t22;
    let qb = h11 * t22 + h22 * t11 - t12 * h21;
    let qc = h11 * h22 - h12 * h21;
    if qa.norm() == 0.0 {
        return target;
    }
    let disc = (qb * qb - qa * qc * 4.0).sqrt();
    let big = if (qb + disc).norm() >= (qb - disc).norm() { qb + disc } else { qb - disc };
    if big.norm() == 0.0 {
        return target;
    }
    let r1 = big / (qa * 2.0);
    let r2 = qc * 2.0 / big;
    let pick = if (r1 - target).norm() <= (r2 - target).norm() { r1 } else { r2 };
    if pick.re.is_finite() && pick.im.is_finite() { pick } else { target }
}

fn qz_iterate(h: &mut Sq, t: &mut Sq, z: &mut Sq) -> Result<()> {
    let n = h.n;
    if n < 2 {
        return Ok(());
    }
    let atol = f64::EPSILON * h.frobenius().max(f64::MIN_POSITIVE);
    let btol = f64::EPSILON * t.frobenius().max(f64::MIN_POSITIVE);
    let budget = SWEEPS_PER_EIGENVALUE * n;
    let mut sweeps = 0;
    let mut since_deflation = 0;
    let mut ihi = n - 1;
    while ihi > 0 {
        let mut ilo = 0;
        for j in (1..=ihi).rev() {
            let sub = h.at(j, j - 1).norm();
            if sub <= atol || sub <= f64::EPSILON * (h.at(j, j).norm() + h.at(j - 1, j - 1).norm()) {
                h.set(j, j - 1, ZERO);
                ilo = j;
                break;
            }
        }
        if ilo == ihi {
            ihi -= 1;
            since_deflation = 0;
            continue;
        }
        if let Some(j) = (ilo..=ihi).find(|&j| t.at(j, j).norm() <= btol) {
            t.set(j, j, ZERO);
            chase_zero(h, t, z, ilo, ihi, j);
            since_deflation = 0;
            continue;
        }
        sweeps += 1;
        since_deflation += 1;
        if sweeps > budget {
            return Err(Error::Decomposition { what: "QZ iteration", size: n });
        }
        let shift = if since_deflation % EXCEPTIONAL_EVERY == 0 {
            let wiggle = h.at(ihi, ihi - 1).norm() / t.at(ihi - 1, ihi - 1).norm();
            h.at(ihi, ihi) / t.at(ihi, ihi) + c64::new(0.75, 0.4375) * wiggle
        } else {
            wilkinson_shift(h, t, ihi)
        };
        sweep(h, t, z, ilo, ihi, shift);
    }
    Ok(())
}

/// Move the zero at `T[j,j]` to `T[ihi,ihi]` and deflate it by zeroing
/// `H[ihi,ihi−1]`.
fn chase_zero(h: &mut Sq, t: &mut Sq, z: &mut Sq, ilo: usize, ihi: usize, j: usize) {
    let n = h.n;
    for k in j..ihi {
        let (c, s) = givens(t.at(k, k + 1), t.at(k + 1, k + 1));
        t.rot_rows(k, k + 1, c, s, k + 1..n);
        t.set(k + 1, k + 1, ZERO);
        h.rot_rows(k, k + 1, c, s, k.saturating_sub(1).max(ilo)..n);
        if k > ilo {
            let (c, s) = col_givens(h.at(k + 1, k - 1), h.at(k + 1, k));
            h.rot_cols(k - 1, k, c, s, 0..k + 2);
            h.set(k + 1, k - 1, ZERO);
            t.rot_cols(k - 1, k, c, s, 0..k + 1);
            z.rot_cols(k - 1, k, c, s, 0..n);
        }
    }
    let (c, s) = col_givens(h.at(ihi, ihi - 1), h.at(ihi, ihi));
    h.rot_cols(ihi - 1, ihi, c, s, 0..ihi + 1);
    h.set(ihi, ihi - 1, ZERO);
    t.rot_cols(ihi - 1, ihi, c, s, 0..ihi + 1);
    z.rot_cols(ihi - 1, ihi, c, s, 0..n);
}

fn sweep(h: &mut Sq, t: &mut Sq, z: &mut Sq, ilo: usize, ihi: usize, shift: c64) {
    let n = h.n;
    let (c, s) = givens(h.at(ilo, ilo) - shift * t.at(ilo, ilo), h.at(ilo + 1, ilo));
    h.rot_rows(ilo, ilo + 1, c, s, ilo..n);
    t.rot_rows(ilo, ilo + 1, c, s, ilo..n);
    for k in ilo..ihi {
        if k > ilo {
            let (c, s) = givens(h.at(k, k - 1), h.at(k + 1, k - 1));
            h.rot_rows(k, k + 1, c, s, k - 1..n);
            h.set(k + 1, k - 1, ZERO);
            t.rot_rows(k, k + 1, c, s, k..n);
        }
        let (c, s) = col_givens(t.at(k + 1, k), t.at(k + 1, k + 1));
        t.rot_cols(k, k + 1, c, s, 0..k + 2);
        t.set(k + 1, k, ZERO);
        h.rot_cols(k, k + 1, c, s, 0..(k + 3).min(ihi + 1));
        z.rot_cols(k, k + 1, c, s, 0..n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Mat<c64> {
        Mat::from_fn(n, n, |_, _| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn to_mat(m: &Sq) -> Mat<c64> {
        Mat::from_fn(m.n, m.n, |i, j| m.at(i, j))
    }

    #[test]
    fn givens_zeroes_second_entry() {
        for (a, b) in [(c64::new(1.0, 2.0), c64::new(-3.0, 0.5)), (ZERO, c64::new(0.0, 2.0)), (c64::new(2.0, 0.0), ZERO)] {
            let (c, s) = givens(a, b);
            assert!((b * c - s.conj() * a).norm() < 1e-15);
            assert!((c * c + s.norm_sqr() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn schur_form_reproduces_pencil() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [2, 3, 7, 20] {
            let (a, b) = (random(&mut rng, n), random(&mut rng, n));
            let gs = generalized_schur(a.as_ref(), b.as_ref()).unwrap();
            let (s, p, z) = (to_mat(&gs.s), to_mat(&gs.p), to_mat(&gs.z));
            for j in 0..n {
                for i in j + 1..n {
                    assert_eq!(s[(i, j)], ZERO);
                    assert_eq!(p[(i, j)], ZERO);
                }
            }
            // Z unitary and A·Z = Q·S, B·Z = Q·P share the same Q
            let zz = z.adjoint() * &z;
            assert!((zz - crate::dense::identity(n)).norm_max() < 1e-12);
            for j in 0..n {
                let x = gs.eigenvector(j);
                let x = Mat::from_fn(n, 1, |i, _| x[i]);
                let r = (&a * &x) * faer::Scale(gs.beta(j)) - (&b * &x) * faer::Scale(gs.alpha(j));
                assert!(r.norm_max() < 1e-11 * x.norm_max(), "n={n} j={j}");
            }
        }
    }

    #[test]
    fn identity_b_and_companion_structure() {
        // B = I and a companion matrix are the inputs that stall some QZ codes
        let n = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, n);
        let gs = generalized_schur(a.as_ref(), crate::dense::identity(n).as_ref()).unwrap();
        for j in 0..n {
            assert!((gs.beta(j).norm() - 1.0).abs() < 1e-12);
        }
        let mut comp = Mat::<c64>::zeros(n, n);
        for i in 1..n {
            comp[(i, i - 1)] = c64::new(1.0, 0.0);
        }
        comp[(0, n - 1)] = c64::new(1.0, 0.0);
        let gs = generalized_schur(comp.as_ref(), crate::dense::identity(n).as_ref()).unwrap();
        // roots of unity
        for j in 0..n {
            let l = gs.alpha(j) / gs.beta(j);
            assert!((l.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_b_gives_infinite_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 8;
        let a = random(&mut rng, n);
        let mut b = random(&mut rng, n);
        for i in 0..n {
            b[(i, 2)] = ZERO;
            b[(i, 5)] = ZERO;
        }
        let gs = generalized_schur(a.as_ref(), b.as_ref()).unwrap();
        let inf = (0..n).filter(|&j| gs.beta(j).norm() < 1e-13).count();
        assert_eq!(inf, 2);
        for j in (0..n).filter(|&j| gs.beta(j).norm() >= 1e-13) {
            let l = gs.alpha(j) / gs.beta(j);
            let m = &a - &b * faer::Scale(l);
            assert!(crate::dense::sigma_min(m.as_ref()).unwrap() < 1e-10 * m.norm_max());
        }
    }
}
