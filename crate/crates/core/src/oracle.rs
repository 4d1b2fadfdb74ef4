//! Brute-force reference solvers for desk-sized problems.
//!
//! None of these share code paths with the subspace solvers beyond the dense
//! kernels: the rational oracle densifies the full linearization, the scalar
//! oracle is plain Newton, and the nonlinear oracle runs a fine contour
//! quadrature on the full dense `T`.

use faer::c64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dense::{self, pencil_eigs};
use crate::error::{Error, Result};
use crate::nep::SplitNEP;
use crate::rep::{build_linearization, StateSpaceREP};
use crate::small_nep::{companion_eigs, contour_eigs_refined, Contour};
use crate::subspace::target_order;

/// Largest linearization the rational oracle densifies.
pub const REP_ORACLE_CAP: usize = 2000;
/// Largest problem the nonlinear oracle densifies.
pub const NEP_ORACLE_CAP: usize = 300;
const NEP_ORACLE_NODES: usize = 256;
const NEP_ORACLE_ATTEMPTS: usize = 20;
const PROBE_SEED: u64 = 0x5eed_0a1c;

/// The `k_eigs` eigenvalues of `R` closest to `tau` from the dense
/// linearization, without eigenvalues of `A` (matched within
/// `1e−10·max(1, |λ|)`).
pub fn oracle_rep(sys: &StateSpaceREP, tau: c64, k_eigs: usize) -> Result<Vec<c64>> {
    let lin = build_linearization(sys);
    let size = lin.size();
    if size > REP_ORACLE_CAP {
        return Err(Error::SizeCap { size, cap: REP_ORACLE_CAP });
    }
    let eig = pencil_eigs(lin.acal.to_dense().as_ref(), lin.bcal.to_dense().as_ref())?;
    let a = sys.a().to_dense();
    let a_eigs = if sys.k() > 0 { pencil_eigs(a.as_ref(), dense::identity(sys.k()).as_ref())?.values } else { Vec::new() };
    let mut vals: Vec<c64> = eig
        .values
        .into_iter()
        .filter(|l| !a_eigs.iter().any(|m| (l - m).norm() <= 1e-10 * l.norm().max(1.0)))
        .collect();
    vals.sort_by(target_order(tau));
    vals.truncate(k_eigs);
    Ok(vals)
}

/// Newton iteration on a scalar function until
/// `|f(s)| ≤ 1e−14·max(1, |s·f′(s)|)`, at most 200 steps.
pub fn oracle_scalar_root(f: impl Fn(c64) -> c64, df: impl Fn(c64) -> c64, guess: c64) -> Result<c64> {
    let mut s = guess;
    for _ in 0..200 {
        let (v, d) = (f(s), df(s));
        if v.norm() <= 1e-14 * (s * d).norm().max(1.0) {
            return Ok(s);
        }
        if d.norm() == 0.0 || !(v / d).re.is_finite() {
            break;
        }
        s -= v / d;
    }
    Err(Error::NoConvergence("scalar Newton oracle"))
}

/// The `k_eigs` eigenvalues of `T` closest to `tau`.
///
/// Polynomial problems use the dense companion pencil. Otherwise a 256-node
/// contour with `k_eigs + 8` probes is centred at `tau`; the radius starts at
/// `region_radius`, grows by 1.5 while fewer than `k_eigs` eigenvalues lie in
/// the inner 80% of the disk, and shrinks by 0.7 on a rank failure.
pub fn oracle_nep(nep: &SplitNEP, tau: c64, k_eigs: usize, region_radius: f64) -> Result<Vec<c64>> {
    let n = nep.n();
    if n > NEP_ORACLE_CAP {
        return Err(Error::SizeCap { size: n, cap: NEP_ORACLE_CAP });
    }
    if let Some(p) = nep.polynomial_coeffs() {
        if p.len() >= 2 {
            return Ok(companion_eigs(&p, tau, Some(k_eigs))?.into_iter().map(|x| x.0).collect());
        }
    }
    let eval = |s: c64| nep.eval_dense(s);
    let deriv = |s: c64| nep.eval_deriv_dense(s, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let mut radius = region_radius;
    for _ in 0..NEP_ORACLE_ATTEMPTS {
        let contour = Contour::new(tau, radius, NEP_ORACLE_NODES, k_eigs + 8)?;
        match contour_eigs_refined(&eval, Some(&deriv), &contour, None, tau, &mut rng) {
            Ok(found) => {
                let inner = found.iter().filter(|x| (x.0 - tau).norm() <= 0.8 * radius).count();
                if inner >= k_eigs {
                    return Ok(found.into_iter().take(k_eigs).map(|x| x.0).collect());
                }
                radius *= 1.5;
            }
            Err(Error::ContourRank { .. }) => radius *= 0.7,
            Err(Error::Pole { .. }) => radius *= 0.97,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoConvergence("contour oracle"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nep::ScalarFn;
    use crate::sparse::SparseMat;
    use faer::Mat;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    fn mat(rows: &[&[f64]]) -> Mat<c64> {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| c(rows[i][j]))
    }

    #[test]
    fn rep_closed_form() {
        // R(s) = −1 + 1/(s − 1) vanishes at 2
        let sys = StateSpaceREP::new(
            vec![mat(&[&[-1.0]])],
            SparseMat::from_diag(&[c(1.0)]),
            mat(&[&[1.0]]),
            mat(&[&[1.0]]),
        )
        .unwrap();
        let l = oracle_rep(&sys, c(0.0), 1).unwrap();
        assert!((l[0] - c(2.0)).norm() < 1e-12);
    }

    #[test]
    fn rep_constant_only() {
        // P₀ = −1 with P₁ = 1 and no rational part: zero at 1
        let sys = StateSpaceREP::new(
            vec![mat(&[&[-1.0]]), mat(&[&[1.0]])],
            SparseMat::from_diag(&[c(5.0)]),
            mat(&[&[0.0]]),
            mat(&[&[0.0]]),
        )
        .unwrap();
        let l = oracle_rep(&sys, c(0.0), 1).unwrap();
        assert!((l[0] - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn rep_without_rational_part_is_companion() {
        let p = vec![mat(&[&[2.0, 0.5], &[0.0, 1.0]]), mat(&[&[-3.0, 0.0], &[1.0, 0.5]]), mat(&[&[1.0, 0.0], &[0.0, 2.0]])];
        let sys = StateSpaceREP::new(p.clone(), SparseMat::from_diag(&[c(7.0)]), Mat::zeros(1, 2), Mat::zeros(2, 1)).unwrap();
        let got = oracle_rep(&sys, c(0.0), 4).unwrap();
        let want = companion_eigs(&p, c(0.0), Some(4)).unwrap();
        for w in &want {
            assert!(got.iter().any(|g| (g - w.0).norm() < 1e-10), "{got:?}");
        }
    }

    #[test]
    fn rep_size_cap() {
        let sys = StateSpaceREP::new(vec![], SparseMat::identity(2001), Mat::zeros(2001, 1), Mat::zeros(1, 2001)).unwrap();
        assert!(matches!(oracle_rep(&sys, c(0.0), 1), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn scalar_root_examples() {
        let r = oracle_scalar_root(|s| s * s - 1.0, |s| s * 2.0, c(0.9)).unwrap();
        assert!((r - c(1.0)).norm() < 1e-15);
        let f = |s: c64| -s + 0.3 + 0.1 * (-2.0 * s).exp();
        let r = oracle_scalar_root(f, |s| c(-1.0) - 0.2 * (-2.0 * s).exp(), c(0.3)).unwrap();
        assert!(r.im.abs() < 1e-15 && f(r).norm() <= 1e-14);
        let r = oracle_scalar_root(|s| s - 1.0, |_| c(1.0), c(1.2)).unwrap();
        assert!((r - c(1.0)).norm() < 1e-15);
        assert!(oracle_scalar_root(|s| s * s + 1.0, |s| s * 2.0, c(0.0)).is_err());
    }

    #[test]
    fn nep_linear_matches_pencil() {
        let a = mat(&[&[1.0, 0.2, 0.0], &[0.1, 2.0, 0.3], &[0.0, 0.4, 3.5]]);
        let nep = SplitNEP::new(vec![
            (ScalarFn::Constant(c(1.0)), SparseMat::from_dense(a.as_ref())),
            (ScalarFn::Monomial(1), SparseMat::identity(3).scaled(c(-1.0))),
        ])
        .unwrap();
        let mut want = pencil_eigs(a.as_ref(), dense::identity(3).as_ref()).unwrap().values;
        want.sort_by(target_order(c(1.5)));
        let got = oracle_nep(&nep, c(1.5), 2, 0.5).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).norm() < 1e-12);
        }
    }

    #[test]
    fn nep_delay_two_by_two_matches_determinant_newton() {
        let f = SparseMat::try_from_triplets(2, 2, &[(0, 1, c(0.5)), (1, 0, c(0.5))]).unwrap();
        let nep = SplitNEP::new(vec![
            (ScalarFn::Constant(c(1.0)), f),
            (ScalarFn::Monomial(1), SparseMat::identity(2).scaled(c(-1.0))),
            (ScalarFn::Exp { alpha: c(-2.0) }, SparseMat::identity(2).scaled(c(0.1))),
        ])
        .unwrap();
        let got = oracle_nep(&nep, c(0.0), 2, 0.5).unwrap();
        // det = (−s + 0.1e^{−2s})² − 0.25 factors into ±0.5 branches
        for l in got {
            let g = -l + 0.1 * (-2.0 * l).exp();
            let branch = if (g - 0.5).norm() < (g + 0.5).norm() { 0.5 } else { -0.5 };
            let root = oracle_scalar_root(
                |s| -s + 0.1 * (-2.0 * s).exp() - branch,
                |s| c(-1.0) - 0.2 * (-2.0 * s).exp(),
                l,
            )
            .unwrap();
            assert!((l - root).norm() <= 1e-10, "{l:?} vs {root:?}");
        }
    }

    #[test]
    fn nep_size_cap() {
        let nep = SplitNEP::new(vec![(ScalarFn::Exp { alpha: c(1.0) }, SparseMat::identity(301))]).unwrap();
        assert!(matches!(oracle_nep(&nep, c(0.0), 1, 1.0), Err(Error::SizeCap { .. })));
    }
}
