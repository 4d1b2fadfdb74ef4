//! Interpolatory subspace iteration for rational problems in transfer-function
//! form.
//!
//! Each expansion at a point `μ` factorizes `A − μI` once and appends the
//! chain `(A − μI)^{-j}B`, `j = 1..q`, to `V`, and in two-sided mode the
//! adjoint chain `(A − μI)^{-ᴴj}Cᴴ` to `W`. The reduced pencil replaces
//! `A, B, C, I` in the linearization by `WᴴAV, WᴴB, CV, WᴴV`.

use faer::{c64, Col, ColRef, Mat, MatRef};
use rand_chacha::ChaCha8Rng;

use crate::dense::{self, pencil_eigs, sigma_min, DenseMat, DenseVec};
use crate::error::{Error, Result};
use crate::rep::{build_linearization, poly_derivative, residual_rational, Linearization, StateSpaceREP};
use crate::sparse::{factorize_at, Factorization, SparseMat};
use crate::subspace::{
    run_loop, target_order, Candidate, Expansion, Mode, ProjectionPair, SolveOptions, SolveReport, Strategy,
    SubspaceProblem,
};

const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// Expansion directions at one interpolation point.
#[derive(Debug, Clone)]
pub struct Directions {
    /// The point actually used (shifted off a pole if needed).
    pub point: c64,
    pub v: DenseMat,
    /// Left directions; absent in one-sided mode.
    pub w: Option<DenseMat>,
    pub factorizations: usize,
    pub adjoint_solves: usize,
}

/// Retry point used when `μ` is an eigenvalue of the middle factor.
pub fn perturbed_point(mu: c64) -> c64 {
    mu * (1.0 + 1e-8) + c64::new(0.0, 1e-8)
}

/// Factorizes `A − μI`, moving `μ` once off a pole.
fn factorize_shift(a: &SparseMat, mu: c64) -> Result<(Factorization, c64, usize)> {
    match factorize_at(&a.shifted(mu), mu) {
        Ok(f) => Ok((f, mu, 1)),
        Err(Error::SingularPivot { .. }) => {
            let mu2 = perturbed_point(mu);
            match factorize_at(&a.shifted(mu2), mu2) {
                Ok(f) => Ok((f, mu2, 2)),
                Err(Error::SingularPivot { .. }) => Err(Error::Pole { s: mu }),
                Err(e) => Err(e),
            }
        }
        Err(e) => Err(e),
    }
}

/// `[F⁻¹X, F⁻²X, …, F⁻qX]` (or with `F⁻ᴴ`).
fn power_chain(f: &Factorization, x: MatRef<'_, c64>, q: usize, adjoint: bool) -> Result<DenseMat> {
    let w = x.ncols();
    let mut out = Mat::zeros(x.nrows(), w * q);
    let mut cur = x.to_owned();
    for j in 0..q {
        cur = f.solve_multi(cur.as_ref(), adjoint)?;
        out.as_mut().get_mut(.., j * w..(j + 1) * w).copy_from(&cur);
    }
    Ok(out)
}

fn expand(sys: &StateSpaceREP, mu: c64, q: usize, mode: Mode) -> Result<Directions> {
    let (f, point, factorizations) = factorize_shift(sys.a(), mu)?;
    let (v, w) = match mode {
        Mode::TwoSided => {
            let ch = sys.c().adjoint().to_owned();
            let (v, w) = rayon::join(
                || power_chain(&f, sys.b().as_ref(), q, false),
                || power_chain(&f, ch.as_ref(), q, true),
            );
            (v?, Some(w?))
        }
        Mode::OneSided => (power_chain(&f, sys.b().as_ref(), q, false)?, None),
    };
    let adjoint_solves = if w.is_some() { q } else { 0 };
    Ok(Directions { point, v, w, factorizations, adjoint_solves })
}

/// Right chain `(A − μI)^{-j}B` and adjoint chain `(A − μI)^{-ᴴj}Cᴴ`,
/// `j = 1..q`, from a single factorization.
pub fn expand_two_sided(sys: &StateSpaceREP, mu: c64, q: usize) -> Result<Directions> {
    if q < 2 {
        return Err(Error::invalid(format!("two-sided expansion needs q >= 2, got {q}")));
    }
    expand(sys, mu, q, Mode::TwoSided)
}

/// Right chain only; the caller uses `W = V`.
pub fn expand_one_sided(sys: &StateSpaceREP, mu: c64, q: usize) -> Result<Directions> {
    if q < 3 {
        return Err(Error::invalid(format!("one-sided expansion needs q >= 3, got {q}")));
    }
    expand(sys, mu, q, Mode::OneSided)
}

/// Projected blocks `AV`, `WᴴAV`, `WᴴV`, `WᴴB`, `CV`.
#[derive(Debug, Clone)]
struct ReducedBlocks {
    av: DenseMat,
    wav: DenseMat,
    wv: DenseMat,
    wb: DenseMat,
    cv: DenseMat,
}

impl ReducedBlocks {
    fn compute(sys: &StateSpaceREP, proj: &ProjectionPair) -> Self {
        let (v, w) = (proj.v(), proj.w());
        let av = sys.a().mul_dense(v);
        Self { wav: w.adjoint() * &av, wv: w.adjoint() * v, wb: w.adjoint() * sys.b(), cv: sys.c() * v, av }
    }

    /// Grows the blocks after `proj` gained columns `r0..`.
    fn grow(&mut self, sys: &StateSpaceREP, proj: &ProjectionPair, r0: usize) {
        let r = proj.dim();
        if r == r0 {
            return;
        }
        let (v, w) = (proj.v(), proj.w());
        let (vn, wn) = (v.get(.., r0..), w.get(.., r0..));
        let avn = sys.a().mul_dense(vn);
        let mut av = Mat::zeros(v.nrows(), r);
        av.as_mut().get_mut(.., ..r0).copy_from(&self.av);
        av.as_mut().get_mut(.., r0..).copy_from(&avn);

        let grow_square = |old: &DenseMat, left_all: MatRef<'_, c64>, right_old: MatRef<'_, c64>, right_new: MatRef<'_, c64>| {
            let mut out = Mat::zeros(r, r);
            out.as_mut().get_mut(..r0, ..r0).copy_from(old);
            out.as_mut().get_mut(.., r0..).copy_from(left_all.adjoint() * right_new);
            out.as_mut().get_mut(r0.., ..r0).copy_from(wn.adjoint() * right_old);
            out
        };
        self.wav = grow_square(&self.wav, w, self.av.as_ref(), avn.as_ref());
        self.wv = grow_square(&self.wv, w, v.get(.., ..r0), vn);

        let mut wb = Mat::zeros(r, self.wb.ncols());
        wb.as_mut().get_mut(..r0, ..).copy_from(&self.wb);
        wb.as_mut().get_mut(r0.., ..).copy_from(wn.adjoint() * sys.b());
        let mut cv = Mat::zeros(self.cv.nrows(), r);
        cv.as_mut().get_mut(.., ..r0).copy_from(&self.cv);
        cv.as_mut().get_mut(.., r0..).copy_from(sys.c() * vn);
        self.av = av;
        self.wb = wb;
        self.cv = cv;
    }

    fn pencil(&self, sys: &StateSpaceREP) -> (DenseMat, DenseMat) {
        let r = self.wav.nrows();
        let (n, d) = (sys.n(), sys.degree());
        let size = r + n * d;
        let mut a = Mat::zeros(size, size);
        let mut b = Mat::zeros(size, size);
        a.as_mut().get_mut(..r, ..r).copy_from(&self.wav);
        a.as_mut().get_mut(..r, r + n * (d - 1)..).copy_from(&self.wb);
        a.as_mut().get_mut(r..r + n, ..r).copy_from(&self.cv);
        for blk in 0..d {
            if let Some(p) = sys.p().get(d - 1 - blk) {
                a.as_mut().get_mut(r..r + n, r + blk * n..r + (blk + 1) * n).copy_from(p);
            }
        }
        for blk in 1..d {
            for i in 0..n {
                a[(r + blk * n + i, r + (blk - 1) * n + i)] = -ONE;
                b[(r + blk * n + i, r + blk * n + i)] = -ONE;
            }
        }
        b.as_mut().get_mut(..r, ..r).copy_from(&self.wv);
        if let Some(pd) = sys.p().get(d) {
            b.as_mut().get_mut(r..r + n, r..r + n).copy_from(-pd);
        }
        (a, b)
    }
}

/// Dense reduced pencil `(𝓐^{W,V}, 𝓑^{W,V})` of size `r + n·d`.
pub fn build_reduced_pencil(sys: &StateSpaceREP, proj: &ProjectionPair) -> (DenseMat, DenseMat) {
    ReducedBlocks::compute(sys, proj).pencil(sys)
}

/// Finite eigenpairs of the reduced pencil, closest to `tau` first, without
/// those `λ` where `σ_min(WᴴAV − λWᴴV) ≤ filter_tol·‖WᴴAV‖_∞`.
///
/// `WᴴAV` and `WᴴV` are read from the leading `r×r` blocks. The pole test
/// runs lazily and stops once `limit` eigenpairs have been accepted.
pub fn reduced_eigs_filtered(
    acal: MatRef<'_, c64>,
    bcal: MatRef<'_, c64>,
    r: usize,
    tau: c64,
    limit: Option<usize>,
    filter_tol: f64,
) -> Result<Vec<(c64, DenseVec)>> {
    let eig = pencil_eigs(acal, bcal)?;
    let mut order: Vec<usize> = (0..eig.values.len()).collect();
    let cmp = target_order(tau);
    order.sort_by(|&i, &j| cmp(&eig.values[i], &eig.values[j]));
    let (wav, wv) = (acal.get(..r, ..r), bcal.get(..r, ..r));
    let scale = dense::norm_inf(wav);
    let mut out = Vec::new();
    for i in order {
        if limit.is_some_and(|l| out.len() >= l) {
            break;
        }
        let lam = eig.values[i];
        if r > 0 {
            let m = wav - faer::Scale(lam) * wv;
            if sigma_min(m.as_ref())? <= filter_tol * scale {
                continue;
            }
        }
        out.push((lam, eig.vectors.col(i).to_owned()));
    }
    Ok(out)
}

/// `[R_red(s), …, R_red^{(up_to)}(s)]` for the projected transfer function
/// `P(s) + CV(sWᴴV − WᴴAV)⁻¹WᴴB`.
pub fn reduced_transfer_derivs(
    sys: &StateSpaceREP,
    proj: &ProjectionPair,
    s: c64,
    up_to: usize,
) -> Result<Vec<DenseMat>> {
    let blocks = ReducedBlocks::compute(sys, proj);
    let m = faer::Scale(s) * &blocks.wv - &blocks.wav;
    let mut x = dense::dense_solve(m.as_ref(), blocks.wb.as_ref(), false)?;
    let mut fact = 1.0;
    let mut out = Vec::with_capacity(up_to + 1);
    for j in 0..=up_to {
        if j > 0 {
            fact *= j as f64;
            x = dense::dense_solve(m.as_ref(), (&blocks.wv * &x).as_ref(), false)?;
        }
        let sign = if j % 2 == 0 { fact } else { -fact };
        let mut r = poly_derivative(sys.p(), sys.n(), s, j);
        r += faer::Scale(c64::new(sign, 0.0)) * (&blocks.cv * &x);
        out.push(r);
    }
    Ok(out)
}

struct RepProblem<'a> {
    sys: &'a StateSpaceREP,
    lin: Linearization,
    proj: ProjectionPair,
    blocks: Option<ReducedBlocks>,
    q: usize,
    drop_tol: f64,
    filter_tol: f64,
    recompute: bool,
}

impl SubspaceProblem for RepProblem<'_> {
    fn expand(&mut self, mu: c64) -> Result<Expansion> {
        let dirs = expand(self.sys, mu, self.q, self.proj.mode())?;
        let r0 = self.proj.dim();
        let added = self.proj.extend(dirs.v.as_ref(), dirs.w.as_ref().map(|w| w.as_ref()), self.drop_tol)?;
        match &mut self.blocks {
            Some(b) if !self.recompute => b.grow(self.sys, &self.proj, r0),
            _ => self.blocks = Some(ReducedBlocks::compute(self.sys, &self.proj)),
        }
        Ok(Expansion {
            point: dirs.point,
            factorizations: dirs.factorizations,
            adjoint_solves: dirs.adjoint_solves,
            added,
        })
    }

    fn candidates(&mut self, tau: c64, want: usize, _: &mut ChaCha8Rng, _: &mut Vec<String>) -> Result<Vec<Candidate>> {
        let Some(blocks) = &self.blocks else {
            return Ok(Vec::new());
        };
        let (a, b) = blocks.pencil(self.sys);
        let eigs = reduced_eigs_filtered(a.as_ref(), b.as_ref(), self.proj.dim(), tau, Some(want), self.filter_tol)?;
        Ok(eigs.into_iter().map(|(lambda, v_reduced)| Candidate { lambda, v_reduced }).collect())
    }

    fn residual(&self, lambda: c64, v_reduced: ColRef<'_, c64>) -> Result<f64> {
        residual_rational(self.sys, &self.lin, lambda, v_reduced, self.proj.v())
    }

    fn embed(&self, v_reduced: ColRef<'_, c64>) -> DenseVec {
        let n = self.sys.n();
        let len = v_reduced.nrows();
        Col::from_fn(n, |i| v_reduced[len - n + i])
    }

    fn basis(&self) -> &ProjectionPair {
        &self.proj
    }
}

/// Computes the `k_eigs` eigenvalues of `R` closest to `tau`.
pub fn solve_rep(
    sys: &StateSpaceREP,
    tau: c64,
    k_eigs: usize,
    strategy: Strategy,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let mut problem = RepProblem {
        sys,
        lin: build_linearization(sys),
        proj: ProjectionPair::empty(sys.k(), opts.mode),
        blocks: None,
        q: opts.q(),
        drop_tol: opts.effective_drop_tol(),
        filter_tol: opts.filter_tol,
        recompute: opts.recompute_blocks,
    };
    run_loop(&mut problem, tau, k_eigs, strategy, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DEFAULT_DROP_TOL;
    use rand::{Rng, SeedableRng};

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    fn scalar(v: f64) -> DenseMat {
        Mat::from_fn(1, 1, |_, _| c(v))
    }

    fn two_state() -> StateSpaceREP {
        StateSpaceREP::new(
            vec![scalar(0.0)],
            SparseMat::from_diag(&[c(1.0), c(3.0)]),
            Mat::from_fn(2, 1, |_, _| c(1.0)),
            Mat::from_fn(1, 2, |_, _| c(1.0)),
        )
        .unwrap()
    }

    fn random_sys(rng: &mut ChaCha8Rng, k: usize, n: usize) -> StateSpaceREP {
        let mut t = Vec::new();
        for j in 0..k {
            for i in j.saturating_sub(1)..(j + 2).min(k) {
                t.push((i, j, c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 4.0));
            }
        }
        let rnd = |rng: &mut ChaCha8Rng, r, cc| Mat::from_fn(r, cc, |_, _| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        StateSpaceREP::new(
            vec![rnd(rng, n, n)],
            SparseMat::try_from_triplets(k, k, &t).unwrap(),
            rnd(rng, k, n),
            rnd(rng, n, k),
        )
        .unwrap()
    }

    #[test]
    fn two_sided_directions_are_diagonal_powers() {
        let d = expand_two_sided(&two_state(), c(0.0), 2).unwrap();
        let want = [[1.0, 1.0], [1.0 / 3.0, 1.0 / 9.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((d.v[(i, j)] - c(want[i][j])).norm() < 1e-15);
            }
        }
        // C = Bᴴ and A Hermitian: both chains agree
        let w = d.w.unwrap();
        assert!(dense::norm_max((&w - &d.v).as_ref()) < 1e-15);
        assert_eq!((d.factorizations, d.adjoint_solves), (1, 2));
    }

    #[test]
    fn one_sided_directions() {
        let d = expand_one_sided(&two_state(), c(0.0), 3).unwrap();
        assert_eq!(d.v.ncols(), 3);
        assert!((d.v[(1, 2)] - c(1.0 / 27.0)).norm() < 1e-16);
        assert!(d.w.is_none());
        assert!(expand_one_sided(&two_state(), c(0.0), 2).is_err());
    }

    #[test]
    fn expansion_at_a_pole_is_shifted() {
        let d = expand_two_sided(&two_state(), c(1.0), 2).unwrap();
        assert_eq!(d.point, perturbed_point(c(1.0)));
        assert_eq!(d.factorizations, 2);
    }

    #[test]
    fn full_space_projection_reproduces_linearization() {
        let sys = two_state();
        let d = expand_two_sided(&sys, c(0.0), 2).unwrap();
        let mut proj = ProjectionPair::empty(2, Mode::TwoSided);
        proj.extend(d.v.as_ref(), d.w.as_ref().map(|w| w.as_ref()), DEFAULT_DROP_TOL).unwrap();
        assert_eq!(proj.dim(), 2);
        let (a, b) = build_reduced_pencil(&sys, &proj);
        let e = reduced_eigs_filtered(a.as_ref(), b.as_ref(), 2, c(2.5), None, 1e-8).unwrap();
        assert_eq!(e.len(), 1);
        assert!((e[0].0 - c(2.0)).norm() < 1e-13);
    }

    #[test]
    fn identity_projection_equals_full_pencil() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sys = random_sys(&mut rng, 6, 2);
        let mut proj = ProjectionPair::empty(6, Mode::TwoSided);
        let eye = dense::identity(6);
        proj.extend(eye.as_ref(), Some(eye.as_ref()), DEFAULT_DROP_TOL).unwrap();
        let (a, b) = build_reduced_pencil(&sys, &proj);
        let lin = build_linearization(&sys);
        assert!(dense::norm_max((&a - lin.acal.to_dense()).as_ref()) < 1e-15);
        assert!(dense::norm_max((&b - lin.bcal.to_dense()).as_ref()) < 1e-15);
    }

    #[test]
    fn filter_removes_unobservable_mode() {
        // The mode at 5 is controllable but unobservable, so it is an
        // eigenvalue of the full pencil and of A but not of R.
        let sys = StateSpaceREP::new(
            vec![scalar(0.0)],
            SparseMat::from_diag(&[c(1.0), c(3.0), c(5.0)]),
            Mat::from_fn(3, 1, |_, _| c(1.0)),
            Mat::from_fn(1, 3, |_, j| c(if j < 2 { 1.0 } else { 0.0 })),
        )
        .unwrap();
        let mut proj = ProjectionPair::empty(3, Mode::OneSided);
        let eye = dense::identity(3);
        proj.extend(eye.as_ref(), None, DEFAULT_DROP_TOL).unwrap();
        let (a, b) = build_reduced_pencil(&sys, &proj);
        let all = pencil_eigs(a.as_ref(), b.as_ref()).unwrap();
        assert!(all.values.iter().any(|l| (l - c(5.0)).norm() < 1e-12));
        let kept = reduced_eigs_filtered(a.as_ref(), b.as_ref(), 3, c(5.0), None, 1e-8).unwrap();
        assert_eq!(kept.len(), 1);
        assert!((kept[0].0 - c(2.0)).norm() < 1e-12);
    }

    #[test]
    fn nothing_filtered_on_generic_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sys = random_sys(&mut rng, 8, 1);
        let d = expand_two_sided(&sys, c64::new(0.1, 0.2), 3).unwrap();
        let mut proj = ProjectionPair::empty(8, Mode::TwoSided);
        proj.extend(d.v.as_ref(), d.w.as_ref().map(|w| w.as_ref()), DEFAULT_DROP_TOL).unwrap();
        let (a, b) = build_reduced_pencil(&sys, &proj);
        let all = pencil_eigs(a.as_ref(), b.as_ref()).unwrap();
        let kept = reduced_eigs_filtered(a.as_ref(), b.as_ref(), proj.dim(), c(0.0), None, 1e-8).unwrap();
        assert_eq!(kept.len(), all.values.len());
    }

    #[test]
    fn incremental_blocks_match_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sys = random_sys(&mut rng, 30, 2);
        for mode in [Mode::TwoSided, Mode::OneSided] {
            let q = mode.default_q();
            let mut proj = ProjectionPair::empty(30, mode);
            let mut blocks: Option<ReducedBlocks> = None;
            for mu in [c64::new(0.1, 0.0), c64::new(-0.3, 0.4), c64::new(0.7, -0.2)] {
                let d = expand(&sys, mu, q, mode).unwrap();
                let r0 = proj.dim();
                proj.extend(d.v.as_ref(), d.w.as_ref().map(|w| w.as_ref()), DEFAULT_DROP_TOL).unwrap();
                match &mut blocks {
                    Some(b) => b.grow(&sys, &proj, r0),
                    None => blocks = Some(ReducedBlocks::compute(&sys, &proj)),
                }
            }
            let (a1, b1) = blocks.unwrap().pencil(&sys);
            let (a2, b2) = build_reduced_pencil(&sys, &proj);
            assert!(dense::norm_max((&a1 - &a2).as_ref()) < 1e-12);
            assert!(dense::norm_max((&b1 - &b2).as_ref()) < 1e-12);
        }
    }

    #[test]
    fn hermite_interpolation_on_small_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sys = random_sys(&mut rng, 40, 2);
        let mu = c64::new(0.3, -0.2);
        let d = expand_two_sided(&sys, mu, 2).unwrap();
        let mut proj = ProjectionPair::empty(40, Mode::TwoSided);
        proj.extend(d.v.as_ref(), d.w.as_ref().map(|w| w.as_ref()), DEFAULT_DROP_TOL).unwrap();
        let full = sys.eval_r_derivs(mu, 3).unwrap();
        let red = reduced_transfer_derivs(&sys, &proj, mu, 3).unwrap();
        for j in 0..4 {
            let err = dense::norm_max((&full[j] - &red[j]).as_ref());
            assert!(err <= 1e-8 * dense::norm_max(full[j].as_ref()), "derivative {j}: {err}");
        }
    }

    #[test]
    fn solve_closed_form_zero() {
        let opts = SolveOptions { tol: 1e-12, ..Default::default() };
        let rep = solve_rep(&two_state(), c(2.5), 1, Strategy::All, &opts).unwrap();
        assert!(rep.converged());
        assert!(rep.iterations() <= 3);
        assert!((rep.estimates[0].lambda - c(2.0)).norm() < 1e-10);
    }
}
