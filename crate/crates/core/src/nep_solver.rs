//! Interpolatory subspace iteration for split-form nonlinear problems.
//!
//! An expansion at `μ` factorizes `A(μ)` once and appends the derivative
//! chain `X^{(j)}(μ)`, `j < q`, of `A(s)⁻¹B(s)` to `V`; in two-sided mode the
//! adjoint chain of `(C(s)A(s)⁻¹)ᴴ` goes to `W`. The reduced problem is again
//! in split form with the same scalar functions and coefficient matrices
//! `[[WᴴA_jV, WᴴB_j], [C_jV, D_j]]`.

use faer::{c64, ColRef, Mat};
use rand_chacha::ChaCha8Rng;

use crate::dense::{self, DenseMat, DenseVec};
use crate::error::{Error, Result};
use crate::nep::{embed, residual_split, solve_chain_counted, PartitionedNEP, ScalarFn, SplitNEP};
use crate::rep_solver::{perturbed_point, Directions};
use crate::small_nep::{companion_eigs, contour_eigs_refined, Contour};
use crate::sparse::factorize_at;
use crate::subspace::{
    run_loop, Candidate, Expansion, Mode, ProjectionPair, SolveOptions, SolveReport, Strategy,
    SubspaceProblem,
};

/// Upper bound on contour attempts for one reduced solve.
const MAX_CONTOUR_ATTEMPTS: usize = 12;

/// Right (and in two-sided mode adjoint) derivative chains at `mu`, moving
/// `mu` once off a pole of `A(s)⁻¹`.
pub fn expand_nep(p: &PartitionedNEP, mu: c64, q: usize, mode: Mode) -> Result<Directions> {
    if q < mode.min_q() {
        return Err(Error::invalid(format!("{mode} expansion needs q >= {}, got {q}", mode.min_q())));
    }
    let adjoint = mode == Mode::TwoSided;
    let (chain, point, factorizations) = match solve_chain_counted(p, mu, q, adjoint) {
        Ok((c, f)) => (c, mu, f),
        Err(Error::Pole { .. }) => {
            let mu2 = perturbed_point(mu);
            match solve_chain_counted(p, mu2, q, adjoint) {
                Ok((c, f)) => (c, mu2, f + 1),
                Err(Error::Pole { .. }) => return Err(Error::Pole { s: mu }),
                Err(e) => return Err(e),
            }
        }
        Err(e) => return Err(e),
    };
    let hcat = |blocks: &[DenseMat]| {
        let (k, m) = (blocks[0].nrows(), blocks[0].ncols());
        let mut out = Mat::zeros(k, m * blocks.len());
        for (j, b) in blocks.iter().enumerate() {
            out.as_mut().get_mut(.., j * m..(j + 1) * m).copy_from(b);
        }
        out
    };
    let v = hcat(&chain.x);
    let w = chain.y.as_deref().map(hcat);
    let adjoint_solves = if w.is_some() { q } else { 0 };
    Ok(Directions { point, v, w, factorizations, adjoint_solves })
}

/// Projected split problem `T^{W,V}(s) = Σ f_j(s)·[[WᴴA_jV, WᴴB_j], [C_jV, D_j]]`.
#[derive(Debug, Clone)]
pub struct ReducedSplitNEP {
    m: usize,
    fns: Vec<ScalarFn>,
    av: Vec<DenseMat>,
    wav: Vec<DenseMat>,
    wb: Vec<DenseMat>,
    cv: Vec<DenseMat>,
    d: Vec<DenseMat>,
    mats: Vec<DenseMat>,
}

/// Projected blocks for the current bases.
pub fn assemble_reduced(p: &PartitionedNEP, proj: &ProjectionPair) -> ReducedSplitNEP {
    let (v, w) = (proj.v(), proj.w());
    let av: Vec<DenseMat> = p.a_blocks().iter().map(|a| a.mul_dense(v)).collect();
    let mut red = ReducedSplitNEP {
        m: p.m(),
        fns: p.fns().to_vec(),
        wav: av.iter().map(|x| w.adjoint() * x).collect(),
        wb: p.b_blocks().iter().map(|b| w.adjoint() * b).collect(),
        cv: p.c_blocks().iter().map(|c| c * v).collect(),
        d: p.d_blocks().to_vec(),
        av,
        mats: Vec::new(),
    };
    red.assemble();
    red
}

impl ReducedSplitNEP {
    pub fn r(&self) -> usize {
        self.wav[0].nrows()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn size(&self) -> usize {
        self.r() + self.m
    }

    pub fn fns(&self) -> &[ScalarFn] {
        &self.fns
    }

    /// Assembled `(r+m)×(r+m)` coefficient matrices.
    pub fn mats(&self) -> &[DenseMat] {
        &self.mats
    }

    fn assemble(&mut self) {
        let (r, m) = (self.r(), self.m);
        self.mats = (0..self.fns.len())
            .map(|j| {
                let mut t = Mat::zeros(r + m, r + m);
                t.as_mut().get_mut(..r, ..r).copy_from(&self.wav[j]);
                t.as_mut().get_mut(..r, r..).copy_from(&self.wb[j]);
                t.as_mut().get_mut(r.., ..r).copy_from(&self.cv[j]);
                t.as_mut().get_mut(r.., r..).copy_from(&self.d[j]);
                t
            })
            .collect();
    }

    /// Grows the projected blocks after `proj` gained columns `r0..`.
    pub fn grow(&mut self, p: &PartitionedNEP, proj: &ProjectionPair, r0: usize) {
        let r = proj.dim();
        if r == r0 {
            return;
        }
        let (v, w) = (proj.v(), proj.w());
        let (vn, wn) = (v.get(.., r0..), w.get(.., r0..));
        for (j, a) in p.a_blocks().iter().enumerate() {
            let avn = a.mul_dense(vn);
            let mut wav = Mat::zeros(r, r);
            wav.as_mut().get_mut(..r0, ..r0).copy_from(&self.wav[j]);
            wav.as_mut().get_mut(.., r0..).copy_from(w.adjoint() * &avn);
            wav.as_mut().get_mut(r0.., ..r0).copy_from(wn.adjoint() * &self.av[j]);
            let mut av = Mat::zeros(v.nrows(), r);
            av.as_mut().get_mut(.., ..r0).copy_from(&self.av[j]);
            av.as_mut().get_mut(.., r0..).copy_from(&avn);
            self.wav[j] = wav;
            self.av[j] = av;

            let mut wb = Mat::zeros(r, self.m);
            wb.as_mut().get_mut(..r0, ..).copy_from(&self.wb[j]);
            wb.as_mut().get_mut(r0.., ..).copy_from(wn.adjoint() * &p.b_blocks()[j]);
            self.wb[j] = wb;

            let mut cv = Mat::zeros(self.m, r);
            cv.as_mut().get_mut(.., ..r0).copy_from(&self.cv[j]);
            cv.as_mut().get_mut(.., r0..).copy_from(&p.c_blocks()[j] * vn);
            self.cv[j] = cv;
        }
        self.assemble();
    }

    /// `T^{W,V}(s)`.
    pub fn eval(&self, s: c64) -> Result<DenseMat> {
        self.eval_deriv(s, 0)
    }

    /// `d^j/ds^j T^{W,V}(s)`.
    pub fn eval_deriv(&self, s: c64, j: usize) -> Result<DenseMat> {
        let f = self.fns.iter().map(|f| Ok(f.derivs(s, j)?[j])).collect::<Result<Vec<_>>>()?;
        Ok(combine(&f, &self.mats))
    }

    /// `A^{W,V}(s) = Σ f_j(s)·WᴴA_jV`.
    pub fn a_at(&self, s: c64) -> Result<DenseMat> {
        let f = self.fns.iter().map(|f| f.eval(s)).collect::<Result<Vec<_>>>()?;
        Ok(combine(&f, &self.wav))
    }

    /// Reduced `𝓡(s) = C^V(s)·A^{W,V}(s)⁻¹·B^W(s) − D(s)`.
    pub fn transfer(&self, s: c64) -> Result<DenseMat> {
        let f = self.fns.iter().map(|f| f.eval(s)).collect::<Result<Vec<_>>>()?;
        let a = combine(&f, &self.wav);
        let b = combine(&f, &self.wb);
        let c = combine(&f, &self.cv);
        let d = combine(&f, &self.d);
        let x = dense::dense_solve(a.as_ref(), b.as_ref(), false).map_err(|_| Error::Pole { s })?;
        Ok(c * x - d)
    }

    /// Dense coefficients `P_0..P_d` when every function is a polynomial.
    pub fn polynomial_coeffs(&self) -> Option<Vec<DenseMat>> {
        let polys: Vec<Vec<c64>> = self.fns.iter().map(|f| f.polynomial_coeffs()).collect::<Option<_>>()?;
        let deg = polys.iter().map(|p| p.len()).max().unwrap_or(1).max(1);
        let size = self.size();
        let mut out = vec![Mat::<c64>::zeros(size, size); deg];
        for (p, t) in polys.iter().zip(&self.mats) {
            for (i, &c) in p.iter().enumerate() {
                if c != c64::new(0.0, 0.0) {
                    out[i] += faer::Scale(c) * t;
                }
            }
        }
        while out.len() > 1 && dense::norm_max(out.last().unwrap().as_ref()) == 0.0 {
            out.pop();
        }
        Some(out)
    }
}

/// `Σ coeffs_j·mats_j`.
fn combine(coeffs: &[c64], mats: &[DenseMat]) -> DenseMat {
    let mut out = Mat::zeros(mats[0].nrows(), mats[0].ncols());
    for (f, m) in coeffs.iter().zip(mats) {
        if *f != c64::new(0.0, 0.0) {
            out += faer::Scale(*f) * m;
        }
    }
    out
}

/// Full `𝓡(s) = C(s)·A(s)⁻¹·B(s) − D(s)` through one sparse factorization.
pub fn transfer(p: &PartitionedNEP, s: c64) -> Result<DenseMat> {
    let f = p.fns().iter().map(|f| f.eval(s)).collect::<Result<Vec<_>>>()?;
    let fac = factorize_at(&p.a_at(s)?, s).map_err(|e| match e {
        Error::SingularPivot { .. } => Error::Pole { s },
        other => other,
    })?;
    let comb = |mats: &[DenseMat]| combine(&f, mats);
    let x = fac.solve_multi(comb(p.b_blocks()).as_ref(), false)?;
    Ok(comb(p.c_blocks()) * x - comb(p.d_blocks()))
}

/// Settings for [`solve_reduced`].
#[derive(Debug, Clone, Copy)]
pub struct ReducedSolveOptions {
    pub filter_tol: f64,
    /// Starting contour radius for non-polynomial problems.
    pub radius: f64,
    pub nodes: usize,
}

/// Up to `want` eigenpairs of the reduced problem closest to `tau`, without
/// those where `σ_min(A^{W,V}(λ)) ≤ filter_tol·‖A^{W,V}(λ)‖_∞`.
///
/// Polynomial problems go through the companion pencil. Otherwise a contour
/// around `tau` is used; it grows when it holds fewer than `want` accepted
/// eigenvalues, takes more probes or shrinks on a rank failure, and shrinks
/// when it crosses a singularity of the coefficient functions. Every retry is
/// appended to `notes`.
pub fn solve_reduced(
    red: &ReducedSplitNEP,
    tau: c64,
    want: usize,
    opts: &ReducedSolveOptions,
    rng: &mut ChaCha8Rng,
    notes: &mut Vec<String>,
) -> Result<Vec<(c64, DenseVec)>> {
    if red.size() == 0 {
        return Ok(Vec::new());
    }
    if let Some(coeffs) = red.polynomial_coeffs() {
        if coeffs.len() >= 2 {
            let all = companion_eigs(&coeffs, tau, None)?;
            return filter_poles(red, all, want, opts.filter_tol);
        }
        // a constant problem has no eigenvalues unless it is singular
        return Ok(Vec::new());
    }

    let size = red.size();
    let eval = |s: c64| red.eval(s);
    let deriv = |s: c64| red.eval_deriv(s, 1);
    let mut radius = opts.radius;
    let mut probes = (want + 4).min(size);
    let mut best: Vec<(c64, DenseVec)> = Vec::new();
    for attempt in 1..=MAX_CONTOUR_ATTEMPTS {
        let contour = Contour::new(tau, radius, opts.nodes, probes)?;
        match contour_eigs_refined(&eval, Some(&deriv), &contour, None, tau, rng) {
            Ok(found) => {
                let kept = filter_poles(red, found, want, opts.filter_tol)?;
                if kept.len() >= best.len() {
                    best = kept;
                }
                if best.len() >= want {
                    break;
                }
                if attempt < MAX_CONTOUR_ATTEMPTS {
                    notes.push(format!(
                        "contour radius {radius:.3e} holds {} of {want} eigenvalues; growing to {:.3e}",
                        best.len(),
                        2.0 * radius
                    ));
                    radius *= 2.0;
                }
            }
            Err(Error::ContourRank { .. }) => {
                if probes < size {
                    let next = (2 * probes).min(size);
                    notes.push(format!("contour rank saturated with {probes} probes; retrying with {next}"));
                    probes = next;
                } else {
                    notes.push(format!("contour rank saturated at radius {radius:.3e}; shrinking to {:.3e}", 0.6 * radius));
                    radius *= 0.6;
                }
            }
            Err(Error::Pole { s }) => {
                notes.push(format!(
                    "contour radius {radius:.3e} meets a singularity near {s}; shrinking to {:.3e}",
                    0.93 * radius
                ));
                radius *= 0.93;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

fn filter_poles(
    red: &ReducedSplitNEP,
    mut eigs: Vec<(c64, DenseVec)>,
    want: usize,
    filter_tol: f64,
) -> Result<Vec<(c64, DenseVec)>> {
    let r = red.r();
    let mut out = Vec::new();
    for (lam, v) in eigs.drain(..) {
        if out.len() >= want {
            break;
        }
        if r > 0 {
            let Ok(a) = red.a_at(lam) else { continue };
            if dense::sigma_min(a.as_ref())? <= filter_tol * dense::norm_inf(a.as_ref()) {
                continue;
            }
        }
        out.push((lam, v));
    }
    Ok(out)
}

struct NepProblem<'a> {
    nep: &'a SplitNEP,
    part: PartitionedNEP,
    proj: ProjectionPair,
    red: Option<ReducedSplitNEP>,
    q: usize,
    drop_tol: f64,
    recompute: bool,
    embedded_norm: bool,
    reduced_opts: ReducedSolveOptions,
}

impl SubspaceProblem for NepProblem<'_> {
    fn expand(&mut self, mu: c64) -> Result<Expansion> {
        let dirs = expand_nep(&self.part, mu, self.q, self.proj.mode())?;
        let r0 = self.proj.dim();
        let added = self.proj.extend(dirs.v.as_ref(), dirs.w.as_ref().map(|w| w.as_ref()), self.drop_tol)?;
        match &mut self.red {
            Some(red) if !self.recompute => red.grow(&self.part, &self.proj, r0),
            _ => self.red = Some(assemble_reduced(&self.part, &self.proj)),
        }
        Ok(Expansion {
            point: dirs.point,
            factorizations: dirs.factorizations,
            adjoint_solves: dirs.adjoint_solves,
            added,
        })
    }

    fn candidates(&mut self, tau: c64, want: usize, rng: &mut ChaCha8Rng, notes: &mut Vec<String>) -> Result<Vec<Candidate>> {
        let Some(red) = &self.red else {
            return Ok(Vec::new());
        };
        let eigs = solve_reduced(red, tau, want, &self.reduced_opts, rng, notes)?;
        Ok(eigs.into_iter().map(|(lambda, v_reduced)| Candidate { lambda, v_reduced }).collect())
    }

    fn residual(&self, lambda: c64, v_reduced: ColRef<'_, c64>) -> Result<f64> {
        residual_split(self.nep, lambda, v_reduced, self.proj.v(), self.part.m(), self.embedded_norm)
    }

    fn embed(&self, v_reduced: ColRef<'_, c64>) -> DenseVec {
        embed(v_reduced, self.proj.v(), self.part.m())
    }

    fn basis(&self) -> &ProjectionPair {
        &self.proj
    }
}

/// Starting contour radius: twice the distance from `tau` to the nearest
/// initial point, and at least `init_radius`.
pub fn reduced_radius(tau: c64, opts: &SolveOptions) -> f64 {
    let nearest = opts
        .init_points
        .as_deref()
        .unwrap_or(&[])
        .iter()
        .map(|p| (p - tau).norm())
        .fold(f64::INFINITY, f64::min);
    if nearest.is_finite() { (2.0 * nearest).max(opts.init_radius) } else { opts.init_radius }
}

/// Computes the `k_eigs` eigenvalues of `T` closest to `tau`.
///
/// The trailing `opts.m` rows and columns form the `D` block; permute the
/// problem beforehand if another split is wanted.
pub fn solve_nep(
    nep: &SplitNEP,
    tau: c64,
    k_eigs: usize,
    strategy: Strategy,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    let part = PartitionedNEP::new(nep, opts.m).map_err(|e| Error::Config { field: "m".into(), msg: e.to_string() })?;
    let mut problem = NepProblem {
        nep,
        proj: ProjectionPair::empty(part.k(), opts.mode),
        part,
        red: None,
        q: opts.q(),
        drop_tol: opts.effective_drop_tol(),
        recompute: opts.recompute_blocks,
        embedded_norm: opts.embedded_norm,
        reduced_opts: ReducedSolveOptions {
            filter_tol: opts.filter_tol,
            radius: reduced_radius(tau, opts),
            nodes: opts.contour_nodes,
        },
    };
    run_loop(&mut problem, tau, k_eigs, strategy, opts)
}
