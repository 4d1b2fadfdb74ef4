//! Dense eigensolvers for small nonlinear problems: companion linearization
//! of matrix polynomials and a probing contour-integral method for general
//! holomorphic matrix functions.

use faer::{c64, Col, Mat};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dense::{self, DenseMat, DenseVec};
use crate::error::{Error, Result};
use crate::subspace::target_order;

/// Singular values below this fraction of the largest (or of the integrand
/// size) are treated as noise.
const RANK_TOL: f64 = 1e-11;
/// Acceptance threshold `‖T(λ)v‖_∞ ≤ ACCEPT_TOL·‖T(λ)‖_∞·‖v‖_∞`.
pub const ACCEPT_TOL: f64 = 1e-8;
const REFINE_STEPS: usize = 8;

/// Circle `|s − center| = radius` discretized by the trapezoid rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contour {
    pub center: c64,
    pub radius: f64,
    pub nodes: usize,
    pub probe_cols: usize,
}

impl Contour {
    pub fn new(center: c64, radius: f64, nodes: usize, probe_cols: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("contour radius must be positive and finite, got {radius}")));
        }
        if nodes < 16 || nodes % 2 != 0 {
            return Err(Error::invalid(format!("contour needs an even node count >= 16, got {nodes}")));
        }
        if probe_cols == 0 {
            return Err(Error::invalid("contour needs at least one probe column"));
        }
        if !(center.re.is_finite() && center.im.is_finite()) {
            return Err(Error::invalid("contour center must be finite"));
        }
        Ok(Self { center, radius, nodes, probe_cols })
    }

    /// Default discretization: 64 nodes and `want + 4` probes.
    pub fn around(center: c64, radius: f64, want: usize) -> Result<Self> {
        Self::new(center, radius, 64, want + 4)
    }

    pub fn contains(&self, s: c64) -> bool {
        (s - self.center).norm() <= self.radius * (1.0 + 1e-12)
    }
}

/// Finite eigenpairs of `P(s) = Σ s^i·P_i` through the first companion pencil,
/// sorted by distance to `tau` and truncated to `want`.
pub fn companion_eigs(p: &[DenseMat], tau: c64, want: Option<usize>) -> Result<Vec<(c64, DenseVec)>> {
    if p.len() < 2 {
        return Err(Error::invalid("companion form needs a polynomial of degree >= 1"));
    }
    let n = p[0].nrows();
    for (i, c) in p.iter().enumerate() {
        if c.nrows() != n || c.ncols() != n {
            return Err(Error::shape(format!("coefficient {i} is {}x{}, expected {n}x{n}", c.nrows(), c.ncols())));
        }
    }
    let d = p.len() - 1;
    if dense::norm_max(p[d].as_ref()) == 0.0 {
        return Err(Error::invalid("leading polynomial coefficient is zero"));
    }
    let size = n * d;
    let mut a = Mat::<c64>::zeros(size, size);
    let mut b = Mat::<c64>::zeros(size, size);
    // unknown z = [s^{d−1}v; …; s·v; v]
    for j in 0..d {
        a.as_mut().get_mut(..n, j * n..(j + 1) * n).copy_from(-&p[d - 1 - j]);
    }
    b.as_mut().get_mut(..n, ..n).copy_from(&p[d]);
    for i in 1..d {
        for t in 0..n {
            a[(i * n + t, (i - 1) * n + t)] = c64::new(1.0, 0.0);
            b[(i * n + t, i * n + t)] = c64::new(1.0, 0.0);
        }
    }
    let eig = dense::pencil_eigs(a.as_ref(), b.as_ref())?;
    let mut out: Vec<(c64, DenseVec)> = eig
        .values
        .iter()
        .enumerate()
        .map(|(c, &lam)| {
            let z = eig.vectors.col(c);
            // all blocks are parallel; the outer one is better scaled for |λ| > 1
            let blk = if lam.norm() > 1.0 { 0 } else { d - 1 };
            let v = z.get(blk * n..(blk + 1) * n).to_owned();
            let s = dense::vec_norm_inf(v.as_ref());
            (lam, if s > 0.0 { v * faer::Scale(c64::new(1.0 / s, 0.0)) } else { v })
        })
        .collect();
    let order = target_order(tau);
    out.sort_by(|x, y| order(&x.0, &y.0));
    if let Some(w) = want {
        out.truncate(w);
    }
    Ok(out)
}

/// Matrix-valued function evaluated by the contour solver.
pub type EvalFn<'a> = dyn Fn(c64) -> Result<DenseMat> + Sync + 'a;

/// Eigenpairs of `T` inside `contour`, closest to `tau` first.
///
/// Moments `A_p = (2πi)⁻¹∮ ((z−c)/ρ)^p T(z)⁻¹ V̂ dz` against a random probe
/// block `V̂` are reduced by a rank-revealing SVD. One moment pair is used
/// first; when its rank saturates the probe count a block Hankel pair of four
/// moments is tried before giving up with [`Error::ContourRank`].
pub fn contour_eigs<R: Rng + ?Sized>(
    eval_t: &EvalFn<'_>,
    contour: &Contour,
    want: Option<usize>,
    tau: c64,
    rng: &mut R,
) -> Result<Vec<(c64, DenseVec)>> {
    contour_eigs_refined(eval_t, None, contour, want, tau, rng)
}

/// [`contour_eigs`] followed by nonlinear inverse iteration with the exact
/// derivative `eval_dt` on every candidate; a refined pair replaces the raw one
/// only when its residual is smaller.
pub fn contour_eigs_refined<R: Rng + ?Sized>(
    eval_t: &EvalFn<'_>,
    eval_dt: Option<&EvalFn<'_>>,
    contour: &Contour,
    want: Option<usize>,
    tau: c64,
    rng: &mut R,
) -> Result<Vec<(c64, DenseVec)>> {
    let n = eval_t(contour.center)?.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let p = contour.probe_cols.min(n);
    let probe = Mat::<c64>::from_fn(n, p, |_, _| {
        c64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });

    let nodes = contour.nodes;
    let solves: Vec<Result<(c64, DenseMat, f64)>> = (0..nodes)
        .into_par_iter()
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / nodes as f64;
            let w = c64::new(theta.cos(), theta.sin());
            let z = contour.center + w * contour.radius;
            let t = eval_t(z)?;
            let x = dense::dense_solve(t.as_ref(), probe.as_ref(), false).map_err(|e| match e {
                Error::Singular { .. } => Error::Pole { s: z },
                other => other,
            })?;
            Ok((w, x, dense::norm_inf(t.as_ref())))
        })
        .collect();

    let mut moments = vec![Mat::<c64>::zeros(n, p); 4];
    let mut node_scale = 0.0f64;
    let mut integrand = 0.0f64;
    for r in solves {
        let (w, x, tn) = r?;
        node_scale = node_scale.max(tn);
        integrand = integrand.max(x.norm_l2());
        // dz = iρw dθ leaves the weight ρw/N against 2πi
        let mut wp = w * (contour.radius / nodes as f64);
        for m in moments.iter_mut() {
            *m += faer::Scale(wp) * &x;
            wp *= w;
        }
    }
    // moments are now in the scaled variable μ = (z − c)/ρ

    let mut raw = Vec::new();
    let mut solved = false;
    for blocks in [1usize, 2] {
        let (h0, h1) = hankel(&moments, blocks);
        let svd = h0
            .thin_svd()
            .map_err(|_| Error::Decomposition { what: "singular value decomposition", size: h0.nrows() })?;
        let s = svd.S().column_vector();
        let smax = (0..s.nrows()).map(|i| s[i].re).fold(0.0, f64::max);
        // quadrature noise of a holomorphic integrand sits far below ρ·max‖T⁻¹V̂‖
        let cut = RANK_TOL * smax.max(contour.radius * integrand);
        let rank = (0..s.nrows()).filter(|&i| s[i].re > cut).count();
        if rank == 0 {
            return Ok(Vec::new());
        }
        if rank == blocks * p {
            continue;
        }
        let u = svd.U().get(.., ..rank);
        let v = svd.V().get(.., ..rank);
        let sinv = Mat::<c64>::from_fn(rank, rank, |i, j| if i == j { c64::new(1.0 / s[i].re, 0.0) } else { c64::new(0.0, 0.0) });
        let small = u.adjoint() * &h1 * v * &sinv;
        let eig = dense::pencil_eigs(small.as_ref(), dense::identity(rank).as_ref())?;
        for (c, &mu) in eig.values.iter().enumerate() {
            let lam = contour.center + mu * contour.radius;
            let full = u * eig.vectors.col(c);
            raw.push((lam, full.get(..n).to_owned()));
        }
        solved = true;
        break;
    }
    if !solved {
        return Err(Error::ContourRank { probes: p });
    }

    let mut accepted: Vec<(c64, DenseVec, f64)> = Vec::new();
    for (lam, v) in raw {
        if !contour.contains(lam) {
            continue;
        }
        let Ok(mut res) = relative_residual(eval_t, lam, v.as_ref(), node_scale) else { continue };
        let (mut lam, mut v) = (lam, v);
        if let Some(dt) = eval_dt {
            if let Some((l2, v2, r2)) = refine(eval_t, dt, lam, v.clone(), res, node_scale) {
                if contour.contains(l2) {
                    (lam, v, res) = (l2, v2, r2);
                }
            }
        }
        if res > ACCEPT_TOL {
            continue;
        }
        let dup = accepted.iter().position(|(l, _, _)| (l - lam).norm() <= 1e-8 * lam.norm().max(1.0));
        match dup {
            Some(i) if accepted[i].2 <= res => {}
            Some(i) => accepted[i] = (lam, v, res),
            None => accepted.push((lam, v, res)),
        }
    }
    let order = target_order(tau);
    accepted.sort_by(|x, y| order(&x.0, &y.0));
    if let Some(w) = want {
        accepted.truncate(w);
    }
    Ok(accepted.into_iter().map(|(l, v, _)| (l, v)).collect())
}

fn hankel(moments: &[DenseMat], blocks: usize) -> (DenseMat, DenseMat) {
    let (n, p) = (moments[0].nrows(), moments[0].ncols());
    let mut h0 = Mat::<c64>::zeros(blocks * n, blocks * p);
    let mut h1 = Mat::<c64>::zeros(blocks * n, blocks * p);
    for i in 0..blocks {
        for j in 0..blocks {
            h0.as_mut().get_mut(i * n..(i + 1) * n, j * p..(j + 1) * p).copy_from(&moments[i + j]);
            h1.as_mut().get_mut(i * n..(i + 1) * n, j * p..(j + 1) * p).copy_from(&moments[i + j + 1]);
        }
    }
    (h0, h1)
}

/// `‖T(λ)v‖_∞ / (max(‖T(λ)‖_∞, floor)·‖v‖_∞)`.
///
/// For a 1×1 problem `‖T(λ)‖` vanishes together with the residual, so the
/// contour solver passes the largest `‖T(z)‖_∞` over its nodes as `floor`.
pub fn relative_residual(eval_t: &EvalFn<'_>, lambda: c64, v: faer::ColRef<'_, c64>, floor: f64) -> Result<f64> {
    let t = eval_t(lambda)?;
    let tv = &t * v;
    let denom = dense::norm_inf(t.as_ref()).max(floor) * dense::vec_norm_inf(v);
    if denom == 0.0 {
        return Ok(if dense::vec_norm_inf(v) == 0.0 { f64::INFINITY } else { 0.0 });
    }
    Ok(dense::vec_norm_inf(tv.as_ref()) / denom)
}

/// Nonlinear inverse iteration: `T(λ)u = T′(λ)v`, `λ ← λ − e·v/e·u`,
/// `v ← u/e·u` with `e` the largest entry of the starting vector.
fn refine(
    eval_t: &EvalFn<'_>,
    eval_dt: &EvalFn<'_>,
    lam0: c64,
    v0: DenseVec,
    res0: f64,
    floor: f64,
) -> Option<(c64, DenseVec, f64)> {
    let idx = (0..v0.nrows()).max_by(|&a, &b| v0[a].norm().total_cmp(&v0[b].norm()))?;
    let mut v = &v0 * faer::Scale(c64::new(1.0, 0.0) / v0[idx]);
    let mut lam = lam0;
    let mut best: Option<(c64, DenseVec, f64)> = None;
    let mut best_res = res0;
    for _ in 0..REFINE_STEPS {
        let t = eval_t(lam).ok()?;
        let dt = eval_dt(lam).ok()?;
        let rhs = &dt * &v;
        let u = dense::solve_unchecked(t.as_ref(), rhs.as_mat());
        let eu = u[(idx, 0)];
        if !(eu.norm() > 0.0) || !eu.re.is_finite() || !eu.im.is_finite() {
            break;
        }
        lam -= c64::new(1.0, 0.0) / eu;
        v = Col::from_fn(v.nrows(), |i| u[(i, 0)] / eu);
        let Ok(res) = relative_residual(eval_t, lam, v.as_ref(), floor) else { break };
        if !(res < best_res) {
            if best.is_some() {
                break;
            }
            continue;
        }
        best_res = res;
        best = Some((lam, v.clone(), res));
        if res <= 4.0 * f64::EPSILON {
            break;
        }
    }
    best
}
