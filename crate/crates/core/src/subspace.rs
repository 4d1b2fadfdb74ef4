//! Projection bases, solver options, reports and the outer interpolation loop
//! shared by the rational and split-form solvers.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use faer::{c64, ColRef, Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dense::{orthonormal_extend, DenseMat, DenseVec, DEFAULT_DROP_TOL};
use crate::error::{Error, Result};

/// Which of the `k` closest reduced eigenvalues become interpolation points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Every unconverged one.
    All,
    /// The unconverged one with the smallest residual.
    Br,
    /// The unconverged one with the largest residual.
    Wr,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ALL" => Ok(Strategy::All),
            "BR" => Ok(Strategy::Br),
            "WR" => Ok(Strategy::Wr),
            _ => Err(Error::invalid(format!("unknown strategy `{s}` (expected ALL, BR or WR)"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::All => "ALL",
            Strategy::Br => "BR",
            Strategy::Wr => "WR",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    TwoSided,
    /// `W = V`; only the right directions are computed.
    OneSided,
}

impl Mode {
    pub fn default_q(self) -> usize {
        match self {
            Mode::TwoSided => 2,
            Mode::OneSided => 3,
        }
    }

    pub fn min_q(self) -> usize {
        self.default_q()
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "two-sided" => Ok(Mode::TwoSided),
            "one-sided" => Ok(Mode::OneSided),
            _ => Err(Error::invalid(format!("unknown mode `{s}` (expected two-sided or one-sided)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::TwoSided => "two-sided",
            Mode::OneSided => "one-sided",
        })
    }
}

/// Orthonormal right basis `V` and left basis `W` of equal width. In
/// one-sided mode `W` is `V`.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    v: DenseMat,
    w: Option<DenseMat>,
}

impl ProjectionPair {
    pub fn empty(k: usize, mode: Mode) -> Self {
        let w = match mode {
            Mode::TwoSided => Some(Mat::zeros(k, 0)),
            Mode::OneSided => None,
        };
        Self { v: Mat::zeros(k, 0), w }
    }

    pub fn mode(&self) -> Mode {
        if self.w.is_some() {
            Mode::TwoSided
        } else {
            Mode::OneSided
        }
    }

    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn v(&self) -> MatRef<'_, c64> {
        self.v.as_ref()
    }

    pub fn w(&self) -> MatRef<'_, c64> {
        self.w.as_ref().unwrap_or(&self.v).as_ref()
    }

    /// Appends the orthonormalized new directions and returns how many
    /// columns were added.
    ///
    /// In two-sided mode both sides keep the same width: if one side loses
    /// more dependent directions, the other is cut to match.
    pub fn extend(&mut self, vdirs: MatRef<'_, c64>, wdirs: Option<MatRef<'_, c64>>, drop_tol: f64) -> Result<usize> {
        let r0 = self.dim();
        let mut v = orthonormal_extend(Some(self.v.as_ref()), vdirs, drop_tol);
        match (&mut self.w, wdirs) {
            (Some(w_old), Some(wd)) => {
                let mut w = orthonormal_extend(Some(w_old.as_ref()), wd, drop_tol);
                let r = v.ncols().min(w.ncols());
                v.truncate(v.nrows(), r);
                w.truncate(w.nrows(), r);
                *w_old = w;
            }
            (None, None) => {}
            _ => return Err(Error::invalid("left directions must be given exactly in two-sided mode")),
        }
        self.v = v;
        Ok(self.dim() - r0)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Interpolation parameter; defaults to 2 (two-sided) or 3 (one-sided).
    pub q: Option<usize>,
    pub mode: Mode,
    pub tol: f64,
    pub max_iter: usize,
    /// Explicit initial interpolation points. When absent, the target and
    /// seeded Gaussian offsets of size `init_radius` are used.
    pub init_points: Option<Vec<c64>>,
    pub init_radius: f64,
    pub seed: u64,
    /// Relative threshold for discarding reduced eigenvalues that are
    /// eigenvalues of the middle block.
    pub filter_tol: f64,
    /// Relative norm under which a new basis direction is discarded. The
    /// solvers use `min(drop_tol, tol/10)`: a direction dropped at a larger
    /// threshold can leave the subspace short of the accuracy `tol` asks for.
    pub drop_tol: f64,
    /// Recompute projected blocks from scratch every iteration.
    pub recompute_blocks: bool,
    /// Size of the trailing partition block (split-form problems).
    pub m: usize,
    /// Divide the split-form residual by the embedded vector norm.
    pub embedded_norm: bool,
    /// Quadrature nodes for reduced non-polynomial problems.
    pub contour_nodes: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            q: None,
            mode: Mode::TwoSided,
            tol: 1e-8,
            max_iter: 50,
            init_points: None,
            init_radius: 0.5,
            seed: 0,
            filter_tol: 1e-8,
            drop_tol: DEFAULT_DROP_TOL,
            recompute_blocks: false,
            m: 2,
            embedded_norm: false,
            contour_nodes: 64,
        }
    }
}

impl SolveOptions {
    pub fn effective_drop_tol(&self) -> f64 {
        self.drop_tol.min(0.1 * self.tol)
    }

    pub fn q(&self) -> usize {
        self.q.unwrap_or(self.mode.default_q())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config { field: field.into(), msg });
        if !(self.tol > 0.0) {
            return bad("tol", format!("must be positive, got {}", self.tol));
        }
        if self.q() < self.mode.min_q() {
            return bad("q", format!("{} mode needs q >= {}, got {}", self.mode, self.mode.min_q(), self.q()));
        }
        if self.max_iter == 0 {
            return bad("max_iter", "must be at least 1".into());
        }
        if !(self.init_radius > 0.0) || !self.init_radius.is_finite() {
            return bad("init.radius", format!("must be positive, got {}", self.init_radius));
        }
        if matches!(&self.init_points, Some(p) if p.is_empty()) {
            return bad("init.points", "must not be empty".into());
        }
        if !(self.filter_tol > 0.0) || !(self.drop_tol > 0.0) {
            return bad("filter_tol", "tolerances must be positive".into());
        }
        if self.m == 0 {
            return bad("m", "must be at least 1".into());
        }
        if self.contour_nodes < 16 || self.contour_nodes % 2 != 0 {
            return bad("contour_nodes", format!("must be even and at least 16, got {}", self.contour_nodes));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EigEstimate {
    pub lambda: c64,
    /// Eigenvector of the reduced problem, unit ∞-norm.
    pub v_reduced: DenseVec,
    /// Eigenvector estimate for the full problem.
    pub v_full: DenseVec,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateRecord {
    pub lambda: c64,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    /// Points interpolated during this iteration (after any pole shift).
    pub points: Vec<c64>,
    /// The closest filtered reduced eigenvalues after the expansion.
    pub candidates: Vec<CandidateRecord>,
    pub subdim: usize,
    /// Factorizations so far in this run.
    pub nfact: usize,
    /// Adjoint block solves so far in this run.
    pub adjoint_solves: usize,
    pub elapsed_s: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIter,
    /// The subspaces stopped growing before convergence.
    Stagnated,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub records: Vec<IterationRecord>,
    /// Sorted by distance to the target.
    pub estimates: Vec<EigEstimate>,
    pub stop: StopReason,
    pub factorizations: usize,
    pub adjoint_solves: usize,
    /// Final right basis `V`.
    pub basis: DenseMat,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Candidate {
    pub lambda: c64,
    pub v_reduced: DenseVec,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Expansion {
    pub point: c64,
    pub factorizations: usize,
    pub adjoint_solves: usize,
    pub added: usize,
}

pub(crate) trait SubspaceProblem {
    fn expand(&mut self, mu: c64) -> Result<Expansion>;
    /// Up to `want` filtered reduced eigenpairs, closest to `tau` first.
    fn candidates(&mut self, tau: c64, want: usize, rng: &mut ChaCha8Rng, notes: &mut Vec<String>) -> Result<Vec<Candidate>>;
    fn residual(&self, lambda: c64, v_reduced: ColRef<'_, c64>) -> Result<f64>;
    fn embed(&self, v_reduced: ColRef<'_, c64>) -> DenseVec;
    fn basis(&self) -> &ProjectionPair;
}

/// Lexicographic order on `(|λ − τ|, Re λ, Im λ)`.
pub(crate) fn target_order(tau: c64) -> impl Fn(&c64, &c64) -> std::cmp::Ordering {
    move |a, b| {
        let key = |z: &c64| ((z - tau).norm(), z.re, z.im);
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.total_cmp(&kb.2))
    }
}

/// Points closer than this (relative) to an earlier one are not re-expanded.
const REVISIT_TOL: f64 = 1e-14;

struct LoopState {
    visited: Vec<c64>,
    nfact: usize,
    nadj: usize,
}

impl LoopState {
    fn expand<P: SubspaceProblem>(&mut self, p: &mut P, mu: c64, points: &mut Vec<c64>) -> Result<usize> {
        if self.visited.iter().any(|&v| (v - mu).norm() <= REVISIT_TOL * mu.norm().max(1.0)) {
            points.push(mu);
            return Ok(0);
        }
        let e = p.expand(mu)?;
        self.visited.push(mu);
        if e.point != mu {
            self.visited.push(e.point);
        }
        self.nfact += e.factorizations;
        self.nadj += e.adjoint_solves;
        points.push(e.point);
        Ok(e.added)
    }
}

fn gaussian_point(rng: &mut ChaCha8Rng, tau: c64, radius: f64) -> c64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    tau + c64::new(re, im) * (radius / std::f64::consts::SQRT_2)
}

pub(crate) fn run_loop<P: SubspaceProblem>(
    p: &mut P,
    tau: c64,
    k_eigs: usize,
    strategy: Strategy,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    if k_eigs == 0 {
        return Err(Error::Config { field: "num_eigs".into(), msg: "must be at least 1".into() });
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut st = LoopState { visited: Vec::new(), nfact: 0, nadj: 0 };
    let mut records: Vec<IterationRecord> = Vec::new();

    let mut points = Vec::new();
    let auto_init = opts.init_points.is_none();
    for &mu in opts.init_points.as_deref().unwrap_or(&[tau]) {
        st.expand(p, mu, &mut points)?;
    }

    let mut last: Vec<(Candidate, f64, bool)> = Vec::new();
    let mut stop = StopReason::MaxIter;
    for iter in 1..=opts.max_iter {
        let mut notes = Vec::new();
        let mut cands = p.candidates(tau, k_eigs, &mut rng, &mut notes)?;
        if iter == 1 && auto_init {
            // The initial middle block must be at least k×k and the reduced
            // problem must offer k candidates.
            let mut extra = 0;
            while (p.basis().dim() < k_eigs || cands.len() < k_eigs) && extra < 4 * k_eigs + 8 {
                let mu = gaussian_point(&mut rng, tau, opts.init_radius);
                st.expand(p, mu, &mut points)?;
                cands = p.candidates(tau, k_eigs, &mut rng, &mut notes)?;
                extra += 1;
            }
        }
        if cands.is_empty() {
            return Err(Error::ReducedSpectrumEmpty);
        }
        last.clear();
        for c in cands {
            let res = p.residual(c.lambda, c.v_reduced.as_ref()).unwrap_or(f64::INFINITY);
            last.push((c, res, res < opts.tol));
        }
        records.push(IterationRecord {
            iter,
            points: std::mem::take(&mut points),
            candidates: last
                .iter()
                .map(|(c, r, conv)| CandidateRecord { lambda: c.lambda, residual: *r, converged: *conv })
                .collect(),
            subdim: p.basis().dim(),
            nfact: st.nfact,
            adjoint_solves: st.nadj,
            elapsed_s: start.elapsed().as_secs_f64(),
            notes,
        });
        if last.len() == k_eigs && last.iter().all(|t| t.2) {
            stop = StopReason::Converged;
            break;
        }
        if iter == opts.max_iter {
            break;
        }

        let unconverged: Vec<usize> = (0..last.len()).filter(|&i| !last[i].2).collect();
        let chosen: Vec<usize> = match strategy {
            Strategy::All => unconverged.clone(),
            Strategy::Br => unconverged
                .iter()
                .copied()
                .min_by(|&a, &b| last[a].1.total_cmp(&last[b].1))
                .into_iter()
                .collect(),
            Strategy::Wr => unconverged
                .iter()
                .copied()
                .max_by(|&a, &b| last[a].1.total_cmp(&last[b].1))
                .into_iter()
                .collect(),
        };
        let mut added = 0;
        for &i in &chosen {
            added += st.expand(p, last[i].0.lambda, &mut points)?;
        }
        if chosen.is_empty() {
            // Everything offered has converged but fewer than k were offered.
            let mu = gaussian_point(&mut rng, tau, opts.init_radius);
            added += st.expand(p, mu, &mut points)?;
        }
        if added == 0 {
            stop = StopReason::Stagnated;
            break;
        }
    }

    let estimates = last
        .into_iter()
        .map(|(c, residual, converged)| EigEstimate {
            lambda: c.lambda,
            v_full: p.embed(c.v_reduced.as_ref()),
            v_reduced: c.v_reduced,
            residual,
            converged,
        })
        .collect();
    Ok(SolveReport {
        records,
        estimates,
        stop,
        factorizations: st.nfact,
        adjoint_solves: st.nadj,
        basis: p.basis().v().to_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_and_mode_parse() {
        assert_eq!("br".parse::<Strategy>().unwrap(), Strategy::Br);
        assert_eq!("ALL".parse::<Strategy>().unwrap().to_string(), "ALL");
        assert_eq!("one-sided".parse::<Mode>().unwrap(), Mode::OneSided);
        assert!("sideways".parse::<Mode>().is_err());
    }

    #[test]
    fn options_validation_names_fields() {
        let mut o = SolveOptions { tol: -1.0, ..Default::default() };
        match o.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "tol"),
            other => panic!("{other:?}"),
        }
        o.tol = 1e-8;
        o.mode = Mode::OneSided;
        o.q = Some(2);
        assert!(matches!(o.validate(), Err(Error::Config { field, .. }) if field == "q"));
        o.q = None;
        assert_eq!(o.q(), 3);
        o.validate().unwrap();
    }

    #[test]
    fn target_order_breaks_ties() {
        let tau = c64::new(0.0, 0.0);
        let mut v = vec![c64::new(0.0, 1.0), c64::new(1.0, 0.0), c64::new(0.0, -1.0), c64::new(-1.0, 0.0), c64::new(0.5, 0.0)];
        v.sort_by(target_order(tau));
        assert_eq!(
            v,
            vec![c64::new(0.5, 0.0), c64::new(-1.0, 0.0), c64::new(0.0, -1.0), c64::new(0.0, 1.0), c64::new(1.0, 0.0)]
        );
    }

    #[test]
    fn projection_pair_keeps_equal_widths() {
        let mut p = ProjectionPair::empty(3, Mode::TwoSided);
        let v = Mat::from_fn(3, 2, |i, j| c64::new((i + j) as f64, 1.0));
        let w = Mat::from_fn(3, 2, |i, _| c64::new(i as f64, 0.0));
        let added = p.extend(v.as_ref(), Some(w.as_ref()), DEFAULT_DROP_TOL).unwrap();
        assert_eq!(added, 1);
        assert_eq!(p.v().ncols(), p.w().ncols());

        let mut one = ProjectionPair::empty(3, Mode::OneSided);
        one.extend(v.as_ref(), None, DEFAULT_DROP_TOL).unwrap();
        assert_eq!(one.w(), one.v());
        assert!(one.extend(v.as_ref(), Some(w.as_ref()), DEFAULT_DROP_TOL).is_err());
    }
}
