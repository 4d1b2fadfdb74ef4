//! Config-driven runs: problem ingestion, solver invocation and reports.
//!
//! A run reads a JSON [`RunConfig`], loads the Matrix Market files it names
//! (paths relative to the config file), solves, and writes
//! `iterations.csv` and `result.json` into the output directory. Both files
//! are written to a temporary name first and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use faer::c64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::generate::{generate_banded, generate_delay, generate_quadratic};
use crate::nep::{ScalarFn, SplitNEP};
use crate::nep_solver::solve_nep;
use crate::oracle::{oracle_nep, oracle_rep};
use crate::rep::{realize, PartialFraction, PartialFractionREP, StateSpaceREP};
use crate::rep_solver::solve_rep;
use crate::sparse::{read_matrix_market, write_matrix_market, write_matrix_market_dense, SparseMat};
use crate::subspace::{Mode, SolveOptions, SolveReport, StopReason, Strategy};

/// Version of the `result.json` and `iterations.csv` layout.
pub const REPORT_FORMAT: u32 = 1;
pub const CSV_HEADER: [&str; 8] = ["iter", "candidate", "lambda_re", "lambda_im", "residual", "subdim", "nfact", "elapsed_s"];
/// `candidate` value of rows that log an interpolation point.
pub const POINT_ROW: &str = "point";
const DEFAULT_OUTPUT_DIR: &str = "out";
const DEFAULT_ORACLE_RADIUS: f64 = 0.5;

/// Complex number serialized as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complex(pub f64, pub f64);

impl From<Complex> for c64 {
    fn from(z: Complex) -> Self {
        c64::new(z.0, z.1)
    }
}

impl From<c64> for Complex {
    fn from(z: c64) -> Self {
        Complex(z.re, z.im)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `R(s) = P(s) + C(sI − A)⁻¹B`.
    RationalStatespace {
        a: String,
        b: String,
        c: String,
        #[serde(default)]
        p: Vec<String>,
    },
    /// `R(s) = P(s) + Σ (p_j(s)/d_j(s))·L_j U_jᴴ`.
    RationalPartialfraction {
        #[serde(default)]
        p: Vec<String>,
        terms: Vec<PartialFractionSpec>,
    },
    /// `T(s) = Σ f_j(s) T_j`.
    SplitNep { terms: Vec<SplitTermSpec> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialFractionSpec {
    /// Numerator coefficients, lowest degree first.
    pub numer: Vec<Complex>,
    /// Monic denominator coefficients, lowest degree first.
    pub denom: Vec<Complex>,
    pub l: String,
    pub u: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitTermSpec {
    pub function: FunctionSpec,
    pub matrix: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    Monomial { power: u32 },
    Exp { alpha: Complex },
    SqrtBranch { shift: Complex },
    Rational { numer: Vec<Complex>, denom: Vec<Complex> },
    Constant { value: Complex },
}

impl FunctionSpec {
    fn to_scalar_fn(&self) -> Result<ScalarFn> {
        let cv = |v: &[Complex]| v.iter().map(|&z| c64::from(z)).collect::<Vec<_>>();
        Ok(match self {
            FunctionSpec::Monomial { power } => ScalarFn::Monomial(*power),
            FunctionSpec::Exp { alpha } => ScalarFn::Exp { alpha: (*alpha).into() },
            FunctionSpec::SqrtBranch { shift } => ScalarFn::SqrtBranch { shift: (*shift).into() },
            FunctionSpec::Rational { numer, denom } => ScalarFn::rational(cv(numer), cv(denom))?,
            FunctionSpec::Constant { value } => ScalarFn::Constant((*value).into()),
        })
    }

    fn from_scalar_fn(f: &ScalarFn) -> Self {
        let cv = |v: &[c64]| v.iter().map(|&z| Complex::from(z)).collect::<Vec<_>>();
        match f {
            ScalarFn::Monomial(p) => FunctionSpec::Monomial { power: *p },
            ScalarFn::Exp { alpha } => FunctionSpec::Exp { alpha: (*alpha).into() },
            ScalarFn::SqrtBranch { shift } => FunctionSpec::SqrtBranch { shift: (*shift).into() },
            ScalarFn::Rational { numer, denom } => FunctionSpec::Rational { numer: cv(numer), denom: cv(denom) },
            ScalarFn::Constant(c) => FunctionSpec::Constant { value: (*c).into() },
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Complex>>,
    #[serde(default, alias = "auto-radius", skip_serializing_if = "Option::is_none")]
    pub auto_radius: Option<f64>,
}

fn default_strategy() -> String {
    "ALL".into()
}

fn default_mode() -> String {
    "two-sided".into()
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub target: Complex,
    pub num_eigs: usize,
    #[serde(default = "default_strategy")]
    pub strategy: String,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_tol: Option<f64>,
    #[serde(default)]
    pub embedded_norm: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour_nodes: Option<usize>,
    /// Output directory, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn config_err(field: &str, msg: impl Into<String>) -> Error {
    Error::Config { field: field.into(), msg: msg.into() }
}

impl RunConfig {
    /// Parses a config document; schema errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "config".to_string() } else { path };
            config_err(&field, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::File { path: path.into(), source: Box::new(e.into()) })?;
        Self::from_json(&text)
    }

    pub fn strategy(&self) -> Result<Strategy> {
        self.strategy.parse().map_err(|e: Error| config_err("strategy", e.to_string()))
    }

    pub fn solve_options(&self) -> Result<SolveOptions> {
        let mode: Mode = self.mode.parse().map_err(|e: Error| config_err("mode", e.to_string()))?;
        let mut opts = SolveOptions {
            q: self.q,
            mode,
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            embedded_norm: self.embedded_norm,
            ..Default::default()
        };
        if let Some(m) = self.m {
            opts.m = m;
        }
        if let Some(f) = self.filter_tol {
            opts.filter_tol = f;
        }
        if let Some(nodes) = self.contour_nodes {
            opts.contour_nodes = nodes;
        }
        if let Some(init) = &self.init {
            match (&init.points, init.auto_radius) {
                (Some(_), Some(_)) => return Err(config_err("init", "give either `points` or `auto_radius`, not both")),
                (Some(p), None) => opts.init_points = Some(p.iter().map(|&z| z.into()).collect()),
                (None, Some(r)) => {
                    if !(r > 0.0 && r.is_finite()) {
                        return Err(config_err("init.auto_radius", format!("must be positive, got {r}")));
                    }
                    opts.init_radius = r;
                }
                (None, None) => return Err(config_err("init", "needs `points` or `auto_radius`")),
            }
        }
        if self.num_eigs == 0 {
            return Err(config_err("num_eigs", "must be at least 1"));
        }
        let t = c64::from(self.target);
        if !(t.re.is_finite() && t.im.is_finite()) {
            return Err(config_err("target", "must be finite"));
        }
        opts.validate()?;
        Ok(opts)
    }
}

/// A loaded problem.
pub enum Problem {
    Rational(StateSpaceREP),
    Split(SplitNEP),
}

fn load_sparse(base: &Path, rel: &str, field: &str) -> Result<SparseMat> {
    let path = base.join(rel);
    if !path.is_file() {
        return Err(config_err(field, format!("file not found: {}", path.display())));
    }
    read_matrix_market(&path).map_err(|e| Error::File { path, source: Box::new(e) })
}

impl ProblemSpec {
    pub fn load(&self, base: &Path) -> Result<Problem> {
        let dense = |rel: &str, field: &str| load_sparse(base, rel, field).map(|m| m.to_dense());
        let poly = |p: &[String]| -> Result<Vec<_>> {
            p.iter().enumerate().map(|(i, f)| dense(f, &format!("problem.p[{i}]"))).collect()
        };
        match self {
            ProblemSpec::RationalStatespace { a, b, c, p } => {
                let sys = StateSpaceREP::new(
                    poly(p)?,
                    load_sparse(base, a, "problem.a")?,
                    dense(b, "problem.b")?,
                    dense(c, "problem.c")?,
                )?;
                Ok(Problem::Rational(sys))
            }
            ProblemSpec::RationalPartialfraction { p, terms } => {
                let mut pf = Vec::with_capacity(terms.len());
                for (i, t) in terms.iter().enumerate() {
                    pf.push(PartialFraction {
                        numer: t.numer.iter().map(|&z| z.into()).collect(),
                        denom: t.denom.iter().map(|&z| z.into()).collect(),
                        l: dense(&t.l, &format!("problem.terms[{i}].l"))?,
                        u: dense(&t.u, &format!("problem.terms[{i}].u"))?,
                    });
                }
                let pf = PartialFractionREP::new(poly(p)?, pf)?;
                Ok(Problem::Rational(realize(&pf)?))
            }
            ProblemSpec::SplitNep { terms } => {
                let mut out = Vec::with_capacity(terms.len());
                for (i, t) in terms.iter().enumerate() {
                    let f = t.function.to_scalar_fn().map_err(|e| config_err(&format!("problem.terms[{i}].function"), e.to_string()))?;
                    out.push((f, load_sparse(base, &t.matrix, &format!("problem.terms[{i}].matrix"))?));
                }
                Ok(Problem::Split(SplitNEP::new(out)?))
            }
        }
    }
}

/// Caps solver parallelism from `NEPSPACE_THREADS` (a positive integer).
/// Unset or unparsable values leave the defaults alone.
pub fn configure_threads() {
    let Some(n) = std::env::var("NEPSPACE_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0)
    else {
        return;
    };
    // the global pool can only be built once per process; later calls keep it
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    faer::set_global_parallelism(if n == 1 { faer::Par::Seq } else { faer::Par::rayon(n) });
}

/// Outcome of [`run`].
#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub stop: StopReason,
    pub out_dir: PathBuf,
    pub report: SolveReport,
}

fn exit_code(stop: StopReason) -> i32 {
    match stop {
        StopReason::Converged => 0,
        StopReason::MaxIter | StopReason::Stagnated => 2,
    }
}

fn stop_name(stop: StopReason) -> &'static str {
    match stop {
        StopReason::Converged => "converged",
        StopReason::MaxIter => "max_iter",
        StopReason::Stagnated => "stagnated",
    }
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn resolve_out(config_path: &Path, cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    match out {
        Some(o) => o.to_path_buf(),
        None => base_dir(config_path).join(cfg.output_dir.as_deref().unwrap_or(DEFAULT_OUTPUT_DIR)),
    }
}

/// Solves the problem described by `config_path` and writes the reports.
/// `out` overrides the config's output directory.
pub fn run(config_path: &Path, out: Option<&Path>) -> Result<RunOutcome> {
    configure_threads();
    let cfg = RunConfig::load(config_path)?;
    let opts = cfg.solve_options()?;
    let strategy = cfg.strategy()?;
    let problem = cfg.problem.load(&base_dir(config_path))?;
    let tau: c64 = cfg.target.into();
    let report = match &problem {
        Problem::Rational(sys) => solve_rep(sys, tau, cfg.num_eigs, strategy, &opts)?,
        Problem::Split(nep) => solve_nep(nep, tau, cfg.num_eigs, strategy, &opts)?,
    };
    let out_dir = resolve_out(config_path, &cfg, out);
    fs::create_dir_all(&out_dir)?;
    write_atomic(&out_dir.join("iterations.csv"), &iterations_csv(&report)?)?;
    let result = result_json(&cfg, tau, &report)?;
    write_atomic(&out_dir.join("result.json"), &serde_json::to_vec_pretty(&result)?)?;
    Ok(RunOutcome { exit_code: exit_code(report.stop), stop: report.stop, out_dir, report })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("report");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// One row per interpolation point (`candidate = point`, empty residual)
/// followed by one row per candidate, for every iteration.
pub fn iterations_csv(report: &SolveReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in &report.records {
        let (subdim, nfact, elapsed) = (r.subdim.to_string(), r.nfact.to_string(), format!("{:.6}", r.elapsed_s));
        for p in &r.points {
            w.write_record([&r.iter.to_string(), POINT_ROW, &num(p.re), &num(p.im), "", &subdim, &nfact, &elapsed])?;
        }
        for (i, c) in r.candidates.iter().enumerate() {
            w.write_record([
                &r.iter.to_string(),
                &(i + 1).to_string(),
                &num(c.lambda.re),
                &num(c.lambda.im),
                &num(c.residual),
                &subdim,
                &nfact,
                &elapsed,
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn result_json(cfg: &RunConfig, tau: c64, report: &SolveReport) -> Result<serde_json::Value> {
    let mut est: Vec<_> = report.estimates.iter().collect();
    est.sort_by(|a, b| (a.lambda - tau).norm().total_cmp(&(b.lambda - tau).norm()));
    let eigenvalues: Vec<_> = est
        .iter()
        .map(|e| json!({ "lambda": Complex::from(e.lambda), "residual": e.residual, "converged": e.converged }))
        .collect();
    let history: Vec<_> = report
        .records
        .iter()
        .map(|r| {
            json!({
                "iter": r.iter,
                "points": r.points.iter().map(|&p| Complex::from(p)).collect::<Vec<_>>(),
                "subdim": r.subdim,
                "nfact": r.nfact,
                "adjoint_solves": r.adjoint_solves,
                "notes": r.notes,
            })
        })
        .collect();
    Ok(json!({
        "status": stop_name(report.stop),
        "exit_code": exit_code(report.stop),
        "target": Complex::from(tau),
        "eigenvalues": eigenvalues,
        "iterations": report.iterations(),
        "factorizations": report.factorizations,
        "adjoint_solves": report.adjoint_solves,
        "subspace_dim": report.basis.ncols(),
        "history": history,
        "config": serde_json::to_value(cfg)?,
        "versions": { "nepspace": env!("CARGO_PKG_VERSION"), "report_format": REPORT_FORMAT },
    }))
}

/// Reference eigenvalues for the problem in `config_path`, written to
/// `oracle.json` in the output directory.
pub fn run_oracle(config_path: &Path, out: Option<&Path>) -> Result<(PathBuf, Vec<c64>)> {
    configure_threads();
    let cfg = RunConfig::load(config_path)?;
    if cfg.num_eigs == 0 {
        return Err(config_err("num_eigs", "must be at least 1"));
    }
    let tau: c64 = cfg.target.into();
    let problem = cfg.problem.load(&base_dir(config_path))?;
    let (method, values) = match &problem {
        Problem::Rational(sys) => ("dense-linearization", oracle_rep(sys, tau, cfg.num_eigs)?),
        Problem::Split(nep) => {
            let radius = cfg.init.as_ref().and_then(|i| i.auto_radius).unwrap_or(DEFAULT_ORACLE_RADIUS);
            let method = if nep.is_polynomial() { "companion" } else { "contour" };
            (method, oracle_nep(nep, tau, cfg.num_eigs, radius)?)
        }
    };
    let out_dir = resolve_out(config_path, &cfg, out);
    fs::create_dir_all(&out_dir)?;
    let doc = json!({
        "method": method,
        "target": Complex::from(tau),
        "eigenvalues": values.iter().map(|&z| Complex::from(z)).collect::<Vec<_>>(),
        "versions": { "nepspace": env!("CARGO_PKG_VERSION"), "report_format": REPORT_FORMAT },
    });
    let path = out_dir.join("oracle.json");
    write_atomic(&path, &serde_json::to_vec_pretty(&doc)?)?;
    Ok((path, values))
}

/// Synthetic problem families for `generate`.
#[derive(Debug, Clone, Copy)]
pub enum GenerateSpec {
    Banded { k: usize, bandwidth: usize, n_io: usize },
    Delay { n: usize, density: f64, g_scale: f64 },
    Quadratic { n: usize, density: f64 },
}

/// Settings copied into the generated config.
#[derive(Debug, Clone)]
pub struct GenerateRun {
    pub seed: u64,
    pub target: c64,
    pub num_eigs: usize,
}

/// Writes the generated matrices and a matching `config.json` into
/// `out_dir`; returns the config path.
pub fn generate(spec: GenerateSpec, run: &GenerateRun, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let problem = match spec {
        GenerateSpec::Banded { k, bandwidth, n_io } => {
            let sys = generate_banded(k, bandwidth, n_io, run.seed)?;
            write_matrix_market(out_dir.join("A.mtx"), sys.a())?;
            write_matrix_market_dense(out_dir.join("B.mtx"), sys.b().as_ref())?;
            write_matrix_market_dense(out_dir.join("C.mtx"), sys.c().as_ref())?;
            ProblemSpec::RationalStatespace { a: "A.mtx".into(), b: "B.mtx".into(), c: "C.mtx".into(), p: Vec::new() }
        }
        GenerateSpec::Delay { n, density, g_scale } => {
            split_spec(&generate_delay(n, density, g_scale, run.seed)?, out_dir, &["F", "minus_I", "G"])?
        }
        GenerateSpec::Quadratic { n, density } => {
            split_spec(&generate_quadratic(n, density, run.seed)?, out_dir, &["M", "D", "K"])?
        }
    };
    let cfg = RunConfig {
        problem,
        target: run.target.into(),
        num_eigs: run.num_eigs,
        strategy: default_strategy(),
        mode: default_mode(),
        q: None,
        m: None,
        tol: default_tol(),
        max_iter: default_max_iter(),
        seed: run.seed,
        init: None,
        filter_tol: None,
        embedded_norm: false,
        contour_nodes: None,
        output_dir: None,
    };
    let path = out_dir.join("config.json");
    write_atomic(&path, &serde_json::to_vec_pretty(&cfg)?)?;
    Ok(path)
}

fn split_spec(nep: &SplitNEP, out_dir: &Path, names: &[&str]) -> Result<ProblemSpec> {
    let mut terms = Vec::new();
    for ((f, m), name) in nep.fns().iter().zip(nep.mats()).zip(names) {
        let file = format!("{name}.mtx");
        write_matrix_market(out_dir.join(&file), m)?;
        terms.push(SplitTermSpec { function: FunctionSpec::from_scalar_fn(f), matrix: file });
    }
    Ok(ProblemSpec::SplitNep { terms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn closed_form_dir() -> tempfile::TempDir {
        // R(s) = 1/(s−1) + 1/(s−3) vanishes only at 2
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "A.mtx", "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n2 2 3\n");
        write(dir.path(), "B.mtx", "%%MatrixMarket matrix coordinate real general\n2 1 2\n1 1 1\n2 1 1\n");
        write(dir.path(), "C.mtx", "%%MatrixMarket matrix coordinate real general\n1 2 2\n1 1 1\n1 2 1\n");
        dir
    }

    fn closed_form_config(extra: &str) -> String {
        format!(
            r#"{{"problem": {{"kind": "rational-statespace", "a": "A.mtx", "b": "B.mtx", "c": "C.mtx"}},
               "target": [2.3, 0.0], "num_eigs": 1, "mode": "one-sided", "init": {{"points": [[2.3, 0.0]]}}{extra}}}"#
        )
    }

    #[test]
    fn closed_form_run_writes_reports() {
        let dir = closed_form_dir();
        let cfg = dir.path().join("run.json");
        fs::write(&cfg, closed_form_config("")).unwrap();
        let out = run(&cfg, None).unwrap();
        assert_eq!(out.exit_code, 0);
        assert_eq!(out.out_dir, dir.path().join("out"));
        let doc: serde_json::Value = serde_json::from_slice(&fs::read(out.out_dir.join("result.json")).unwrap()).unwrap();
        let l = &doc["eigenvalues"][0]["lambda"];
        assert!((l[0].as_f64().unwrap() - 2.0).abs() < 1e-10 && l[1].as_f64().unwrap().abs() < 1e-10, "{l}");
        assert_eq!(doc["status"], "converged");
        assert_eq!(doc["config"]["num_eigs"], 1);
        let csv = fs::read_to_string(out.out_dir.join("iterations.csv")).unwrap();
        assert!(csv.starts_with("iter,candidate,lambda_re,lambda_im,residual,subdim,nfact,elapsed_s\n"));
        assert!(!out.out_dir.join(".result.json.tmp").exists());
    }

    #[test]
    fn schema_errors_name_the_field() {
        let cases = [
            (closed_form_config(r#", "tol": -1.0"#), "tol"),
            (closed_form_config(r#", "q": 2"#), "q"),
            (closed_form_config(r#", "strategy": "XX""#), "strategy"),
            (closed_form_config(r#", "tol": "small""#), "tol"),
            (closed_form_config(r#", "bogus": 1"#), "bogus"),
            (closed_form_config(r#", "max_iter": 0"#), "max_iter"),
        ];
        let dir = closed_form_dir();
        for (text, field) in cases {
            let cfg = dir.path().join("bad.json");
            fs::write(&cfg, &text).unwrap();
            let err = run(&cfg, None).unwrap_err();
            assert!(err.to_string().contains(field), "{field}: {err}");
        }
        let cfg = dir.path().join("missing.json");
        fs::write(&cfg, closed_form_config("").replace("B.mtx", "nope.mtx")).unwrap();
        let err = run(&cfg, None).unwrap_err();
        assert!(err.to_string().contains("problem.b"), "{err}");
    }

    #[test]
    fn target_path_error_inside_nested_problem() {
        let err = RunConfig::from_json(r#"{"problem": {"kind": "split-nep", "terms": []}, "target": [1.0], "num_eigs": 1}"#)
            .unwrap_err();
        assert!(err.to_string().contains("target"), "{err}");
    }

    #[test]
    fn generate_then_oracle_and_solve_agree() {
        let dir = tempfile::tempdir().unwrap();
        let run_cfg = GenerateRun { seed: 5, target: c64::new(0.2, 0.0), num_eigs: 2 };
        let cfg = generate(GenerateSpec::Delay { n: 12, density: 0.3, g_scale: 0.5 }, &run_cfg, dir.path()).unwrap();
        let (_, want) = run_oracle(&cfg, None).unwrap();
        let out = run(&cfg, None).unwrap();
        assert_eq!(out.exit_code, 0);
        for w in want {
            assert!(out.report.estimates.iter().any(|e| (e.lambda - w).norm() < 1e-8), "{w:?}");
        }
    }

    #[test]
    fn partial_fraction_config_matches_state_space() {
        // the same transfer function as two first-order terms
        let dir = closed_form_dir();
        write(dir.path(), "one.mtx", "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 1\n");
        let text = r#"{"problem": {"kind": "rational-partialfraction", "terms": [
                {"numer": [[1,0]], "denom": [[-1,0],[1,0]], "l": "one.mtx", "u": "one.mtx"},
                {"numer": [[1,0]], "denom": [[-3,0],[1,0]], "l": "one.mtx", "u": "one.mtx"}]},
            "target": [2.3, 0.0], "num_eigs": 1, "mode": "one-sided", "init": {"points": [[2.3, 0.0]]}}"#;
        let cfg = dir.path().join("pf.json");
        fs::write(&cfg, text).unwrap();
        let out = run(&cfg, None).unwrap();
        assert!((out.report.estimates[0].lambda - c64::new(2.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn published_schema_lists_every_config_key() {
        let schema: serde_json::Value = serde_json::from_str(include_str!("../config.schema.json")).unwrap();
        let props = schema["properties"].as_object().unwrap();
        let cfg = RunConfig::from_json(&closed_form_config(
            r#", "q": 2, "m": 2, "filter_tol": 1e-8, "contour_nodes": 64, "output_dir": "o""#,
        ))
        .unwrap();
        let doc = serde_json::to_value(&cfg).unwrap();
        let mut keys: Vec<&String> = doc.as_object().unwrap().keys().collect();
        let mut listed: Vec<&String> = props.keys().collect();
        keys.sort();
        listed.sort();
        assert_eq!(keys, listed);
        let required: Vec<&str> = schema["required"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        assert_eq!(required, ["problem", "target", "num_eigs"]);
    }

    #[test]
    fn tight_tolerance_banded_run_ends_below_tol() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GenerateSpec::Banded { k: 400, bandwidth: 5, n_io: 2 };
        let cfg = generate(spec, &GenerateRun { seed: 3, target: c64::new(0.5, 0.5), num_eigs: 2 }, dir.path()).unwrap();
        let mut doc: serde_json::Value = serde_json::from_slice(&fs::read(&cfg).unwrap()).unwrap();
        doc["tol"] = json!(1e-12);
        fs::write(&cfg, serde_json::to_vec(&doc).unwrap()).unwrap();
        let out = run(&cfg, None).unwrap();
        assert_eq!(out.exit_code, 0);
        let text = fs::read_to_string(out.out_dir.join("iterations.csv")).unwrap();
        let last_iter = out.report.iterations().to_string();
        let residuals: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|f| f[0] == last_iter && f[1] != POINT_ROW)
            .map(|f| f[4].parse().unwrap())
            .collect();
        assert_eq!(residuals.len(), 2);
        assert!(residuals.iter().all(|&r| r < 1e-12), "{residuals:?}");
    }
}
