//! `nepspace` command-line driver.
//!
//! Exit codes: 0 converged, 2 stopped before convergence, 1 any error
//! (including invalid arguments).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nepspace::c64;
use nepspace::driver::{self, GenerateRun, GenerateSpec};
use nepspace::subspace::StopReason;

#[derive(Parser)]
#[command(name = "nepspace", version, about = "Subspace eigensolvers for rational and nonlinear eigenvalue problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a JSON config.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's `output_dir`, else `out`
        /// next to the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic problem (Matrix Market files and config.json).
    Generate {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Target as `re,im`.
        #[arg(long, default_value = "0,0", value_parser = parse_complex)]
        target: c64,
        #[arg(long, default_value_t = 1)]
        num_eigs: usize,
        /// State dimension (banded).
        #[arg(long, default_value_t = 2000)]
        k: usize,
        /// Band width, odd (banded).
        #[arg(long, default_value_t = 5)]
        bandwidth: usize,
        /// Inputs and outputs (banded).
        #[arg(long, default_value_t = 2)]
        n_io: usize,
        /// Problem size (delay, quadratic).
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Off-diagonal fill probability (delay, quadratic).
        #[arg(long, default_value_t = 0.1)]
        density: f64,
        /// Scale of the delayed term (delay).
        #[arg(long, default_value_t = 0.5)]
        g_scale: f64,
    },
    /// Compute reference eigenvalues with a dense method.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Banded,
    Delay,
    Quadratic,
}

fn parse_complex(s: &str) -> Result<c64, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    match parts[..] {
        [re] => Ok(c64::new(num(re)?, 0.0)),
        [re, im] => Ok(c64::new(num(re)?, num(im)?)),
        _ => Err(format!("expected `re` or `re,im`, got `{s}`")),
    }
}

fn fmt_c(z: c64) -> String {
    format!("{:.15e} {:+.15e}i", z.re, z.im)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(cmd: Command) -> nepspace::Result<u8> {
    match cmd {
        Command::Solve { config, out } => {
            let o = driver::run(&config, out.as_deref())?;
            let status = match o.stop {
                StopReason::Converged => "converged",
                StopReason::MaxIter => "reached max_iter",
                StopReason::Stagnated => "stagnated",
            };
            println!("{status} after {} iterations", o.report.iterations());
            for e in &o.report.estimates {
                println!("  {}  residual {:.3e}{}", fmt_c(e.lambda), e.residual, if e.converged { "" } else { "  (unconverged)" });
            }
            println!("reports in {}", o.out_dir.display());
            Ok(o.exit_code as u8)
        }
        Command::Generate { kind, out, seed, target, num_eigs, k, bandwidth, n_io, n, density, g_scale } => {
            let spec = match kind {
                Kind::Banded => GenerateSpec::Banded { k, bandwidth, n_io },
                Kind::Delay => GenerateSpec::Delay { n, density, g_scale },
                Kind::Quadratic => GenerateSpec::Quadratic { n, density },
            };
            let path = driver::generate(spec, &GenerateRun { seed, target, num_eigs }, &out)?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::Oracle { config, out } => {
            let (path, values) = driver::run_oracle(&config, out.as_deref())?;
            for v in values {
                println!("  {}", fmt_c(v));
            }
            println!("written to {}", path.display());
            Ok(0)
        }
    }
}
