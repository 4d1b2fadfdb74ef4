//! Seeded synthetic problems.
//!
//! All generators draw from `ChaCha8Rng::seed_from_u64(seed)` and produce
//! real-valued data, so the same seed gives bitwise identical problems on
//! every platform.

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nep::{ScalarFn, SplitNEP};
use crate::rep::StateSpaceREP;
use crate::sparse::SparseMat;

fn normal(rng: &mut ChaCha8Rng) -> c64 {
    c64::new(rng.sample::<f64, _>(StandardNormal), 0.0)
}

/// `R(s) = C(sI − A)⁻¹B`-type system with a banded standard normal `A` and
/// dense standard normal `B` (k×n_io) and `C` (n_io×k).
pub fn generate_banded(k: usize, bandwidth: usize, n_io: usize, seed: u64) -> Result<StateSpaceREP> {
    if bandwidth == 0 || bandwidth % 2 == 0 {
        return Err(Error::invalid(format!("bandwidth must be odd and positive, got {bandwidth}")));
    }
    if n_io == 0 || k == 0 {
        return Err(Error::invalid("banded generator needs k >= 1 and n_io >= 1"));
    }
    let half = (bandwidth - 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::with_capacity(k * bandwidth);
    for j in 0..k {
        for i in j.saturating_sub(half)..(j + half + 1).min(k) {
            t.push((i, j, normal(&mut rng)));
        }
    }
    let a = SparseMat::try_from_triplets(k, k, &t)?;
    let b = Mat::from_fn(k, n_io, |_, _| normal(&mut rng));
    let c = Mat::from_fn(n_io, k, |_, _| normal(&mut rng));
    StateSpaceREP::new(Vec::new(), a, b, c)
}

/// Symmetric sparse matrix with a full standard normal diagonal and each
/// strictly upper entry present with probability `density`.
fn symmetric_sparse(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Result<SparseMat> {
    let mut t = Vec::new();
    for j in 0..n {
        t.push((j, j, normal(rng)));
        for i in 0..j {
            if rng.random::<f64>() < density {
                let v = normal(rng);
                t.push((i, j, v));
                t.push((j, i, v));
            }
        }
    }
    SparseMat::try_from_triplets(n, n, &t)
}

fn check_density(density: f64) -> Result<()> {
    if density > 0.0 && density <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("density must lie in (0, 1], got {density}")))
    }
}

/// `T(s) = F − sI + e^{−2s}·G` with `F` and `G / g_scale` symmetric sparse.
pub fn generate_delay(n: usize, density: f64, g_scale: f64, seed: u64) -> Result<SplitNEP> {
    check_density(density)?;
    if n == 0 {
        return Err(Error::invalid("delay generator needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = symmetric_sparse(&mut rng, n, density)?;
    let g = symmetric_sparse(&mut rng, n, density)?.scaled(c64::new(g_scale, 0.0));
    SplitNEP::new(vec![
        (ScalarFn::Constant(c64::new(1.0, 0.0)), f),
        (ScalarFn::Monomial(1), SparseMat::identity(n).scaled(c64::new(-1.0, 0.0))),
        (ScalarFn::Exp { alpha: c64::new(-2.0, 0.0) }, g),
    ])
}

/// `T(s) = s²M + sD + K` with `M` diagonal with entries in `[1, 2)`, `D` and
/// `K` symmetric sparse.
pub fn generate_quadratic(n: usize, density: f64, seed: u64) -> Result<SplitNEP> {
    check_density(density)?;
    if n == 0 {
        return Err(Error::invalid("quadratic generator needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m: Vec<c64> = (0..n).map(|_| c64::new(1.0 + rng.random::<f64>(), 0.0)).collect();
    let d = symmetric_sparse(&mut rng, n, density)?.scaled(c64::new(0.5, 0.0));
    let k = symmetric_sparse(&mut rng, n, density)?;
    SplitNEP::new(vec![
        (ScalarFn::Monomial(2), SparseMat::from_diag(&m)),
        (ScalarFn::Monomial(1), d),
        (ScalarFn::Constant(c64::new(1.0, 0.0)), k),
    ])
}
