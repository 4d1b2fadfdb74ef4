pub mod dense;
pub mod driver;
pub mod error;
pub mod generate;
pub mod nep;
pub mod nep_solver;
pub mod oracle;
pub mod rep;
pub mod rep_solver;
pub mod small_nep;
pub mod sparse;
pub mod subspace;

pub use error::{Error, Result};
pub use faer::c64;
