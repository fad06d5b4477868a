//! Grid solver and regularity diagnostics for the Dirichlet problem of the
//! complex Monge-Ampere equation `(dd^c u)^n = f dV` on bounded domains in
//! C^n, n in {1, 2}.

pub mod domains;
pub mod error;
pub mod expr;
pub mod grid;
pub mod hermitian;
pub mod operator;
pub mod modulus;
pub mod pairs;
pub mod psh;
pub mod regularity;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
