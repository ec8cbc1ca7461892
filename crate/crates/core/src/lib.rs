//! Fock representations `(K, D)` of zero-mean Gaussian states of a scalar
//! field in a rectangular Dirichlet cavity, including the complex phase `D`,
//! and a simulation of the quadratic-detector Fermi problem built on them.

pub mod engine;
pub mod error;
pub mod exec;
pub mod fermi;
pub mod linalg;
pub mod lowrank;
pub mod mode_lattice;
pub mod ode;
pub mod oracle;
pub mod quad;
pub mod smearing;
mod tridiag;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use mode_lattice::{CavitySpec, Convention, Mode, ModeLattice};

pub type C64 = num_complex::Complex64;
