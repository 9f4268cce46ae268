//! Boundary-driven stochastic lattice gas with mass and momentum
//! conservation, the parabolic system describing its hydrodynamic limit,
//! and brute-force oracles for small systems.
pub mod dynamics;
pub mod empirical;
pub mod error;
pub mod exactcheck;
pub mod expr;
pub mod grid;
pub mod harness;
pub mod measures;
pub mod model;
pub mod pde;
pub mod thermo;

pub use error::{Error, Result};
