//! Numerical tools for smooth ergodic theory of volume-preserving flows:
//! tangent and linear Poincaré flows, Lyapunov spectra, dominated
//! splittings, suspension flows, partition entropy and the entropy versus
//! exponent comparisons, for divergence-free fields in dimension 3 and
//! Hamiltonian fields on R^4.

pub mod dynamics;
pub mod entropy;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod lyapunov;
pub mod poincare;
pub mod sampling;
pub mod suspension;

pub use error::{Error, Result};
