//! Boundary-integral machinery for spectral analysis of the Neumann-Poincare
//! (NP) operator on piecewise-smooth planar domains.
//!
//! The crate builds composite Gauss-Legendre panel discretizations of the NP
//! operator and the single-layer potential, solves regularized resolvent
//! equations `((t + i*delta) I - K*) phi = f` with dyadically graded corner
//! meshes (either brute-force or through recursive corner compression), and
//! turns the growth rate of the energy norm of `phi` as `delta -> 0` into a
//! pointwise spectral indicator that separates resolvent set, absolutely
//! continuous bands, and eigenvalues.

pub mod classify;
pub mod compress;
pub mod dense;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod mesh;
pub mod operators;
pub mod oracles;
pub mod quad;
pub mod resolvent;
pub mod slp;

pub use error::{Error, Result};
pub use geometry::{BoundaryCurve, V2};
