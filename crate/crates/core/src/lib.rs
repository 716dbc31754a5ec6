//! Spectral laboratory for the Yamabe energy on products of a circle with a
//! round sphere, restricted to conformal factors that depend only on the
//! circle coordinate.
//!
//! The crate provides the constrained energy and its first/second variations
//! on the unit-volume manifold of conformal factors, a finite-dimensional
//! (Lyapunov-Schmidt) reduction at degenerate critical points, solvers for
//! minimizers and critical points, and deficit-versus-distance experiments
//! that measure stability exponents.

pub mod config;
pub mod energy;
pub mod hessian;
pub mod manifold;
pub mod reduction;
pub mod report;
pub mod solver;
pub mod spectral;
pub mod stability;

pub mod cli;

mod error;

pub use error::{Error, Result};
pub use manifold::Manifold;
pub use spectral::{Field, Grid};
