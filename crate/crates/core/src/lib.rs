//! Numerical laboratory for Brox's diffusion in a two-sided Brownian
//! environment.
//!
//! The diffusion with generator `(e^W/2) d/dx (e^{-W} d/dx)` is built from
//! the scale function `S(x) = ∫_0^x e^W` and the time change
//! `T(t) = ∫_0^t exp(-2 W(S^{-1}(B(s)))) ds` as `X(t) = S^{-1}(B(T^{-1}(t)))`.
//!
//! * [`env`] samples and refines environments and evaluates path functionals.
//! * [`scale`] tabulates `S`, its inverse, the radii `δ±` and the volumes.
//! * [`sde`] simulates paths and exit times, with an exact Green-function oracle.
//! * [`kernel`] computes heat kernels by a conservative finite-difference
//!   scheme and checks on-diagonal and Gaussian-shape bounds.
//! * [`annealed`] runs environment ensembles: event classification,
//!   closed-form Brownian laws and the annealed diagonal decay.

pub mod annealed;
pub mod env;
pub mod error;
pub mod kernel;
pub mod rng;
pub mod scale;
pub mod sde;
pub mod stats;
mod tridiag;

pub use env::{sample_environment, Direction, EnvironmentPath, Hit, Side, Target};
pub use error::{BroxError, Result};

pub use kernel::{KernelGrid, KernelSolution};
pub use scale::{ScaleTable, VolumeResult};
pub use sde::{BroxPath, ExitSample};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
