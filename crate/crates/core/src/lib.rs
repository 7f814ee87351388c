//! Discretized Onsager free-energy problems for interacting corpora.
//!
//! A configuration space is a compact metric space with a probability
//! measure, represented here by a quadrature grid ([`space`]). Interaction
//! kernels ([`kernel`]) are symmetric, nonnegative and vanish on the
//! diagonal. The [`solver`] finds solutions of the Onsager equation
//! `g = exp(-b U[g]) / Z` by damped fixed-point iteration with an energy
//! safeguard, and continues them in the inverse temperature `b`.
//! [`branch`] tracks the scalar order parameter of the two-rod examples and
//! [`limit`] characterizes the `b -> oo` behavior: zero sets of the kernel,
//! concentration of solutions and the entropic selection test.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod branch;
mod error;
pub mod kernel;
pub mod limit;
pub mod solver;
pub mod space;
pub mod transport;

pub use error::{Error, Result};
pub use kernel::{KernelMatrix, KernelSpec, ValidationReport};
pub use solver::{InitialDensity, OnsagerState, SolverConfig};
pub use space::{Axis, AxisSpec, Density, DiscreteSpace, ProductMetric, Quadrature};
