//! Simulation and verification tools for SDEs driven by cylindrical,
//! non-symmetric α-stable Lévy noise, and for their weak convergence to the
//! Brownian-driven limit equation `dX = b(X) dt + √2 σ(X) dB` as α → 2.
//!
//! Layout:
//! - [`levy_measure`]: the power-law Lévy measure, its closed-form moments and
//!   a quadrature oracle for them.
//! - [`rng`]: counter-based, splittable random streams.
//! - [`stable_sampler`]: exact (Chambers–Mallows–Stuck) and small/large-jump
//!   decomposition samplers for stable increments.
//! - [`sde_solver`]: Euler–Maruyama schemes for the jump SDE and the limit SDE.
//! - [`generator_calculus`]: deterministic evaluation of both generators and the
//!   backward Kolmogorov residual check.
//! - [`weak_error`]: Monte Carlo weak-error estimation, rate regression and the
//!   closed-form `E|L_t|` rate witness.

pub mod error;
pub mod generator_calculus;
pub mod levy_measure;
pub mod quadrature;
pub mod rng;
pub mod sde_solver;
pub mod special;
pub mod stable_sampler;
pub mod stats;
pub mod weak_error;

pub use error::{Error, Result};
pub use levy_measure::{CylindricalNoiseSpec, LevyMeasureSpec, Skewness, StabilityIndex};
pub use rng::{CounterRng, RngStreamKey};
pub use sde_solver::{CoefficientField, SamplePath, TimeGrid};
pub use stable_sampler::IncrementSamplerMode;
