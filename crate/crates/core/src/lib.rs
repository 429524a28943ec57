//! Numerical laboratory for n-player stochastic differential games with
//! common noise and their mean field limits.
//!
//! The crate simulates symmetric n-player diffusion games
//!
//! ```text
//! dX^i_t = b(t, X^i_t, mu^n_t, a^i_t) dt + sigma dW^i_t + gamma dB_t,
//! ```
//!
//! solves the associated mean field game fixed point per common-noise
//! scenario (backward dynamic program + forward Fokker-Planck push +
//! damped Picard iteration), and provides the verification machinery used
//! to study the two directions of the convergence problem empirically:
//! Nash-gap estimation for constructed equilibria, Girsanov reweighting
//! between baseline and deviated populations, and empirical Fokker-Planck
//! SPDE residuals with their 1/n scaling diagnostics.
//!
//! Entry points:
//! - [`model`]: game coefficients, standing-assumption validators,
//!   built-in model instances.
//! - [`sde`]: seeded noise generation and Euler-Maruyama simulation.
//! - [`measures`]: Wasserstein distances and measure-flow utilities.
//! - [`mfe`]: the per-scenario mean field equilibrium solver.
//! - [`nash`]: best responses and epsilon-Nash gap reports.
//! - [`girsanov`]: stochastic exponentials and measure-change checks.
//! - [`spde`]: generators, bump test functions, SPDE residuals.
//! - [`lab`]: experiment orchestration, persistence, CLI runners.

pub mod error;
pub mod girsanov;
pub mod grid;
pub mod lab;
pub mod measures;
pub mod mfe;
pub mod model;
pub mod nash;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod spde;
pub mod timegrid;

pub use error::{LabError, Result};
