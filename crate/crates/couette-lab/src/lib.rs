//! Couette-advected heat kernel, kernel-norm verification and shearing-frame vorticity
//! simulations around plane Couette flow.
//!
//! Runnable entry points live in `examples/`; `cargo run --example kernel_eval` is a
//! good first stop.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod kernel;
pub mod norms;
pub mod quadrature;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
