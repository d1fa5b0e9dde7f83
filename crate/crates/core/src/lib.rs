//! Numerical laboratory for the free boundary Allen–Cahn energy
//! `J_ε(u) = ∫ ε|∇u|² + χ_(-1,1)(u)/ε` on structured grids.
//!
//! * [`grid`]: lattices, fields, finite differences and quadrature.
//! * [`energy`]: `J_ε`, energy density, discrepancy, Modica and AM–GM checks.
//! * [`solver`]: projected descent with ramp continuation, the harmonic band
//!   (Bernoulli) fixed point, profile constructors, first variation.
//! * [`varifold`]: ball masses, monotonicity ratios, tilt, density and sheets.
//! * [`gamma`]: recovery sequences, perimeter, Γ-liminf/limsup audits.
//! * [`geometry`]: level sets, transition bands, Hausdorff distance, components.

pub mod energy;
mod error;
pub mod gamma;
pub mod geometry;
pub mod grid;
pub mod solver;
pub mod varifold;

pub use error::{Error, Result};
