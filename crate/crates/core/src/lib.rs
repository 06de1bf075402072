//! Rational material laws for linear thermoelasticity written as evolutionary
//! equations `(∂₀M₀ + M₁(∂₀⁻¹) + A)U = F`: model catalog, well-posedness
//! certification, a staggered 1-D discretization with causal time marching,
//! and an independent modal reference solver.

pub mod banded;
pub mod cli;
pub mod error;
pub mod evolution;
pub mod json;
pub mod material;
pub mod oracle;
pub mod rational;
pub mod signal;
pub mod spatial;
pub mod wellposedness;

pub use error::{Error, Result};
