//! Molecule-based Q-tensor liquid-crystal model with Bingham closure.

pub mod closure;
pub mod dynamics;
pub mod equilibrium;
pub mod harness;
pub mod leslie;
pub mod linear_ops;
pub mod error;
pub mod quadrature;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
