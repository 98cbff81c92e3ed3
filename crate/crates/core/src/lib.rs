//! Simulation of optically pumped ⁸⁷Rb spins under a strong zero-mean
//! dual-harmonic magnetic field, and the free-spin monodromy analysis of
//! the resulting resonances.

pub mod angular;
pub mod atom;
pub mod config;
pub mod constants;
pub mod error;
pub mod field;
pub mod liouville;
pub mod observables;
pub mod pauli;
pub mod quadrature;
pub mod spectrum;

#[cfg(test)]
mod test_util;

pub use error::{Error, Result};
