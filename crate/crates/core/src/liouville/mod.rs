//! The velocity-resolved master equation: Hamiltonian assembly, the four
//! dissipative channels, the full and reduced generators, and fixed-step
//! time integration.

mod generator;
mod hamiltonian;
mod integrate;
mod mappings;
mod reduced;

pub use generator::{generator_full, generator_reduced, Generator};
pub use hamiltonian::{hamiltonian, HamiltonianModel};
pub use integrate::{evolve_to_steady, step, EvolveOptions, Stepper};
pub use mappings::{mapping_d, mapping_m, mapping_r};
pub use reduced::ReducedModel;

use nalgebra::ComplexField;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::atom::{equilibrium_state, AtomSystem, Op};
use crate::error::{Error, Result};
use crate::quadrature::VelocityNode;

/// Relaxation rates of the four dissipative channels, in s⁻¹.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationRates {
    /// Ground-sublevel population mixing Γ.
    pub gamma: f64,
    /// Velocity-group mixing δ_mix.
    pub delta_mix: f64,
    /// Collisional quenching of the excited state δ_dcy.
    pub delta_dcy: f64,
    /// Optical-coherence decay δ_dec.
    pub delta_dec: f64,
}

impl Default for RelaxationRates {
    fn default() -> Self {
        Self {
            gamma: 1e3,
            delta_mix: 1e9,
            delta_dcy: 1e8,
            delta_dec: 1e10,
        }
    }
}

impl RelaxationRates {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("delta_mix", self.delta_mix),
            ("delta_dcy", self.delta_dcy),
            ("delta_dec", self.delta_dec),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Rates(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        if self.gamma <= 0.0 {
            return Err(Error::Rates("gamma must be positive".into()));
        }
        Ok(())
    }

    /// Warnings for rates that break the Γ ≪ δ_dcy ≪ δ_dec ordering.
    pub fn ordering_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.gamma >= self.delta_dcy {
            w.push(format!("gamma ({:e}) is not below delta_dcy ({:e})", self.gamma, self.delta_dcy));
        }
        if self.delta_dcy >= self.delta_dec {
            w.push(format!(
                "delta_dcy ({:e}) is not below delta_dec ({:e})",
                self.delta_dcy, self.delta_dec
            ));
        }
        w
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Full,
    Reduced,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::Full => "full",
            Tier::Reduced => "reduced",
        }
    }
}

/// One density matrix per velocity node.
#[derive(Clone, Debug)]
pub struct VelocityEnsembleState {
    pub nodes: Vec<VelocityNode>,
    pub rho: Vec<Op>,
    pub t: f64,
}

impl VelocityEnsembleState {
    /// Every node in the thermal state ρ₀ at time `t`.
    pub fn equilibrium(sys: &AtomSystem, nodes: Vec<VelocityNode>, t: f64) -> Self {
        let rho0 = equilibrium_state(sys);
        let rho = vec![rho0; nodes.len()];
        Self { nodes, rho, t }
    }

    /// Weighted velocity average ρ̄ = Σ_j w_j ρ_j.
    pub fn average(&self) -> Op {
        self.nodes
            .iter()
            .zip(&self.rho)
            .fold(Op::zeros(), |acc, (n, r)| acc + r * C64::new(n.weight, 0.0))
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        self.rho.iter().map(|r| (r - r.adjoint()).norm()).fold(0.0, f64::max)
    }

    pub fn max_trace_error(&self) -> f64 {
        self.rho.iter().map(|r| (r.trace() - C64::new(1.0, 0.0)).norm()).fold(0.0, f64::max)
    }

    pub fn weight_error(&self) -> f64 {
        (self.nodes.iter().map(|n| n.weight).sum::<f64>() - 1.0).abs()
    }

    /// Smallest eigenvalue over all nodes (positivity monitor).
    pub fn min_eigenvalue(&self) -> f64 {
        self.rho
            .iter()
            .map(|r| {
                let h = (r + r.adjoint()) * C64::new(0.5, 0.0);
                h.symmetric_eigenvalues().iter().map(|x| x.real()).fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }
}
