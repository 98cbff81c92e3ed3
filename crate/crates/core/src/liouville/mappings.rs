//! Dissipative mappings. Each returns the operator that the generator
//! subtracts (scaled by its rate), so all three are contractive channels.

use num_complex::Complex64 as C64;

use crate::atom::{excited_block, AtomSystem, Op, GROUND_DIM};
use crate::quadrature::VelocityNode;

/// 𝓜{ρ}_i = ρ_i − Σ_j w_j ρ_j.
pub fn mapping_m(nodes: &[VelocityNode], rho: &[Op]) -> Vec<Op> {
    debug_assert_eq!(nodes.len(), rho.len());
    let mean = nodes
        .iter()
        .zip(rho)
        .fold(Op::zeros(), |acc, (n, r)| acc + r * C64::new(n.weight, 0.0));
    rho.iter().map(|r| r - mean).collect()
}

/// Optical-coherence part P_e ρ P_g + P_g ρ P_e.
pub fn mapping_d(rho: &Op, _sys: &AtomSystem) -> Op {
    let mut out = Op::zeros();
    for r in 0..GROUND_DIM {
        for c in GROUND_DIM..2 * GROUND_DIM {
            out[(r, c)] = rho[(r, c)];
            out[(c, r)] = rho[(c, r)];
        }
    }
    out
}

/// P_e ρ P_e − ρ'_n ⊗ ρ_e⁽⁰⁾: excited population minus its
/// nuclear-spin-preserving image in the ground manifold.
pub fn mapping_r(rho: &Op, sys: &AtomSystem) -> Op {
    let exc = excited_block(rho);
    let repop = sys.repopulation.apply(&exc);
    let mut out = Op::zeros();
    out.fixed_view_mut::<GROUND_DIM, GROUND_DIM>(GROUND_DIM, GROUND_DIM)
        .copy_from(&exc);
    out.fixed_view_mut::<GROUND_DIM, GROUND_DIM>(0, 0).copy_from(&(-repop));
    out
}
