use num_complex::Complex64 as C64;

use crate::atom::Op;

/// Deterministic random density matrix: A·A†/Tr, entries from an LCG.
pub fn random_density(seed: u64) -> Op {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    let a = Op::from_fn(|_, _| C64::new(next(), next()));
    let rho = a * a.adjoint();
    let tr = rho.trace();
    let rho = rho / tr;
    (rho + rho.adjoint()) * C64::new(0.5, 0.0)
}
