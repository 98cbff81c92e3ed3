use num_complex::Complex64 as C64;

use crate::atom::{AtomSystem, Op, DIM, GROUND_DIM};
use crate::constants::HBAR;
use crate::field::{DriveConfig, PumpConfig};

/// Time-independent pieces of the rotating-frame Hamiltonian (rad/s).
#[derive(Clone, Debug)]
pub struct HamiltonianModel {
    /// Diagonal at v_z = 0: hyperfine offsets with the pump detuning folded
    /// into the excited levels.
    pub diagonal: [f64; DIM],
    /// V_E in RWA: −(ℰ/2ħ)(P_e d P_g + h.c.).
    pub optical: Op,
    /// Optical wavenumber k, 1/m.
    pub wavenumber: f64,
    pub zeeman: [Op; 3],
}

impl HamiltonianModel {
    pub fn new(sys: &AtomSystem, pump: &PumpConfig) -> Self {
        let mut diagonal = sys.energies;
        for d in diagonal.iter_mut().skip(GROUND_DIM) {
            *d -= pump.detuning;
        }
        let coupling = sys.dipole * C64::new(-pump.e_amp / (2.0 * HBAR), 0.0);
        Self {
            diagonal,
            optical: coupling + coupling.adjoint(),
            wavenumber: sys.spec.wavenumber(),
            zeeman: sys.zeeman,
        }
    }

    /// Excited-level energy at velocity `v_z`: the Doppler shift k·v_z moves
    /// the optical transition.
    #[inline]
    pub fn level(&self, k: usize, v_z: f64) -> f64 {
        if k >= GROUND_DIM {
            self.diagonal[k] + self.wavenumber * v_z
        } else {
            self.diagonal[k]
        }
    }

    /// H(t, v_z) with B already evaluated.
    pub fn at(&self, b: &nalgebra::Vector3<f64>, v_z: f64) -> Op {
        let mut h = self.optical;
        for k in 0..DIM {
            h[(k, k)] += C64::new(self.level(k, v_z), 0.0);
        }
        for a in 0..3 {
            if b[a] != 0.0 {
                h += self.zeeman[a] * C64::new(b[a], 0.0);
            }
        }
        h
    }

    /// Largest single optical coupling |⟨e|V_E|g⟩|, rad/s.
    pub fn max_coupling(&self) -> f64 {
        self.optical.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// H = H₀ + V_E + V_B in the frame rotating at the pump carrier, rad/s.
pub fn hamiltonian(t: f64, v_z: f64, drive: &DriveConfig, pump: &PumpConfig, sys: &AtomSystem) -> Op {
    HamiltonianModel::new(sys, pump).at(&drive.field_at(t), v_z)
}
