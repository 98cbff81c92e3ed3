//! Physical constants and the Rb-87 D1 data record.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Bohr magneton over ħ, rad/(s·T).
pub const BOHR_MAGNETON_OVER_HBAR: f64 = 9.274_010_078_3e-24 / HBAR;

/// Atomic data needed to build the 16-level operator set.
///
/// Frequencies are ordinary frequencies in Hz; the dipole element is in C·m.
/// Defaults are the published Rb-87 D1 values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtomSpec {
    /// Nuclear spin, doubled (3 for I = 3/2).
    pub nuclear_spin_x2: u32,
    /// Reduced dipole element ⟨J=1/2‖er‖J'=1/2⟩, C·m.
    pub reduced_dipole_cm: f64,
    pub ground_hyperfine_hz: f64,
    pub excited_hyperfine_hz: f64,
    /// D1 transition frequency (fine-structure centroid), Hz.
    pub d1_frequency_hz: f64,
    /// Ground-level Landé factors g_F for F = 1 and F = 2.
    pub g_f1: f64,
    pub g_f2: f64,
    /// Electron gyromagnetic scale multiplying g_F, rad/(s·T).
    pub gamma_e: f64,
    pub mass_u: f64,
}

impl Default for AtomSpec {
    fn default() -> Self {
        Self {
            nuclear_spin_x2: 3,
            reduced_dipole_cm: 2.537e-29,
            ground_hyperfine_hz: 6.834_682_610_904e9,
            excited_hyperfine_hz: 814.5e6,
            d1_frequency_hz: 377.107_463_380e12,
            g_f1: -0.500_18,
            g_f2: 0.499_99,
            gamma_e: BOHR_MAGNETON_OVER_HBAR,
            mass_u: 86.909_180_527,
        }
    }
}

impl AtomSpec {
    /// Gyromagnetic ratio of the F = 2 manifold, rad/(s·T).
    pub fn gamma_f2(&self) -> f64 {
        (self.g_f2 * self.gamma_e).abs()
    }

    pub fn mass_kg(&self) -> f64 {
        self.mass_u * ATOMIC_MASS_UNIT
    }

    /// Optical wavenumber of the D1 line, 1/m.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI * self.d1_frequency_hz / SPEED_OF_LIGHT
    }

    /// Most probable speed √(2k_BT/m) of the 1-D Maxwell marginal, m/s.
    pub fn thermal_speed(&self, temperature_k: f64) -> f64 {
        (2.0 * BOLTZMANN * temperature_k / self.mass_kg()).sqrt()
    }
}

pub fn celsius_to_kelvin(c: f64) -> f64 {
    c + 273.15
}
