//! Classical fields: the zero-mean dual-harmonic drive, the EPR reference
//! field, and the pump envelope. All fields are evaluated analytically.

use nalgebra::Vector3;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum B_dc / B_ac ratio accepted in EPR mode.
pub const EPR_MIN_RATIO: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveMode {
    DualHarmonic,
    Epr,
}

impl DriveMode {
    pub fn name(self) -> &'static str {
        match self {
            DriveMode::DualHarmonic => "dual_harmonic",
            DriveMode::Epr => "epr",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub mode: DriveMode,
    /// Drive amplitude B₀, T.
    pub b0: f64,
    /// Drive angular frequency Ω, rad/s.
    pub omega: f64,
    /// Static field along z (EPR mode), T.
    pub b_dc: f64,
    /// Transverse amplitude along x (EPR mode), T.
    pub b_ac: f64,
    /// Time of zero drive phase, s.
    pub phase_origin: f64,
}

impl DriveConfig {
    pub fn dual_harmonic(b0: f64, omega: f64) -> Self {
        Self {
            mode: DriveMode::DualHarmonic,
            b0,
            omega,
            b_dc: 0.0,
            b_ac: 0.0,
            phase_origin: 0.0,
        }
    }

    pub fn epr(b_dc: f64, b_ac: f64, omega: f64) -> Self {
        Self {
            mode: DriveMode::Epr,
            b0: 0.0,
            omega,
            b_dc,
            b_ac,
            phase_origin: 0.0,
        }
    }

    pub fn with_omega(&self, omega: f64) -> Self {
        Self { omega, ..self.clone() }
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::FieldConfig(format!("Omega must be positive, got {}", self.omega)));
        }
        match self.mode {
            DriveMode::DualHarmonic => {
                if !(self.b0.is_finite() && self.b0 > 0.0) {
                    return Err(Error::FieldConfig(format!(
                        "B0 must be positive in dual_harmonic mode, got {}",
                        self.b0
                    )));
                }
            }
            DriveMode::Epr => {
                if !(self.b_dc.is_finite() && self.b_dc > 0.0) {
                    return Err(Error::FieldConfig(format!("B_dc must be positive, got {}", self.b_dc)));
                }
                if !(self.b_ac.is_finite() && self.b_ac >= 0.0) {
                    return Err(Error::FieldConfig(format!("B_ac must be non-negative, got {}", self.b_ac)));
                }
                if self.b_ac > 0.0 && self.b_dc / self.b_ac < EPR_MIN_RATIO {
                    return Err(Error::FieldConfig(format!(
                        "B_dc/B_ac = {:.3} is below the required {EPR_MIN_RATIO}",
                        self.b_dc / self.b_ac
                    )));
                }
            }
        }
        Ok(())
    }

    /// Field at time `t` for whichever mode is configured.
    #[inline]
    pub fn field_at(&self, t: f64) -> Vector3<f64> {
        let phase = self.omega * (t - self.phase_origin);
        match self.mode {
            DriveMode::DualHarmonic => {
                Vector3::new(self.b0 * (2.0 * phase).cos(), 0.0, self.b0 * phase.cos())
            }
            DriveMode::Epr => Vector3::new(self.b_ac * phase.cos(), 0.0, self.b_dc),
        }
    }

    /// Largest |B(t)| over a period.
    pub fn max_field(&self) -> f64 {
        match self.mode {
            DriveMode::DualHarmonic => self.b0 * std::f64::consts::SQRT_2,
            DriveMode::Epr => self.b_dc.hypot(self.b_ac),
        }
    }
}

/// B(t) = B₀ l_z cos Ω(t−t₀) + B₀ l_x cos 2Ω(t−t₀).
pub fn drive_field(t: f64, cfg: &DriveConfig) -> Result<Vector3<f64>> {
    if cfg.mode != DriveMode::DualHarmonic {
        return Err(Error::WrongMode {
            expected: DriveMode::DualHarmonic.name(),
            found: cfg.mode.name(),
        });
    }
    Ok(cfg.field_at(t))
}

/// B = B_dc l_z + B_ac l_x cos Ω(t−t₀).
pub fn epr_field(t: f64, cfg: &DriveConfig) -> Result<Vector3<f64>> {
    if cfg.mode != DriveMode::Epr {
        return Err(Error::WrongMode {
            expected: DriveMode::Epr.name(),
            found: cfg.mode.name(),
        });
    }
    Ok(cfg.field_at(t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpConfig {
    /// Electric amplitude ℰ, V/m.
    pub e_amp: f64,
    /// Carrier minus the F=1↔F'=2 transition frequency, rad/s.
    pub detuning: f64,
}

impl PumpConfig {
    pub fn new(e_amp: f64, detuning: f64) -> Self {
        Self { e_amp, detuning }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_amp.is_finite() && self.e_amp >= 0.0) {
            return Err(Error::FieldConfig(format!("pump amplitude must be ≥ 0, got {}", self.e_amp)));
        }
        if !self.detuning.is_finite() {
            return Err(Error::FieldConfig("pump detuning must be finite".into()));
        }
        Ok(())
    }
}

/// Spherical unit vector l₊ = −(l_x + i l_y)/√2 (σ⁺ about z).
pub fn sigma_plus() -> Vector3<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Vector3::new(C64::new(-s, 0.0), C64::new(0.0, -s), C64::new(0.0, 0.0))
}

/// Slowly varying positive-frequency amplitude (ℰ/2) l₊; the carrier
/// e^{−iωt} is removed by the rotating frame.
pub fn pump_positive_frequency(cfg: &PumpConfig) -> Vector3<C64> {
    sigma_plus() * C64::new(cfg.e_amp / 2.0, 0.0)
}
