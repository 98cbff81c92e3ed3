//! TOML run configuration. Keys carry their units; frequencies in `_hz`
//! are ordinary frequencies except the relaxation rates, which are taken
//! directly as s⁻¹.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::atom::AtomSystem;
use crate::constants::{celsius_to_kelvin, AtomSpec};
use crate::error::{Error, Result};
use crate::field::{DriveConfig, DriveMode, PumpConfig, EPR_MIN_RATIO};
use crate::liouville::{EvolveOptions, RelaxationRates, Tier};
use crate::pauli::ScanOptions;
use crate::quadrature::{maxwell_nodes, VelocityNode};
use crate::spectrum::Experiment;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    pub mode: DriveMode,
    #[serde(rename = "B0_tesla")]
    pub b0_tesla: f64,
    #[serde(rename = "Omega_hz")]
    pub omega_hz: f64,
    /// EPR static field; when absent it is set from `epr_center_hz`.
    #[serde(rename = "Bdc_tesla", skip_serializing_if = "Option::is_none")]
    pub bdc_tesla: Option<f64>,
    #[serde(rename = "Bac_tesla")]
    pub bac_tesla: f64,
    /// Target EPR resonance used to derive B_dc = 2π·f/γ_eff.
    pub epr_center_hz: f64,
    pub phase_origin_s: f64,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            mode: DriveMode::DualHarmonic,
            b0_tesla: 27e-6,
            omega_hz: 33.13e3,
            bdc_tesla: None,
            bac_tesla: 10e-9,
            epr_center_hz: 33.13e3,
            phase_origin_s: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PumpSection {
    #[serde(rename = "E_amp_vpm", alias = "E_amp")]
    pub e_amp_vpm: f64,
    /// Carrier minus the F=1↔F'=2 transition.
    pub detuning_hz: f64,
}

impl Default for PumpSection {
    fn default() -> Self {
        Self {
            e_amp_vpm: 100.0,
            detuning_hz: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesSection {
    #[serde(rename = "Gamma_hz")]
    pub gamma_hz: f64,
    pub delta_mix_hz: f64,
    pub delta_dcy_hz: f64,
    pub delta_dec_hz: f64,
}

impl Default for RatesSection {
    fn default() -> Self {
        let r = RelaxationRates::default();
        Self {
            gamma_hz: r.gamma,
            delta_mix_hz: r.delta_mix,
            delta_dcy_hz: r.delta_dcy,
            delta_dec_hz: r.delta_dec,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub temperature_c: f64,
    pub velocity_nodes: usize,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            temperature_c: 80.0,
            velocity_nodes: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub tier: Tier,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps_per_period: Option<usize>,
    pub samples_per_period: usize,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_periods: Option<usize>,
    pub accelerate: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        let e = EvolveOptions::default();
        Self {
            tier: Tier::Reduced,
            steps_per_period: e.steps_per_period,
            samples_per_period: e.samples_per_period,
            tolerance: e.tol,
            max_periods: e.max_periods,
            accelerate: e.accelerate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub omega_lo_hz: f64,
    pub omega_hi_hz: f64,
    pub points: usize,
    /// Density multiplier for the re-sweep of each peak window; 0 or 1 disables it.
    pub refine: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            omega_lo_hz: 10e3,
            omega_hi_hz: 50e3,
            points: 400,
            refine: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PauliSection {
    pub r_lo: f64,
    pub r_hi: f64,
    pub n_scan: usize,
    /// Drive phase Ω t₀ at spin creation, rad.
    pub phase_rad: f64,
}

impl Default for PauliSection {
    fn default() -> Self {
        Self {
            r_lo: 0.05,
            r_hi: 0.35,
            n_scan: 1200,
            phase_rad: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub atom: AtomSpec,
    pub field: FieldSection,
    pub pump: PumpSection,
    pub rates: RatesSection,
    pub ensemble: EnsembleSection,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub pauli: PauliSection,
    pub output: OutputSection,
}

fn require(ok: bool, key: &str, msg: impl std::fmt::Display, errs: &mut Vec<String>) {
    if !ok {
        errs.push(format!("{key}: {msg}"));
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// All field-level problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        let f = &self.field;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        match f.mode {
            DriveMode::DualHarmonic => require(pos(f.b0_tesla), "field.B0_tesla", "must be positive", &mut e),
            DriveMode::Epr => {
                require(nonneg(f.bac_tesla), "field.Bac_tesla", "must be ≥ 0", &mut e);
                if let Some(bdc) = f.bdc_tesla {
                    require(pos(bdc), "field.Bdc_tesla", "must be positive", &mut e);
                    require(
                        bdc >= EPR_MIN_RATIO * f.bac_tesla,
                        "field.Bdc_tesla",
                        format!("must be at least {EPR_MIN_RATIO} × Bac_tesla"),
                        &mut e,
                    );
                } else {
                    require(pos(f.epr_center_hz), "field.epr_center_hz", "must be positive", &mut e);
                }
            }
        }
        require(pos(f.omega_hz), "field.Omega_hz", "must be positive", &mut e);
        require(f.phase_origin_s.is_finite(), "field.phase_origin_s", "must be finite", &mut e);
        require(nonneg(self.pump.e_amp_vpm), "pump.E_amp_vpm", "must be ≥ 0", &mut e);
        require(self.pump.detuning_hz.is_finite(), "pump.detuning_hz", "must be finite", &mut e);
        let r = &self.rates;
        require(pos(r.gamma_hz), "rates.Gamma_hz", "must be positive", &mut e);
        require(nonneg(r.delta_mix_hz), "rates.delta_mix_hz", "must be ≥ 0", &mut e);
        require(pos(r.delta_dcy_hz), "rates.delta_dcy_hz", "must be positive", &mut e);
        require(pos(r.delta_dec_hz), "rates.delta_dec_hz", "must be positive", &mut e);
        require(
            celsius_to_kelvin(self.ensemble.temperature_c) > 0.0,
            "ensemble.temperature_c",
            "must be above absolute zero",
            &mut e,
        );
        require(self.ensemble.velocity_nodes >= 1, "ensemble.velocity_nodes", "must be ≥ 1", &mut e);
        require(self.run.samples_per_period >= 1, "run.samples_per_period", "must be ≥ 1", &mut e);
        if let Some(s) = self.run.steps_per_period {
            require(
                s % self.run.samples_per_period.max(1) == 0,
                "run.steps_per_period",
                "must be a multiple of run.samples_per_period",
                &mut e,
            );
        }
        require(pos(self.run.tolerance), "run.tolerance", "must be positive", &mut e);
        let s = &self.sweep;
        require(pos(s.omega_lo_hz), "sweep.omega_lo_hz", "must be positive", &mut e);
        require(s.omega_hi_hz > s.omega_lo_hz, "sweep.omega_hi_hz", "must exceed omega_lo_hz", &mut e);
        require(s.points >= 3, "sweep.points", "must be ≥ 3", &mut e);
        let p = &self.pauli;
        require(pos(p.r_lo), "pauli.r_lo", "must be positive", &mut e);
        require(p.r_hi > p.r_lo, "pauli.r_hi", "must exceed r_lo", &mut e);
        require(p.n_scan >= 3, "pauli.n_scan", "must be ≥ 3", &mut e);
        if let Err(err) = crate::atom::build_atom_system(&self.atom) {
            e.push(format!("atom: {err}"));
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(e.join("; ")))
        }
    }

    pub fn rates(&self) -> RelaxationRates {
        RelaxationRates {
            gamma: self.rates.gamma_hz,
            delta_mix: self.rates.delta_mix_hz,
            delta_dcy: self.rates.delta_dcy_hz,
            delta_dec: self.rates.delta_dec_hz,
        }
    }

    pub fn pump(&self) -> PumpConfig {
        PumpConfig::new(self.pump.e_amp_vpm, 2.0 * PI * self.pump.detuning_hz)
    }

    /// Gyromagnetic ratio of the F=2 level, rad/(s·T).
    pub fn gamma_eff(&self) -> f64 {
        self.atom.gamma_f2()
    }

    pub fn bdc_tesla(&self) -> f64 {
        self.field
            .bdc_tesla
            .unwrap_or_else(|| 2.0 * PI * self.field.epr_center_hz / self.gamma_eff())
    }

    /// Drive in the configured mode at `field.Omega_hz`.
    pub fn drive(&self) -> DriveConfig {
        let omega = 2.0 * PI * self.field.omega_hz;
        let mut d = match self.field.mode {
            DriveMode::DualHarmonic => DriveConfig::dual_harmonic(self.field.b0_tesla, omega),
            DriveMode::Epr => DriveConfig::epr(self.bdc_tesla(), self.field.bac_tesla, omega),
        };
        d.phase_origin = self.field.phase_origin_s;
        d
    }

    /// The EPR counterpart of the drive, with the same Ω.
    pub fn epr_drive(&self) -> DriveConfig {
        let mut d = DriveConfig::epr(self.bdc_tesla(), self.field.bac_tesla, 2.0 * PI * self.field.omega_hz);
        d.phase_origin = self.field.phase_origin_s;
        d
    }

    pub fn nodes(&self) -> Result<Vec<VelocityNode>> {
        let u = self.atom.thermal_speed(celsius_to_kelvin(self.ensemble.temperature_c));
        maxwell_nodes(self.ensemble.velocity_nodes, u)
    }

    pub fn evolve(&self) -> EvolveOptions {
        EvolveOptions {
            steps_per_period: self.run.steps_per_period,
            samples_per_period: self.run.samples_per_period,
            tol: self.run.tolerance,
            max_periods: self.run.max_periods,
            accelerate: self.run.accelerate,
            ..EvolveOptions::default()
        }
    }

    pub fn experiment<'a>(&self, sys: &'a AtomSystem) -> Result<Experiment<'a>> {
        Ok(Experiment {
            sys,
            drive: self.drive(),
            pump: self.pump(),
            rates: self.rates(),
            nodes: self.nodes()?,
            tier: self.run.tier,
            evolve: self.evolve(),
        })
    }

    pub fn scan_options(&self) -> ScanOptions {
        ScanOptions {
            n_scan: self.pauli.n_scan,
            phase: self.pauli.phase_rad,
            ..ScanOptions::default()
        }
    }

    /// The configuration as JSON, embedded in output headers.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.rates(), RelaxationRates::default());
        assert!((cfg.drive().omega - 2.0 * PI * 33.13e3).abs() < 1e-9);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml("[field]\nB0 = 1e-6\n").unwrap_err();
        assert!(err.to_string().contains("B0"), "{err}");
        assert!(RunConfig::from_toml("[nonsense]\n").is_err());
    }

    #[test]
    fn e_amp_alias() {
        let cfg = RunConfig::from_toml("[pump]\nE_amp = 0\n").unwrap();
        assert_eq!(cfg.pump.e_amp_vpm, 0.0);
    }

    #[test]
    fn field_level_diagnostics() {
        let err = RunConfig::from_toml("[field]\nB0_tesla = -1\n[sweep]\npoints = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("field.B0_tesla") && msg.contains("sweep.points"), "{msg}");
    }

    #[test]
    fn epr_ratio_checked() {
        let err = RunConfig::from_toml("[field]\nmode = \"epr\"\nBdc_tesla = 1e-7\nBac_tesla = 1e-7\n").unwrap_err();
        assert!(err.to_string().contains("Bdc_tesla"));
    }

    #[test]
    fn bdc_from_center() {
        let cfg = RunConfig::default();
        let f = cfg.gamma_eff() * cfg.bdc_tesla() / (2.0 * PI);
        assert!((f - 33.13e3).abs() < 1e-6);
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.run.tier = Tier::Full;
        cfg.field.bdc_tesla = Some(1e-5);
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
