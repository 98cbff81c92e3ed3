//! Spin polarization, the two convolutions C₁ and C₂, trajectory files and
//! the shape audits run on steady-state records.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::atom::{AtomSystem, Op};
use crate::error::{Error, Result};
use crate::liouville::VelocityEnsembleState;

#[derive(Clone, Debug, PartialEq)]
pub struct SpinPolarizationSample {
    pub t: f64,
    pub s1: Vector3<f64>,
    pub s2: Vector3<f64>,
    /// Drive field at `t`, T.
    pub b: Vector3<f64>,
}

/// One steady drive period sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct StroboscopicRecord {
    pub samples: Vec<SpinPolarizationSample>,
    pub converged: bool,
    /// Drive periods integrated.
    pub periods: usize,
    /// Drive angular frequency, rad/s.
    pub omega: f64,
    pub steps_per_period: usize,
}

impl StroboscopicRecord {
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn summary(&self) -> Result<RecordSummary> {
        Ok(RecordSummary {
            omega_hz: self.omega / (2.0 * PI),
            c1: convolution_c1(self)?,
            c2: convolution_c2(self)?,
            converged: self.converged,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    #[serde(rename = "Omega_hz")]
    pub omega_hz: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    pub converged: bool,
}

/// S₁ and S₂ of a (velocity-averaged) density matrix: Tr(P_n ρ P_n F_{n,α}).
pub fn spin_vectors(rho: &Op, sys: &AtomSystem) -> (Vector3<f64>, Vector3<f64>) {
    let manifold = |n: usize, offset: usize, dim: usize| {
        Vector3::from_fn(|a, _| {
            let f = &sys.fops[n][a];
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..dim {
                for c in 0..dim {
                    acc += rho[(offset + r, offset + c)] * f[(c, r)];
                }
            }
            acc.re
        })
    };
    (manifold(0, 0, 3), manifold(1, 3, 5))
}

/// Spin polarization of ground level `n` ∈ {1, 2} averaged over velocities.
pub fn spin_polarization(state: &VelocityEnsembleState, n: u8, sys: &AtomSystem) -> Result<Vector3<f64>> {
    let (s1, s2) = spin_vectors(&state.average(), sys);
    match n {
        1 => Ok(s1),
        2 => Ok(s2),
        other => Err(Error::Manifold(other)),
    }
}

fn nonempty(record: &StroboscopicRecord) -> Result<()> {
    if record.samples.is_empty() {
        Err(Error::EmptyRecord)
    } else {
        Ok(())
    }
}

/// C₁: radius of the sphere containing the S₂ trajectory.
pub fn convolution_c1(record: &StroboscopicRecord) -> Result<f64> {
    nonempty(record)?;
    Ok(record.samples.iter().map(|s| s.s2.norm()).fold(0.0, f64::max))
}

/// Period average of S₂. On a uniform periodic grid the trapezoid rule is
/// the plain sample mean.
pub fn mean_s2(record: &StroboscopicRecord) -> Result<Vector3<f64>> {
    nonempty(record)?;
    let sum = record.samples.iter().fold(Vector3::zeros(), |acc, s| acc + s.s2);
    Ok(sum / record.samples.len() as f64)
}

/// C₂ = |⟨S₂⟩_T|.
pub fn convolution_c2(record: &StroboscopicRecord) -> Result<f64> {
    Ok(mean_s2(record)?.norm())
}

/// Amplitudes |c_k| of the real signal `x` for k = 0..N/2, with
/// x(t) ≈ c_0 + Σ |c_k| cos(kΩt + φ_k).
pub fn harmonic_amplitudes(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let c = x.iter().enumerate().fold(C64::new(0.0, 0.0), |acc, (j, v)| {
                acc + C64::from_polar(*v, -2.0 * PI * (k * j) as f64 / n as f64)
            });
            let scale = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
            scale * c.norm() / n as f64
        })
        .collect()
}

/// Magnitude of the first drive harmonic of S₂ₓ. For a Lorentzian
/// response its half width is √3 times that of the absorption part.
pub fn transverse_amplitude(record: &StroboscopicRecord) -> Result<f64> {
    nonempty(record)?;
    let x: Vec<f64> = record.samples.iter().map(|s| s.s2.x).collect();
    Ok(harmonic_amplitudes(&x)[1])
}

/// Absorption (quadrature) part of the S₂ₓ response at Ω: the first
/// harmonic component 90° out of phase with the transverse field Bₓ.
/// Returns 0 when Bₓ has no first harmonic.
pub fn absorption_amplitude(record: &StroboscopicRecord) -> Result<f64> {
    nonempty(record)?;
    let n = record.samples.len() as f64;
    let phasor = |f: &dyn Fn(&SpinPolarizationSample) -> f64| {
        record.samples.iter().fold(C64::new(0.0, 0.0), |acc, s| {
            acc + C64::from_polar(f(s), -record.omega * (s.t - record.samples[0].t))
        })
    };
    let zb = phasor(&|s| s.b.x);
    if zb.norm() == 0.0 {
        return Ok(0.0);
    }
    let zs = phasor(&|s| s.s2.x);
    Ok((zs * zb.conj() / zb.norm()).im.abs() * 2.0 / n)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarmonicAudit {
    /// max(|a_Ω|, |a_2Ω|)
    pub fundamental: f64,
    /// Largest amplitude at 3Ω and above.
    pub max_above_second: f64,
    pub ratio: f64,
    pub passed: bool,
}

/// Higher-harmonic content of S₂z: passes when some component above 2Ω
/// exceeds `threshold` times the reference. S₂z is even in the drive
/// phase, so the reference is the larger of the Ω and 2Ω amplitudes.
pub fn harmonic_audit(record: &StroboscopicRecord, threshold: f64) -> Result<HarmonicAudit> {
    nonempty(record)?;
    let z: Vec<f64> = record.samples.iter().map(|s| s.s2.z).collect();
    let amps = harmonic_amplitudes(&z);
    let fundamental = amps.iter().skip(1).take(2).copied().fold(0.0, f64::max);
    let max_above_second = amps.iter().skip(3).copied().fold(0.0, f64::max);
    let ratio = if fundamental > 0.0 { max_above_second / fundamental } else { f64::INFINITY };
    Ok(HarmonicAudit {
        fundamental,
        max_above_second,
        ratio,
        passed: max_above_second > threshold * fundamental,
    })
}

fn hausdorff(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    let directed = |p: &[Vector3<f64>], q: &[Vector3<f64>]| {
        p.iter()
            .map(|x| q.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MirrorAudit {
    pub c1: f64,
    /// Hausdorff distance between the S₂ curve and its S_x-flipped image.
    pub x_flip: f64,
    pub y_flip: f64,
    pub x_relative: f64,
    pub y_relative: f64,
    pub passed: bool,
}

/// Mirror symmetry of the S₂ trajectory about the S_yS_z and S_xS_z planes.
/// Passes when the S_y-flip deviation is below `tolerance`·C₁.
pub fn mirror_audit(record: &StroboscopicRecord, tolerance: f64) -> Result<MirrorAudit> {
    let c1 = convolution_c1(record)?;
    let pts: Vec<Vector3<f64>> = record.samples.iter().map(|s| s.s2).collect();
    let flip = |axis: usize| {
        let img: Vec<Vector3<f64>> = pts
            .iter()
            .map(|p| {
                let mut q = *p;
                q[axis] = -q[axis];
                q
            })
            .collect();
        hausdorff(&pts, &img)
    };
    let (x_flip, y_flip) = (flip(0), flip(1));
    let rel = |d: f64| if c1 > 0.0 { d / c1 } else { 0.0 };
    Ok(MirrorAudit {
        c1,
        x_flip,
        y_flip,
        x_relative: rel(x_flip),
        y_relative: rel(y_flip),
        passed: rel(y_flip) < tolerance,
    })
}

pub const TRAJECTORY_COLUMNS: &str = "t,S1x,S1y,S1z,S2x,S2y,S2z,Bx,Bz";

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".part");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// CSV text of a record with `# key = value` header lines.
pub fn trajectory_csv(record: &StroboscopicRecord, meta: &BTreeMap<String, String>) -> Result<String> {
    nonempty(record)?;
    let mut out = String::new();
    for (k, v) in meta {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out.push_str(&format!("# omega_rad_s = {}\n", record.omega));
    out.push_str(&format!("# converged = {}\n", record.converged));
    out.push_str(&format!("# periods = {}\n", record.periods));
    out.push_str(&format!("# steps_per_period = {}\n", record.steps_per_period));
    out.push_str(TRAJECTORY_COLUMNS);
    out.push('\n');
    for s in &record.samples {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.t, s.s1.x, s.s1.y, s.s1.z, s.s2.x, s.s2.y, s.s2.z, s.b.x, s.b.z
        ));
    }
    Ok(out)
}

pub fn export_trajectory(record: &StroboscopicRecord, path: &Path, meta: &BTreeMap<String, String>) -> Result<()> {
    write_atomic(path, trajectory_csv(record, meta)?.as_bytes())
}

/// Reads a file written by [`export_trajectory`]. Header keys other than
/// the record's own come back in the map.
pub fn read_trajectory(path: &Path) -> Result<(StroboscopicRecord, BTreeMap<String, String>)> {
    let text = std::fs::read_to_string(path)?;
    let bad = |msg: String| Error::Parse { what: path.display().to_string(), msg };
    let mut meta = BTreeMap::new();
    let mut samples = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if !header_seen {
            if line.trim() != TRAJECTORY_COLUMNS {
                return Err(bad(format!("line {}: expected column header", lineno + 1)));
            }
            header_seen = true;
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
        if v.len() != 9 {
            return Err(bad(format!("line {}: expected 9 columns, got {}", lineno + 1, v.len())));
        }
        samples.push(SpinPolarizationSample {
            t: v[0],
            s1: Vector3::new(v[1], v[2], v[3]),
            s2: Vector3::new(v[4], v[5], v[6]),
            b: Vector3::new(v[7], 0.0, v[8]),
        });
    }
    let mut take = |key: &str| meta.remove(key).ok_or_else(|| bad(format!("missing header key {key}")));
    let omega = take("omega_rad_s")?.parse().map_err(|e| bad(format!("omega_rad_s: {e}")))?;
    let converged = take("converged")?.parse().map_err(|e| bad(format!("converged: {e}")))?;
    let periods = take("periods")?.parse().map_err(|e| bad(format!("periods: {e}")))?;
    let steps_per_period = take("steps_per_period")?.parse().map_err(|e| bad(format!("steps_per_period: {e}")))?;
    let record = StroboscopicRecord {
        samples,
        converged,
        periods,
        omega,
        steps_per_period,
    };
    nonempty(&record)?;
    Ok((record, meta))
}
