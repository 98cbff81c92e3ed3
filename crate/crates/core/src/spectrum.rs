//! Ω-sweeps of the steady state, peak and HWHM extraction, the EPR
//! reference line and the through-origin HWHM(Γ) fit.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atom::AtomSystem;
use crate::error::{Error, Result};
use crate::field::{DriveConfig, DriveMode, PumpConfig};
use crate::liouville::{evolve_to_steady, EvolveOptions, RelaxationRates, Stepper, Tier, VelocityEnsembleState};
use crate::observables::{absorption_amplitude, convolution_c1, convolution_c2, transverse_amplitude, StroboscopicRecord};
use crate::quadrature::VelocityNode;

/// Everything needed to compute one steady state, except Ω.
#[derive(Clone, Debug)]
pub struct Experiment<'a> {
    pub sys: &'a AtomSystem,
    /// Drive template; its `omega` is replaced per point.
    pub drive: DriveConfig,
    pub pump: PumpConfig,
    pub rates: RelaxationRates,
    pub nodes: Vec<VelocityNode>,
    pub tier: Tier,
    pub evolve: EvolveOptions,
}

impl<'a> Experiment<'a> {
    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            rates: self.rates.with_gamma(gamma),
            ..self.clone()
        }
    }

    pub fn with_drive(&self, drive: DriveConfig) -> Self {
        Self { drive, ..self.clone() }
    }

    /// Steady-state record at drive frequency `omega` (rad/s).
    pub fn record(&self, omega: f64) -> Result<StroboscopicRecord> {
        let drive = self.drive.with_omega(omega);
        let stepper = Stepper::new(self.sys, &drive, &self.pump, &self.rates, &self.nodes, self.tier)?;
        let init = VelocityEnsembleState::equilibrium(self.sys, self.nodes.clone(), drive.phase_origin);
        evolve_to_steady(&stepper, &init, &self.evolve)
    }

    pub fn point(&self, omega: f64) -> Result<SpectrumPoint> {
        let rec = self.record(omega)?;
        Ok(SpectrumPoint {
            omega,
            c1: convolution_c1(&rec)?,
            c2: convolution_c2(&rec)?,
            a1: transverse_amplitude(&rec)?,
            absorption: absorption_amplitude(&rec)?,
            converged: rec.converged,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    /// rad/s
    pub omega: f64,
    pub c1: f64,
    pub c2: f64,
    /// First-harmonic magnitude of S₂ₓ.
    pub a1: f64,
    /// First-harmonic S₂ₓ in quadrature with Bₓ (EPR absorption signal).
    pub absorption: f64,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    C1,
    C2,
    A1,
    Absorption,
}

impl SpectrumPoint {
    pub fn value(&self, which: Observable) -> f64 {
        match which {
            Observable::C1 => self.c1,
            Observable::C2 => self.c2,
            Observable::A1 => self.a1,
            Observable::Absorption => self.absorption,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpectrum {
    pub points: Vec<SpectrumPoint>,
    /// Configuration snapshot.
    pub params: serde_json::Value,
}

impl SweepSpectrum {
    pub fn all_converged(&self) -> bool {
        self.points.iter().all(|p| p.converged)
    }

    pub fn values(&self, which: Observable) -> Vec<f64> {
        self.points.iter().map(|p| p.value(which)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# params = {}\n", self.params));
        out.push_str("Omega_hz,C1,C2,converged,A1,absorption\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.omega / (2.0 * PI),
                p.c1,
                p.c2,
                p.converged,
                p.a1,
                p.absorption
            ));
        }
        out
    }

    /// Merges `other` into this spectrum, keeping Ω strictly increasing.
    pub fn merge(&mut self, other: SweepSpectrum) {
        self.points.extend(other.points);
        self.points.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        self.points.dedup_by(|a, b| a.omega == b.omega);
    }
}

/// `n` evenly spaced values over [lo, hi].
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Evaluates every Ω in parallel; results come back in input order.
pub fn sweep_omegas(exp: &Experiment<'_>, omegas: &[f64], params: serde_json::Value) -> Result<SweepSpectrum> {
    if omegas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Sweep("Ω grid must be strictly increasing".into()));
    }
    let points = omegas.par_iter().map(|&w| exp.point(w)).collect::<Result<Vec<_>>>()?;
    if !points.is_empty() && points.iter().all(|p| !p.converged) {
        return Err(Error::NoConvergedPoints);
    }
    Ok(SweepSpectrum { points, params })
}

/// Sweep over [lo, hi] (rad/s) with `n` points.
pub fn sweep(exp: &Experiment<'_>, lo: f64, hi: f64, n: usize, params: serde_json::Value) -> Result<SweepSpectrum> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Sweep(format!("invalid range [{lo}, {hi}]")));
    }
    if n < 3 {
        return Err(Error::Sweep(format!("need at least 3 points, got {n}")));
    }
    sweep_omegas(exp, &linspace(lo, hi, n), params)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    /// rad/s
    pub center: f64,
    pub height: f64,
    /// rad/s; NaN when neither half-height crossing is in range.
    pub hwhm: f64,
    /// Set when only one half-height crossing was found.
    pub partial: bool,
    /// Sample indices of the half-height brackets (or the sweep ends).
    pub neighbors: (usize, usize),
    pub index: usize,
}

impl PeakReport {
    pub fn center_hz(&self) -> f64 {
        self.center / (2.0 * PI)
    }

    pub fn hwhm_hz(&self) -> f64 {
        self.hwhm / (2.0 * PI)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "center_rad_s": self.center,
            "center_hz": self.center_hz(),
            "height": self.height,
            "hwhm_rad_s": self.hwhm,
            "hwhm_hz": self.hwhm_hz(),
            "partial": self.partial,
            "neighbors": [self.neighbors.0, self.neighbors.1],
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeakOptions {
    /// Minimum topographic prominence relative to the largest sample.
    pub min_prominence: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self { min_prominence: 0.01 }
    }
}

fn prominence(y: &[f64], k: usize) -> f64 {
    let h = y[k];
    let left_floor = {
        let mut floor = h;
        let mut j = k;
        loop {
            if j == 0 {
                break;
            }
            j -= 1;
            if y[j] > h {
                break;
            }
            floor = floor.min(y[j]);
        }
        floor
    };
    let right_floor = {
        let mut floor = h;
        for &v in &y[k + 1..] {
            if v > h {
                break;
            }
            floor = floor.min(v);
        }
        floor
    };
    h - left_floor.max(right_floor)
}

/// Local maxima of `which`, refined by a parabola through the three
/// samples around each maximum, with HWHM from linearly interpolated
/// half-height crossings.
pub fn find_peaks(spec: &SweepSpectrum, which: Observable, opts: &PeakOptions) -> Vec<PeakReport> {
    let x: Vec<f64> = spec.points.iter().map(|p| p.omega).collect();
    let y = spec.values(which);
    find_peaks_xy(&x, &y, opts)
}

pub fn find_peaks_xy(x: &[f64], y: &[f64], opts: &PeakOptions) -> Vec<PeakReport> {
    let n = y.len();
    if n < 3 {
        return vec![];
    }
    let top = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return vec![];
    }
    let mut out = Vec::new();
    let mut k = 1;
    while k < n - 1 {
        // plateaus: step to the last equal sample
        let mut end = k;
        while end + 1 < n && y[end + 1] == y[k] {
            end += 1;
        }
        if y[k] > y[k - 1] && end + 1 < n && y[k] > y[end + 1] && prominence(y, k) >= opts.min_prominence * top {
            let i = (k + end) / 2;
            let (center, height) = if end == k {
                parabola(x[k - 1], x[k], x[k + 1], y[k - 1], y[k], y[k + 1])
            } else {
                (x[i], y[i])
            };
            let half = height / 2.0;
            let left = (0..i).rev().find(|&j| y[j] < half);
            let right = (i + 1..n).find(|&j| y[j] < half);
            let cross = |a: usize, b: usize| x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a]);
            let l = left.map(|j| cross(j, j + 1));
            let r = right.map(|j| cross(j - 1, j));
            let (hwhm, partial) = match (l, r) {
                (Some(l), Some(r)) => ((r - l) / 2.0, false),
                (Some(l), None) => (center - l, true),
                (None, Some(r)) => (r - center, true),
                (None, None) => (f64::NAN, true),
            };
            out.push(PeakReport {
                center,
                height,
                hwhm,
                partial,
                neighbors: (left.unwrap_or(0), right.unwrap_or(n - 1)),
                index: i,
            });
        }
        k = end + 1;
    }
    out
}

/// Vertex of the parabola through three points.
fn parabola(x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64) -> (f64, f64) {
    // Newton form y = y0 + d0 (x − x0) + a (x − x0)(x − x1)
    let d0 = (y1 - y0) / (x1 - x0);
    let d1 = (y2 - y1) / (x2 - x1);
    let a = (d1 - d0) / (x2 - x0);
    if a >= 0.0 {
        return (x1, y1);
    }
    let xv = (0.5 * (x0 + x1) - d0 / (2.0 * a)).clamp(x0, x2);
    (xv, y0 + (xv - x0) * (d0 + a * (xv - x1)))
}

/// Re-sweeps the window spanned by each peak's half-height brackets at
/// `density` times the local grid density and merges the result.
pub fn refine_peaks(
    exp: &Experiment<'_>,
    spec: &mut SweepSpectrum,
    which: Observable,
    opts: &PeakOptions,
    density: usize,
) -> Result<()> {
    let peaks = find_peaks(spec, which, opts);
    let mut omegas = Vec::new();
    for p in &peaks {
        let lo_i = p.neighbors.0.min(p.index.saturating_sub(1));
        let hi_i = p.neighbors.1.max((p.index + 1).min(spec.points.len() - 1));
        let lo = spec.points[lo_i].omega;
        let hi = spec.points[hi_i].omega;
        let n = (hi_i - lo_i) * density + 1;
        omegas.extend(linspace(lo, hi, n));
    }
    omegas.sort_by(f64::total_cmp);
    omegas.dedup();
    omegas.retain(|w| !spec.points.iter().any(|p| p.omega == *w));
    if omegas.is_empty() {
        return Ok(());
    }
    let extra = sweep_omegas(exp, &omegas, spec.params.clone())?;
    spec.merge(extra);
    Ok(())
}

/// The largest peak of a spectrum.
pub fn dominant_peak(peaks: &[PeakReport]) -> Option<&PeakReport> {
    peaks.iter().max_by(|a, b| a.height.total_cmp(&b.height))
}

/// Default EPR line shape: the absorption part of the transverse response.
pub const EPR_SIGNAL: Observable = Observable::Absorption;

/// EPR line: sweeps Ω over [lo, hi] in EPR mode, refines around the
/// strongest response in `signal` and reports it.
pub fn epr_reference(exp: &Experiment<'_>, lo: f64, hi: f64, n: usize, signal: Observable) -> Result<PeakReport> {
    if exp.drive.mode != DriveMode::Epr {
        return Err(Error::WrongMode {
            expected: DriveMode::Epr.name(),
            found: exp.drive.mode.name(),
        });
    }
    if exp.drive.b_ac == 0.0 {
        return Err(Error::NoResonance("transverse amplitude B_ac is zero".into()));
    }
    let mut spec = sweep(exp, lo, hi, n, serde_json::Value::Null)?;
    let opts = PeakOptions::default();
    refine_peaks(exp, &mut spec, signal, &opts, 10)?;
    let peaks = find_peaks(&spec, signal, &opts);
    let peak = dominant_peak(&peaks)
        .cloned()
        .ok_or_else(|| Error::NoResonance(format!("no EPR peak in [{lo}, {hi}] rad/s")))?;
    if peak.partial {
        return Err(Error::NoResonance(format!(
            "EPR peak at {} Hz is not bracketed by the sweep",
            peak.center_hz()
        )));
    }
    Ok(peak)
}

/// γ_eff = Ω_peak / (r_k B₀).
pub fn calibrate_gamma_eff(peak_center: f64, b0: f64, ratio: f64) -> f64 {
    peak_center / (ratio * b0)
}

/// Index of the 𝒜 member nearest to Ω/(γB₀), if within `rel_tol`.
pub fn match_set_member(center: f64, gamma: f64, b0: f64, ratios: &[f64], rel_tol: f64) -> Result<(usize, f64)> {
    let r = center / (gamma * b0);
    ratios
        .iter()
        .enumerate()
        .map(|(k, m)| (k, *m, ((r - m) / m).abs()))
        .filter(|(_, _, e)| *e <= rel_tol)
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(k, m, _)| (k, m))
        .ok_or(Error::NoSetMatch(r))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthMode {
    SpinEffect,
    Epr,
}

impl WidthMode {
    pub fn name(self) -> &'static str {
        match self {
            WidthMode::SpinEffect => "spin_effect",
            WidthMode::Epr => "epr",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HwhmRow {
    pub gamma_hz: f64,
    pub hwhm_hz: f64,
    pub center_hz: f64,
    pub mode: WidthMode,
    /// Non-converged points inside the peak window, or a partial peak.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HwhmTable {
    pub rows: Vec<HwhmRow>,
    /// HWHM per Γ from the through-origin fit.
    pub slope: f64,
    /// sqrt(Σ(y − s x)² / Σ y²).
    pub residual: f64,
}

impl HwhmTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# slope = {}\n# residual = {}\n", self.slope, self.residual);
        out.push_str("gamma_hz,hwhm_hz,mode,center_hz,flagged\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.gamma_hz,
                r.hwhm_hz,
                r.mode.name(),
                r.center_hz,
                r.flagged
            ));
        }
        out
    }
}

/// Least-squares slope of y = s·x and its relative residual.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::Fit(format!("need at least two (x, y) pairs, got {}", x.len())));
    }
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all x values are zero".into()));
    }
    let s = sxy / sxx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - s * a).powi(2)).sum();
    let yy: f64 = y.iter().map(|b| b * b).sum();
    Ok((s, if yy > 0.0 { (ss / yy).sqrt() } else { 0.0 }))
}

/// Measures one peak: coarse sweep of [lo, hi] with `n` points, then a
/// 10× re-sweep around the dominant peak of `which`.
pub fn measure_peak(exp: &Experiment<'_>, lo: f64, hi: f64, n: usize, which: Observable) -> Result<(PeakReport, bool)> {
    let mut spec = sweep(exp, lo, hi, n, serde_json::Value::Null)?;
    let opts = PeakOptions::default();
    refine_peaks(exp, &mut spec, which, &opts, 10)?;
    let peaks = find_peaks(&spec, which, &opts);
    let peak = dominant_peak(&peaks)
        .cloned()
        .ok_or_else(|| Error::NoResonance(format!("no peak in [{lo}, {hi}] rad/s")))?;
    let window = &spec.points[peak.neighbors.0..=peak.neighbors.1];
    let flagged = peak.partial || window.iter().any(|p| !p.converged);
    Ok((peak, flagged))
}

/// HWHM for each Γ (Hz). Both modes sweep [lo, hi] (rad/s); `exp` must be
/// in the matching drive mode. The spin effect is measured on C₂, the EPR
/// line on `epr_signal`.
pub fn hwhm_vs_gamma(
    exp: &Experiment<'_>,
    gammas_hz: &[f64],
    mode: WidthMode,
    range: (f64, f64, usize),
    epr_signal: Observable,
) -> Result<HwhmTable> {
    let (lo, hi, n) = range;
    if gammas_hz.len() < 2 {
        return Err(Error::Fit(format!("need at least two Γ values, got {}", gammas_hz.len())));
    }
    let which = match mode {
        WidthMode::SpinEffect => Observable::C2,
        WidthMode::Epr => {
            if exp.drive.b_ac == 0.0 {
                return Err(Error::NoResonance("transverse amplitude B_ac is zero".into()));
            }
            epr_signal
        }
    };
    let mut rows = Vec::new();
    for &g in gammas_hz {
        if !(g > 0.0) {
            return Err(Error::Rates(format!("Γ must be positive, got {g}")));
        }
        let (peak, flagged) = measure_peak(&exp.with_gamma(g), lo, hi, n, which)?;
        rows.push(HwhmRow {
            gamma_hz: g,
            hwhm_hz: peak.hwhm_hz(),
            center_hz: peak.center_hz(),
            mode,
            flagged,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.gamma_hz).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.hwhm_hz).collect();
    let (slope, residual) = fit_through_origin(&x, &y)?;
    Ok(HwhmTable { rows, slope, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lorentz(c: f64, w: f64, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|x| w * w / ((x - c).powi(2) + w * w)).collect()
    }

    #[test]
    fn lorentzian_recovered() {
        let xs = linspace(0.0, 10.0, 201);
        let ys = lorentz(4.3, 0.4, &xs);
        let peaks = find_peaks_xy(&xs, &ys, &PeakOptions::default());
        assert_eq!(peaks.len(), 1);
        let p = &peaks[0];
        assert!((p.center - 4.3).abs() < 0.05);
        assert!((p.hwhm - 0.4).abs() < 0.05 * 0.4);
        assert!(!p.partial);
    }

    #[test]
    fn monotone_has_no_peaks() {
        let xs = linspace(1.0, 2.0, 50);
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!(find_peaks_xy(&xs, &ys, &PeakOptions::default()).is_empty());
    }

    #[test]
    fn edge_peak_is_partial() {
        let xs = linspace(0.0, 10.0, 101);
        let ys = lorentz(9.5, 1.0, &xs);
        let p = find_peaks_xy(&xs, &ys, &PeakOptions::default());
        assert_eq!(p.len(), 1);
        assert!(p[0].partial);
    }

    #[test]
    fn small_wiggles_are_ignored() {
        let xs = linspace(0.0, 10.0, 401);
        let ys: Vec<f64> = lorentz(5.0, 0.3, &xs)
            .iter()
            .zip(&xs)
            .map(|(y, x)| y + 1e-3 * (40.0 * x).sin())
            .collect();
        assert_eq!(find_peaks_xy(&xs, &ys, &PeakOptions::default()).len(), 1);
    }

    #[test]
    fn parabola_vertex() {
        let (x, y) = parabola(1.0, 2.0, 3.0, 3.0, 4.0, 1.0);
        // y = −2x² + 7x − 2: vertex at 1.75, value 4.125
        assert!((x - 1.75).abs() < 1e-12);
        assert!((y - 4.125).abs() < 1e-12);
    }

    #[test]
    fn through_origin_fit() {
        let (s, r) = fit_through_origin(&[1.0, 2.0, 4.0], &[2.0, 4.0, 8.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-15 && r < 1e-15);
        assert!(fit_through_origin(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn calibration_arithmetic() {
        let g = calibrate_gamma_eff(2.0 * PI * 33.2e3, 27e-6, 0.175);
        assert!((g / (2.0 * PI) / 1e9 - 7.026).abs() < 1e-3);
        assert!((calibrate_gamma_eff(5.0 * 2.0, 2.0, 1.0) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn set_matching() {
        let ratios = [0.259, 0.175, 0.126, 0.099];
        let gamma = 2.0 * PI * 7.0e9;
        let (k, r) = match_set_member(0.176 * gamma * 27e-6, gamma, 27e-6, &ratios, 0.1).unwrap();
        assert_eq!((k, r), (1, 0.175));
        assert!(match_set_member(0.5 * gamma * 27e-6, gamma, 27e-6, &ratios, 0.1).is_err());
    }

    #[test]
    fn merge_keeps_order() {
        let pt = |w: f64| SpectrumPoint { omega: w, c1: 0.0, c2: 0.0, a1: 0.0, absorption: 0.0, converged: true };
        let mut a = SweepSpectrum { points: vec![pt(1.0), pt(3.0)], params: serde_json::Value::Null };
        a.merge(SweepSpectrum { points: vec![pt(2.0), pt(3.0)], params: serde_json::Value::Null });
        let w: Vec<f64> = a.points.iter().map(|p| p.omega).collect();
        assert_eq!(w, vec![1.0, 2.0, 3.0]);
    }
}
