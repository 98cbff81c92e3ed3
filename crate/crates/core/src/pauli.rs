//! Free spin-1/2 in the dual-harmonic field: one-period propagator, the
//! discrete frequency set 𝒜 where every initial spinor returns to itself,
//! and period-averaged spin components.
//!
//! Internally time is τ = γB₀t and frequency r = Ω/(γB₀), so that
//! i dφ/dτ = ½(σ·b(τ))φ with b = (cos 2r(τ−τ₀)·l_x + cos r(τ−τ₀)·l_z) + b_y l_y.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2, Vector3};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deviation below which a monodromy counts as ±𝟙.
pub const TOL_A: f64 = 1e-6;
/// Largest dimensionless step (dt ≤ 0.01/(γB₀)).
const MAX_DTAU: f64 = 0.01;
/// Minimum steps per drive period.
const MIN_STEPS: usize = 4096;
/// Steps between polar re-projections.
const PROJECT_EVERY: usize = 256;
/// Unitarity drift tolerated between re-projections.
const UNITARITY_LIMIT: f64 = 1e-8;

type M2 = Matrix2<C64>;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn pauli() -> [M2; 3] {
    let i = C64::new(0.0, 1.0);
    [
        M2::new(c(0.0), c(1.0), c(1.0), c(0.0)),
        M2::new(c(0.0), -i, i, c(0.0)),
        M2::new(c(1.0), c(0.0), c(0.0), c(-1.0)),
    ]
}

/// Dimensionless field b(τ) seen by the spin.
#[derive(Clone, Debug, PartialEq)]
pub enum PauliField {
    /// Dual-harmonic drive at ratio r with phase origin τ₀ = 0 and an
    /// optional static y component (in units of B₀).
    Drive { r: f64, b_y: f64 },
    /// Constant field (in units of B₀).
    Static(Vector3<f64>),
}

impl PauliField {
    pub fn drive(r: f64) -> Self {
        PauliField::Drive { r, b_y: 0.0 }
    }

    pub fn at(&self, tau: f64) -> Vector3<f64> {
        match self {
            PauliField::Drive { r, b_y } => Vector3::new((2.0 * r * tau).cos(), *b_y, (r * tau).cos()),
            PauliField::Static(b) => *b,
        }
    }

    /// −(i/2)σ·b, the generator of dU/dτ.
    fn generator(&self, tau: f64) -> M2 {
        let b = self.at(tau);
        let s = pauli();
        (s[0] * c(b.x) + s[1] * c(b.y) + s[2] * c(b.z)) * C64::new(0.0, -0.5)
    }
}

/// Nearest unitary (polar factor) of a 2×2 matrix.
fn polar(u: &M2) -> M2 {
    let svd = u.svd(true, true);
    svd.u.unwrap() * svd.v_t.unwrap()
}

fn unitarity_error(u: &M2) -> f64 {
    (u.adjoint() * u - M2::identity()).norm()
}

/// Propagator from τ_start over `duration` with `steps` RK4 steps. Calls
/// `visit(k, τ, U)` at every grid point k = 0..=steps.
fn propagate(
    field: &PauliField,
    tau_start: f64,
    duration: f64,
    steps: usize,
    mut visit: impl FnMut(usize, f64, &M2),
) -> Result<M2> {
    let h = duration / steps as f64;
    let mut u = M2::identity();
    visit(0, tau_start, &u);
    for k in 0..steps {
        let t = tau_start + k as f64 * h;
        let a1 = field.generator(t);
        let a2 = field.generator(t + 0.5 * h);
        let a4 = field.generator(t + h);
        let k1 = a1 * u;
        let k2 = a2 * (u + k1 * c(0.5 * h));
        let k3 = a2 * (u + k2 * c(0.5 * h));
        let k4 = a4 * (u + k3 * c(h));
        u += (k1 + (k2 + k3) * c(2.0) + k4) * c(h / 6.0);
        if (k + 1) % PROJECT_EVERY == 0 || k + 1 == steps {
            let drift = unitarity_error(&u);
            if drift > UNITARITY_LIMIT {
                return Err(Error::UnitarityDrift { drift });
            }
            u = polar(&u);
        }
        visit(k + 1, t + h, &u);
    }
    Ok(u)
}

fn steps_for(duration: f64, period: f64) -> usize {
    let by_period = (MIN_STEPS as f64 * duration / period).ceil() as usize;
    let by_field = (duration / MAX_DTAU).ceil() as usize;
    by_period.max(by_field).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    PlusIdentity,
    MinusIdentity,
    None,
}

#[derive(Clone, Debug)]
pub struct MonodromyResult {
    /// Drive angular frequency, rad/s.
    pub omega: f64,
    pub ratio: f64,
    pub u: M2,
    /// d = 2 − |Tr U|.
    pub deviation: f64,
    pub classification: Classification,
}

fn classify(u: &M2) -> (f64, Classification) {
    let tr = u.trace();
    let deviation = (2.0 - tr.norm()).max(0.0);
    let class = if deviation < TOL_A {
        if tr.re > 0.0 {
            Classification::PlusIdentity
        } else {
            Classification::MinusIdentity
        }
    } else {
        Classification::None
    };
    (deviation, class)
}

/// One-period propagator of the dimensionless problem starting at drive
/// phase `phase` = Ω t₀.
pub fn monodromy_ratio(r: f64, phase: f64, b_y: f64) -> Result<(M2, f64, Classification)> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Precondition(format!("ratio must be positive, got {r}")));
    }
    let period = 2.0 * PI / r;
    let field = PauliField::Drive { r, b_y };
    let u = propagate(&field, phase / r, period, steps_for(period, period), |_, _, _| {})?;
    let (d, class) = classify(&u);
    Ok((u, d, class))
}

/// One-period propagator for drive frequency `omega` (rad/s), amplitude
/// `b0` (T), gyromagnetic ratio `gamma` (rad/(s·T)) and start time `t0` (s).
pub fn monodromy(omega: f64, b0: f64, gamma: f64, t0: f64) -> Result<MonodromyResult> {
    if !(omega > 0.0) {
        return Err(Error::Precondition(format!("omega must be positive, got {omega}")));
    }
    let scale = gamma * b0;
    if scale == 0.0 {
        return Ok(MonodromyResult {
            omega,
            ratio: f64::INFINITY,
            u: M2::identity(),
            deviation: 0.0,
            classification: Classification::PlusIdentity,
        });
    }
    let r = omega / scale.abs();
    let (u, deviation, classification) = monodromy_ratio(r, omega * t0, 0.0)?;
    Ok(MonodromyResult {
        omega,
        ratio: r,
        u,
        deviation,
        classification,
    })
}

/// Propagator of a constant field `b` (T) for `duration` (s).
pub fn static_propagator(b: Vector3<f64>, gamma: f64, duration: f64) -> Result<M2> {
    let norm = b.norm();
    if norm == 0.0 {
        return Ok(M2::identity());
    }
    let tau = gamma * norm * duration;
    let field = PauliField::Static(b / norm);
    let steps = (tau / MAX_DTAU).ceil().max(1.0) as usize;
    propagate(&field, 0.0, tau, steps, |_, _, _| {})
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// Spinor with ⟨σ/2⟩ = l_axis/2.
    pub fn stretched(self) -> Vector2<C64> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Axis::X => Vector2::new(c(h), c(h)),
            Axis::Y => Vector2::new(c(h), C64::new(0.0, h)),
            Axis::Z => Vector2::new(c(1.0), c(0.0)),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

fn spin_of(phi: &Vector2<C64>) -> Vector3<f64> {
    let s = pauli();
    Vector3::from_fn(|a, _| (phi.adjoint() * s[a] * phi)[(0, 0)].re * 0.5)
}

/// Period average of ⟨σ/2⟩ starting from the state stretched along
/// `initial`, for ratio r and drive phase `phase` at creation.
pub fn averaged_spin_with(r: f64, initial: Axis, phase: f64, b_y: f64) -> Result<Vector3<f64>> {
    let period = 2.0 * PI / r;
    let steps = steps_for(period, period);
    let phi0 = initial.stretched();
    let mut sum = Vector3::zeros();
    let mut norm_err = 0.0f64;
    let field = PauliField::Drive { r, b_y };
    propagate(&field, phase / r, period, steps, |k, _, u| {
        let s = spin_of(&(u * phi0));
        norm_err = norm_err.max((s.norm() - 0.5).abs());
        if k < steps {
            sum += s;
        }
    })?;
    if norm_err > 1e-8 {
        return Err(Error::UnitarityDrift { drift: norm_err });
    }
    // periodic trapezoid: the endpoint equals the start for r ∈ 𝒜
    Ok(sum / steps as f64)
}

/// Table II entry: average spin for r ∈ 𝒜. Refuses ratios whose monodromy
/// is not ±𝟙.
pub fn averaged_spin(r: f64, initial: Axis, phase: f64) -> Result<Vector3<f64>> {
    let (_, d, _) = monodromy_ratio(r, phase, 0.0)?;
    if d >= TOL_A {
        return Err(Error::NotPeriodic { ratio: r, deviation: d });
    }
    averaged_spin_with(r, initial, phase, 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedSpins {
    pub x: [f64; 3],
    pub y: [f64; 3],
    pub z: [f64; 3],
}

impl AveragedSpins {
    pub fn get(&self, axis: Axis) -> &[f64; 3] {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetMember {
    pub r: f64,
    pub classification: Classification,
    pub deviation: f64,
    pub averaged: AveragedSpins,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetAReport {
    pub r_lo: f64,
    pub r_hi: f64,
    /// Drive phase Ω t₀ at spin creation, rad.
    pub phase: f64,
    pub b_y: f64,
    /// Members in descending r.
    pub members: Vec<SetMember>,
    /// Scan grid (r, d).
    #[serde(skip)]
    pub curve: Vec<(f64, f64)>,
}

impl SetAReport {
    pub fn frequencies(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.r).collect()
    }

    pub fn deviation_csv(&self) -> String {
        let mut out = String::from("r,d\n");
        for (r, d) in &self.curve {
            out.push_str(&format!("{r},{d}\n"));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanOptions {
    pub n_scan: usize,
    pub phase: f64,
    pub b_y: f64,
    /// Final bracket width in r.
    pub r_tol: f64,
    /// Local minima with d above this are not refined.
    pub bracket_max: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            n_scan: 1200,
            phase: 0.0,
            b_y: 0.0,
            r_tol: 1e-9,
            bracket_max: 0.5,
        }
    }
}

fn golden_min(f: &impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while (b - a).abs() > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

/// Scans d(r) on a uniform grid over [r_lo, r_hi], refines each local
/// minimum below `bracket_max` by golden-section search and keeps those
/// with d < [`TOL_A`].
pub fn scan_set_a(r_lo: f64, r_hi: f64, opts: &ScanOptions) -> Result<SetAReport> {
    if !(r_lo > 0.0 && r_hi > r_lo && opts.n_scan >= 3) {
        return Err(Error::Precondition(format!(
            "need 0 < r_lo < r_hi and n_scan ≥ 3, got [{r_lo}, {r_hi}] with {}",
            opts.n_scan
        )));
    }
    let dev = |r: f64| monodromy_ratio(r, opts.phase, opts.b_y).map(|(_, d, _)| d);
    let grid: Vec<f64> = (0..opts.n_scan)
        .map(|k| r_lo + (r_hi - r_lo) * k as f64 / (opts.n_scan - 1) as f64)
        .collect();
    let curve = grid.iter().map(|&r| dev(r).map(|d| (r, d))).collect::<Result<Vec<_>>>()?;

    let mut members = Vec::new();
    for k in 1..curve.len() - 1 {
        let (d_prev, d, d_next) = (curve[k - 1].1, curve[k].1, curve[k + 1].1);
        if !(d <= d_prev && d < d_next && d < opts.bracket_max) {
            continue;
        }
        let (r, d_min) = golden_min(&dev, curve[k - 1].0, curve[k + 1].0, opts.r_tol)?;
        if d_min >= TOL_A {
            continue;
        }
        let (_, _, classification) = monodromy_ratio(r, opts.phase, opts.b_y)?;
        let spin = |axis| averaged_spin_with(r, axis, opts.phase, opts.b_y).map(|v| [v.x, v.y, v.z]);
        members.push(SetMember {
            r,
            classification,
            deviation: d_min,
            averaged: AveragedSpins {
                x: spin(Axis::X)?,
                y: spin(Axis::Y)?,
                z: spin(Axis::Z)?,
            },
        });
    }
    members.sort_by(|a, b| b.r.total_cmp(&a.r));
    Ok(SetAReport {
        r_lo,
        r_hi,
        phase: opts.phase,
        b_y: opts.b_y,
        members,
        curve,
    })
}

/// True when every entry that the XZ-plane symmetry forces to zero is
/// below 1e−6: the y component for x and z initial states, and the x and
/// z components for the y initial state.
pub fn structural_zero_audit(report: &SetAReport) -> Result<bool> {
    if report.members.is_empty() {
        return Err(Error::Precondition("structural zero audit needs a nonempty report".into()));
    }
    Ok(report.members.iter().all(|m| {
        let a = &m.averaged;
        [a.x[1], a.z[1], a.y[0], a.y[2]].iter().all(|v| v.abs() < 1e-6)
    }))
}

/// Largest |averaged − reference| over all cells of the members matched
/// (by nearest r) to `reference` rows of (r, averaged spins).
pub fn table_deviation(report: &SetAReport, reference: &[(f64, AveragedSpins)]) -> Result<f64> {
    let mut worst = 0.0f64;
    for (r_ref, cells) in reference {
        let m = report
            .members
            .iter()
            .min_by(|a, b| (a.r - r_ref).abs().total_cmp(&(b.r - r_ref).abs()))
            .ok_or(Error::NoSetMatch(*r_ref))?;
        for axis in Axis::ALL {
            for (got, want) in m.averaged.get(axis).iter().zip(cells.get(axis)) {
                worst = worst.max((got - want).abs());
            }
        }
    }
    Ok(worst)
}
