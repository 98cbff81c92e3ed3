//! Fixed-step integration of the velocity ensemble.
//!
//! Velocity mixing (−δ_mix 𝓜) is linear, node-coupling and by far the
//! fastest rate, so it is integrated exactly with an integrating factor
//! (Lawson RK4). Its exponential is e^{−δ_mix h 𝓜}: ρ_i ↦ ρ̄ + e^{−δ_mix h}(ρ_i − ρ̄).
//! With δ_mix = 0 the scheme is classical RK4.

use nalgebra::{SMatrix, Vector3};
use num_complex::Complex64 as C64;

use super::generator::{project_ground, Generator};
use super::reduced::{from_params, params_trace, to_params, Params, ReducedModel, PARAMS};
use super::{RelaxationRates, Tier, VelocityEnsembleState};
use crate::atom::{AtomSystem, Op};
use crate::error::{Error, Result};
use crate::field::{DriveConfig, PumpConfig};
use crate::observables::{spin_vectors, SpinPolarizationSample, StroboscopicRecord};

/// Trace change per step that aborts the run.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Largest Zeeman phase per step used to choose the default step count.
const PHASE_PER_STEP: f64 = 0.1;

trait Linear: Clone {
    fn axpy(&mut self, a: f64, x: &Self);
    fn scaled(&self, a: f64) -> Self;
}

impl<const R: usize, const C: usize> Linear for SMatrix<C64, R, C> {
    #[inline]
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += x * C64::new(a, 0.0);
    }
    #[inline]
    fn scaled(&self, a: f64) -> Self {
        self * C64::new(a, 0.0)
    }
}

impl Linear for Params {
    #[inline]
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += x * a;
    }
    #[inline]
    fn scaled(&self, a: f64) -> Self {
        self * a
    }
}

/// Applies e^{−δ_mix h 𝓜} in place.
fn mix<V: Linear>(y: &mut [V], weights: &[f64], decay: f64) {
    if decay == 1.0 || y.len() < 2 {
        return;
    }
    let mut mean = y[0].scaled(weights[0]);
    for (v, w) in y.iter().zip(weights).skip(1) {
        mean.axpy(*w, v);
    }
    for v in y.iter_mut() {
        *v = v.scaled(decay);
        v.axpy(1.0 - decay, &mean);
    }
}

fn mixed<V: Linear>(y: &[V], weights: &[f64], decay: f64) -> Vec<V> {
    let mut out = y.to_vec();
    mix(&mut out, weights, decay);
    out
}

/// One Lawson RK4 step of dy/dt = −δ_mix 𝓜 y + N(t, y).
fn lawson_rk4<V: Linear>(
    y: &mut Vec<V>,
    t: f64,
    h: f64,
    weights: &[f64],
    delta_mix: f64,
    rhs: &impl Fn(f64, &[V], &mut [V]),
) {
    let e_half = (-delta_mix * h * 0.5).exp();
    let e_full = (-delta_mix * h).exp();
    let mut k1 = y.clone();
    let mut k2 = y.clone();
    let mut k3 = y.clone();
    let mut k4 = y.clone();

    rhs(t, y, &mut k1);
    let mut stage: Vec<V> = y.iter().zip(&k1).map(|(a, k)| {
        let mut s = a.clone();
        s.axpy(0.5 * h, k);
        s
    }).collect();
    mix(&mut stage, weights, e_half);
    rhs(t + 0.5 * h, &stage, &mut k2);

    let y_half = mixed(y, weights, e_half);
    let mut stage: Vec<V> = y_half.iter().zip(&k2).map(|(a, k)| {
        let mut s = a.clone();
        s.axpy(0.5 * h, k);
        s
    }).collect();
    rhs(t + 0.5 * h, &stage, &mut k3);

    let y_full = mixed(y, weights, e_full);
    let k3_half = mixed(&k3, weights, e_half);
    for ((s, a), k) in stage.iter_mut().zip(&y_full).zip(&k3_half) {
        *s = a.clone();
        s.axpy(h, k);
    }
    rhs(t + h, &stage, &mut k4);

    let k1_full = mixed(&k1, weights, e_full);
    let mut k23 = k2;
    for (a, b) in k23.iter_mut().zip(&k3) {
        a.axpy(1.0, b);
    }
    let k23_half = mixed(&k23, weights, e_half);
    for (i, v) in y.iter_mut().enumerate() {
        *v = y_full[i].clone();
        v.axpy(h / 6.0, &k1_full[i]);
        v.axpy(h / 3.0, &k23_half[i]);
        v.axpy(h / 6.0, &k4[i]);
    }
}

/// Ensemble integrator for one configuration and tier.
#[derive(Clone, Debug)]
pub struct Stepper<'a> {
    pub tier: Tier,
    pub generator: Generator<'a>,
    reduced: Option<ReducedModel>,
    weights: Vec<f64>,
    v_z: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        sys: &'a AtomSystem,
        drive: &DriveConfig,
        pump: &PumpConfig,
        rates: &RelaxationRates,
        nodes: &[crate::quadrature::VelocityNode],
        tier: Tier,
    ) -> Result<Self> {
        rates.validate()?;
        drive.validate()?;
        pump.validate()?;
        let generator = Generator::new(sys, drive, pump, rates);
        let reduced = match tier {
            Tier::Full => None,
            Tier::Reduced => {
                generator.check_reduced()?;
                Some(ReducedModel::new(&generator, nodes))
            }
        };
        Ok(Self {
            tier,
            generator,
            reduced,
            weights: nodes.iter().map(|n| n.weight).collect(),
            v_z: nodes.iter().map(|n| n.v_z).collect(),
        })
    }

    /// Tier stability bound on dt, s.
    pub fn max_dt(&self) -> f64 {
        match &self.reduced {
            None => 0.1 / self.generator.rates.delta_dec,
            Some(model) => {
                let period = self.generator.drive.period();
                let slowest = if model.fastest_rate > 0.0 { 1.0 / model.fastest_rate } else { f64::INFINITY };
                0.01 * period.min(slowest)
            }
        }
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        let bound = self.max_dt();
        if !(dt > 0.0 && dt <= bound * (1.0 + 1e-12)) {
            return Err(Error::StepTooLarge {
                tier: self.tier.name(),
                dt,
                bound,
            });
        }
        Ok(())
    }

    /// Default steps per drive period: the tier bound, and for the reduced
    /// tier at most 0.1 rad of Zeeman phase per step, rounded up to a
    /// multiple of `samples`.
    pub fn default_steps_per_period(&self, samples: usize) -> usize {
        let period = self.generator.drive.period();
        let mut steps = (period / self.max_dt()).ceil();
        if self.reduced.is_some() {
            let sys = self.generator.sys;
            let gyro = sys.g_factors.iter().fold(0.0f64, |a, g| a.max(g.abs())) * sys.gamma_e;
            let larmor = gyro * self.generator.drive.max_field();
            steps = steps.max((period * larmor / PHASE_PER_STEP).ceil());
        }
        let samples = samples.max(1);
        (steps as usize).div_ceil(samples) * samples
    }

    fn step_full(&self, rho: &mut Vec<Op>, t: f64, dt: f64) {
        let gen = &self.generator;
        let v_z = &self.v_z;
        let rhs = |t: f64, y: &[Op], out: &mut [Op]| {
            for ((o, r), v) in out.iter_mut().zip(y).zip(v_z) {
                *o = gen.local_full(t, *v, r);
            }
        };
        lawson_rk4(rho, t, dt, &self.weights, gen.rates.delta_mix, &rhs);
        for r in rho.iter_mut() {
            *r = (*r + r.adjoint()) * C64::new(0.5, 0.0);
        }
    }

    fn step_params(&self, p: &mut Vec<Params>, t: f64, dt: f64) {
        let model = self.reduced.as_ref().expect("reduced tier");
        let drive = &self.generator.drive;
        let rhs = |t: f64, y: &[Params], out: &mut [Params]| {
            let b: Vector3<f64> = drive.field_at(t);
            model.derivative(&b, y, out);
        };
        lawson_rk4(p, t, dt, &self.weights, self.generator.rates.delta_mix, &rhs);
    }

    /// Advances `state` by `dt` with one RK4 step.
    pub fn step(&self, state: &mut VelocityEnsembleState, dt: f64) -> Result<()> {
        self.check_dt(dt)?;
        let before: Vec<f64> = state.rho.iter().map(|r| r.trace().re).collect();
        match self.tier {
            Tier::Full => self.step_full(&mut state.rho, state.t, dt),
            Tier::Reduced => {
                let mut p: Vec<Params> = state.rho.iter().map(to_params).collect();
                self.step_params(&mut p, state.t, dt);
                state.rho = p.iter().map(from_params).collect();
            }
        }
        state.t += dt;
        let drift = state
            .rho
            .iter()
            .zip(&before)
            .map(|(r, b)| (r.trace().re - b).abs())
            .fold(0.0, f64::max);
        if drift > TRACE_DRIFT_LIMIT {
            return Err(Error::TraceDrift { t: state.t, drift });
        }
        Ok(())
    }

    /// Velocity-averaged spin sample at time `t`.
    fn sample(&self, t: f64, avg: &Op) -> SpinPolarizationSample {
        let (s1, s2) = spin_vectors(avg, self.generator.sys);
        let b = self.generator.drive.field_at(t);
        SpinPolarizationSample { t, s1, s2, b }
    }
}

/// One step of `tier` from `state` (convenience wrapper).
pub fn step(
    state: &VelocityEnsembleState,
    dt: f64,
    tier: Tier,
    rates: &RelaxationRates,
    drive: &DriveConfig,
    pump: &PumpConfig,
    sys: &AtomSystem,
) -> Result<VelocityEnsembleState> {
    let stepper = Stepper::new(sys, drive, pump, rates, &state.nodes, tier)?;
    let mut next = state.clone();
    if tier == Tier::Reduced {
        next.rho = next.rho.iter().map(project_ground).collect();
    }
    stepper.step(&mut next, dt)?;
    Ok(next)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveOptions {
    /// None picks [`Stepper::default_steps_per_period`].
    pub steps_per_period: Option<usize>,
    pub samples_per_period: usize,
    /// Relative max-norm change between consecutive periods.
    pub tol: f64,
    /// None means ceil(20/(ΓT)).
    pub max_periods: Option<usize>,
    pub min_periods: usize,
    /// Start the reduced tier from its Floquet steady state.
    pub accelerate: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            steps_per_period: None,
            samples_per_period: 256,
            tol: 1e-6,
            max_periods: None,
            min_periods: 2,
            accelerate: true,
        }
    }
}

/// Spin trajectory distance between two periods, relative to the larger
/// polarization over the newer one.
/// Spin magnitude below which the inter-period change is judged absolutely.
const SCALE_FLOOR: f64 = 1e-9;

fn period_change(prev: &[SpinPolarizationSample], cur: &[SpinPolarizationSample]) -> (f64, f64) {
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (a, b) in prev.iter().zip(cur) {
        diff = diff.max((a.s1 - b.s1).amax()).max((a.s2 - b.s2).amax());
        scale = scale.max(b.s1.amax()).max(b.s2.amax());
    }
    (diff, scale)
}

/// Tier-specific ensemble storage for the period loop.
enum Ensemble {
    Full(Vec<Op>),
    Reduced(Vec<Params>),
}

impl Ensemble {
    fn traces(&self) -> Vec<f64> {
        match self {
            Ensemble::Full(r) => r.iter().map(|x| x.trace().re).collect(),
            Ensemble::Reduced(p) => p.iter().map(params_trace).collect(),
        }
    }
}

fn weighted_params(p: &[Params], weights: &[f64]) -> Params {
    p.iter().zip(weights).fold(Params::zeros(), |acc, (x, w)| acc + x * *w)
}

struct PeriodGrid {
    t0: f64,
    period: f64,
    steps: usize,
    stride: usize,
    dt: f64,
}

impl Stepper<'_> {
    fn average(&self, ens: &Ensemble) -> Op {
        match ens {
            Ensemble::Full(r) => r
                .iter()
                .zip(&self.weights)
                .fold(Op::zeros(), |acc, (x, w)| acc + x * C64::new(*w, 0.0)),
            Ensemble::Reduced(p) => from_params(&weighted_params(p, &self.weights)),
        }
    }

    /// Integrates period number `k` of `grid`, optionally sampling.
    fn run_period(
        &self,
        ens: &mut Ensemble,
        grid: &PeriodGrid,
        k: usize,
        mut samples: Option<&mut Vec<SpinPolarizationSample>>,
        check_trace: bool,
    ) -> Result<()> {
        for n in 0..grid.steps {
            let t = grid.t0 + k as f64 * grid.period + n as f64 * grid.dt;
            if let Some(out) = samples.as_deref_mut() {
                if n % grid.stride == 0 {
                    out.push(self.sample(t, &self.average(ens)));
                }
            }
            if !check_trace {
                match ens {
                    Ensemble::Full(r) => self.step_full(r, t, grid.dt),
                    Ensemble::Reduced(p) => self.step_params(p, t, grid.dt),
                }
                continue;
            }
            let before = ens.traces();
            match ens {
                Ensemble::Full(r) => self.step_full(r, t, grid.dt),
                Ensemble::Reduced(p) => self.step_params(p, t, grid.dt),
            }
            let drift = ens
                .traces()
                .iter()
                .zip(&before)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if drift > TRACE_DRIFT_LIMIT {
                return Err(Error::TraceDrift { t: t + grid.dt, drift });
            }
        }
        Ok(())
    }

    /// Periodic steady state of the velocity-averaged reduced state, found
    /// from the one-period affine map p̄ ↦ Φp̄ + φ with all nodes started
    /// equal. Φ is built from 35 one-period runs; the result is polished by
    /// Newton steps that reuse Φ. Returns the node states after the last
    /// polishing period.
    fn floquet_start(&self, grid: &PeriodGrid, tol: f64) -> Result<Vec<Params>> {
        let n = self.weights.len();
        let propagate = |p: Params| -> Result<Vec<Params>> {
            // basis states are not unit-trace, so Γ legitimately moves their trace
            let mut ens = Ensemble::Reduced(vec![p; n]);
            self.run_period(&mut ens, grid, 0, None, false)?;
            match ens {
                Ensemble::Reduced(v) => Ok(v),
                Ensemble::Full(_) => unreachable!(),
            }
        };
        let phi = weighted_params(&propagate(Params::zeros())?, &self.weights);
        let mut jac = nalgebra::SMatrix::<f64, PARAMS, PARAMS>::zeros();
        for k in 0..PARAMS {
            let out = weighted_params(&propagate(Params::from_fn(|i, _| if i == k { 1.0 } else { 0.0 }))?, &self.weights);
            jac.set_column(k, &(out - phi));
        }
        let lu = (nalgebra::SMatrix::<f64, PARAMS, PARAMS>::identity() - jac).lu();
        let mut p = lu
            .solve(&phi)
            .ok_or_else(|| Error::Precondition("one-period map has an eigenvalue at 1".into()))?;
        let mut nodes = propagate(p)?;
        for _ in 0..8 {
            let q = weighted_params(&nodes, &self.weights);
            let r = q - p;
            if r.amax() <= 1e-3 * tol * q.amax().max(1e-12) {
                break;
            }
            p += lu.solve(&r).unwrap_or(r);
            nodes = propagate(p)?;
        }
        Ok(nodes)
    }
}

/// Integrates from `initial` period by period until the sampled spin
/// trajectory repeats, and returns the last period.
///
/// With `accelerate` (reduced tier only) the loop starts from the Floquet
/// steady state instead of ρ₀; the stopping rule is unchanged.
pub fn evolve_to_steady(stepper: &Stepper<'_>, initial: &VelocityEnsembleState, opts: &EvolveOptions) -> Result<StroboscopicRecord> {
    let samples = opts.samples_per_period.max(1);
    let steps = opts.steps_per_period.unwrap_or_else(|| stepper.default_steps_per_period(samples));
    if !steps.is_multiple_of(samples) {
        return Err(Error::Precondition(format!(
            "steps per period ({steps}) must be a multiple of samples per period ({samples})"
        )));
    }
    let period = stepper.generator.drive.period();
    let dt = period / steps as f64;
    stepper.check_dt(dt)?;
    let grid = PeriodGrid {
        t0: initial.t,
        period,
        steps,
        stride: steps / samples,
        dt,
    };
    let gamma = stepper.generator.rates.gamma;
    let max_periods = opts
        .max_periods
        .unwrap_or_else(|| (20.0 / (gamma * period)).ceil() as usize)
        .max(opts.min_periods);

    let mut ens = match stepper.tier {
        Tier::Full => Ensemble::Full(initial.rho.clone()),
        Tier::Reduced if opts.accelerate => Ensemble::Reduced(stepper.floquet_start(&grid, opts.tol)?),
        Tier::Reduced => Ensemble::Reduced(initial.rho.iter().map(|r| to_params(&project_ground(r))).collect()),
    };

    let mut prev: Option<Vec<SpinPolarizationSample>> = None;
    let mut converged = false;
    let mut periods = 0;
    let mut last = Vec::new();
    while periods < max_periods {
        let mut cur = Vec::with_capacity(samples);
        stepper.run_period(&mut ens, &grid, periods, Some(&mut cur), true)?;
        periods += 1;
        if let Some(p) = &prev {
            let (diff, scale) = period_change(p, &cur);
            if periods >= opts.min_periods && diff <= opts.tol * scale.max(SCALE_FLOOR) {
                converged = true;
                last = cur;
                break;
            }
        }
        prev = Some(cur.clone());
        last = cur;
    }
    Ok(StroboscopicRecord {
        samples: last,
        converged,
        periods,
        omega: stepper.generator.drive.omega,
        steps_per_period: steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::{build_atom_system, equilibrium_state};
    use crate::constants::AtomSpec;
    use crate::quadrature::{maxwell_nodes, VelocityNode};
    use std::f64::consts::PI;

    fn sys() -> AtomSystem {
        build_atom_system(&AtomSpec::default()).unwrap()
    }

    #[test]
    fn mixing_exponential_matches_closed_form() {
        let w = [0.25, 0.75];
        let mut y = vec![Params::from_element(1.0), Params::from_element(3.0)];
        mix(&mut y, &w, 0.5);
        // mean 2.5; 2.5 + 0.5(1 − 2.5) = 1.75
        assert!((y[0][0] - 1.75).abs() < 1e-15);
        assert!((y[1][0] - 2.75).abs() < 1e-15);
    }

    #[test]
    fn lawson_reduces_to_exact_mixing_for_zero_rhs() {
        let w = [0.5, 0.5];
        let mut y = vec![Params::from_element(0.0), Params::from_element(2.0)];
        let rhs = |_t: f64, _y: &[Params], out: &mut [Params]| out.iter_mut().for_each(|o| o.fill(0.0));
        lawson_rk4(&mut y, 0.0, 1e-3, &w, 1e3, &rhs);
        let expect = 1.0 - (-1.0f64).exp();
        assert!((y[0][0] - expect).abs() < 1e-14);
    }

    #[test]
    fn rk4_order_on_scalar_ode() {
        // y' = cos(t)·y, y(0) = 1 → y = e^{sin t}
        let solve = |n: usize| {
            let mut y = vec![Params::from_element(1.0)];
            let h = 1.0 / n as f64;
            let rhs = |t: f64, y: &[Params], out: &mut [Params]| out[0] = y[0] * t.cos();
            for k in 0..n {
                lawson_rk4(&mut y, k as f64 * h, h, &[1.0], 0.0, &rhs);
            }
            (y[0][0] - 1f64.sin().exp()).abs()
        };
        let ratio = solve(20) / solve(40);
        assert!((12.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn zero_generator_leaves_state() {
        let s = sys();
        let drive = DriveConfig::dual_harmonic(27e-6, 2.0 * PI * 33.2e3);
        let pump = PumpConfig::new(0.0, 0.0);
        let nodes = vec![VelocityNode { v_z: 0.0, weight: 1.0 }];
        let stepper = Stepper::new(&s, &drive, &pump, &RelaxationRates::default(), &nodes, Tier::Reduced).unwrap();
        let mut st = VelocityEnsembleState::equilibrium(&s, nodes, 0.0);
        for _ in 0..100 {
            stepper.step(&mut st, stepper.max_dt()).unwrap();
        }
        assert!((st.rho[0] - equilibrium_state(&s)).norm() < 1e-14);
    }

    #[test]
    fn step_bound_enforced() {
        let s = sys();
        let drive = DriveConfig::dual_harmonic(27e-6, 2.0 * PI * 33.2e3);
        let pump = PumpConfig::new(100.0, 0.0);
        let nodes = maxwell_nodes(2, 260.0).unwrap();
        let stepper = Stepper::new(&s, &drive, &pump, &RelaxationRates::default(), &nodes, Tier::Full).unwrap();
        let mut st = VelocityEnsembleState::equilibrium(&s, nodes, 0.0);
        assert!(matches!(stepper.step(&mut st, 1e-9), Err(Error::StepTooLarge { .. })));
        assert!(stepper.step(&mut st, 1e-11).is_ok());
    }

    #[test]
    fn pump_off_converges_to_zero() {
        let s = sys();
        let drive = DriveConfig::dual_harmonic(27e-6, 2.0 * PI * 33.2e3);
        let pump = PumpConfig::new(0.0, 0.0);
        let nodes = maxwell_nodes(2, 260.0).unwrap();
        let stepper = Stepper::new(&s, &drive, &pump, &RelaxationRates::default(), &nodes, Tier::Reduced).unwrap();
        let init = VelocityEnsembleState::equilibrium(&s, nodes, 0.0);
        let rec = evolve_to_steady(&stepper, &init, &EvolveOptions::default()).unwrap();
        assert!(rec.converged);
        assert_eq!(rec.samples.len(), 256);
        assert!(rec.samples.iter().all(|x| x.s2.norm() < 1e-14));
    }
}
