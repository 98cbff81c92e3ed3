use num_complex::Complex64 as C64;

use super::hamiltonian::HamiltonianModel;
use super::mappings::{mapping_d, mapping_m, mapping_r};
use super::{RelaxationRates, VelocityEnsembleState};
use crate::atom::{equilibrium_state, ground_block, AtomSystem, Block, Op, GROUND_DIM};
use crate::error::{Error, Result};
use crate::field::{DriveConfig, PumpConfig};

const MINUS_I: C64 = C64 { re: 0.0, im: -1.0 };

/// −i[H, ρ] for Hermitian H and ρ, using ρH = (Hρ)†.
#[inline]
fn commutator_term<const N: usize>(
    h: &nalgebra::SMatrix<C64, N, N>,
    rho: &nalgebra::SMatrix<C64, N, N>,
) -> nalgebra::SMatrix<C64, N, N> {
    let a = h * rho;
    (a - a.adjoint()) * MINUS_I
}

/// Ground local indices belong to F=1 (0..3) or F=2 (3..8).
#[inline]
pub(crate) fn same_hyperfine(a: usize, b: usize) -> bool {
    (a < 3) == (b < 3)
}

/// Everything the per-node right-hand side needs, assembled once.
#[derive(Clone, Debug)]
pub struct Generator<'a> {
    pub sys: &'a AtomSystem,
    pub drive: DriveConfig,
    pub pump: PumpConfig,
    pub rates: RelaxationRates,
    pub ham: HamiltonianModel,
    rho0: Op,
}

impl<'a> Generator<'a> {
    pub fn new(sys: &'a AtomSystem, drive: &DriveConfig, pump: &PumpConfig, rates: &RelaxationRates) -> Self {
        Self {
            sys,
            drive: drive.clone(),
            pump: pump.clone(),
            rates: rates.clone(),
            ham: HamiltonianModel::new(sys, pump),
            rho0: equilibrium_state(sys),
        }
    }

    /// Full-tier derivative of one velocity group, without the velocity
    /// mixing term. Input must be Hermitian.
    pub fn local_full(&self, t: f64, v_z: f64, rho: &Op) -> Op {
        let h = self.ham.at(&self.drive.field_at(t), v_z);
        let r = &self.rates;
        commutator_term(&h, rho)
            - (rho - self.rho0) * C64::new(r.gamma, 0.0)
            - mapping_r(rho, self.sys) * C64::new(r.delta_dcy, 0.0)
            - mapping_d(rho, self.sys) * C64::new(r.delta_dec, 0.0)
    }

    /// Lorentzian response 1/(δ_dec + i(ω_e − ω_g)) of each optical
    /// coherence at velocity `v_z` (excited row, ground column).
    pub fn optical_response(&self, v_z: f64) -> Block {
        Block::from_fn(|e, g| {
            let w = self.ham.level(GROUND_DIM + e, v_z) - self.ham.level(g, v_z);
            C64::new(1.0, 0.0) / C64::new(self.rates.delta_dec, w)
        })
    }

    /// V_E block ⟨e|V|g⟩ (excited rows, ground columns), rad/s.
    pub fn optical_block(&self) -> Block {
        self.ham.optical.fixed_view::<GROUND_DIM, GROUND_DIM>(GROUND_DIM, 0).into_owned()
    }

    /// Precondition for eliminating the optical coherences.
    pub fn check_reduced(&self) -> Result<()> {
        let rabi = 2.0 * self.ham.max_coupling();
        if rabi >= self.rates.delta_dec / 10.0 {
            return Err(Error::ReducedTier(format!(
                "Rabi frequency {rabi:e} rad/s is not below delta_dec/10 = {:e} s⁻¹",
                self.rates.delta_dec / 10.0
            )));
        }
        if self.rates.delta_dcy <= 0.0 || self.rates.delta_dec <= 0.0 {
            return Err(Error::ReducedTier("delta_dcy and delta_dec must be positive".into()));
        }
        Ok(())
    }

    /// Pump contribution to the ground block after adiabatic elimination of
    /// the optical coherences and the excited manifold: depletion and light
    /// shift plus nuclear-spin-preserving return of the quenched population.
    pub fn pump_ground(&self, v_z: f64, rho_g: &Block) -> Block {
        let v = self.optical_block();
        let lor = self.optical_response(v_z);
        let rho_eg = (v * rho_g).component_mul(&lor) * MINUS_I;
        let x = v.adjoint() * rho_eg;
        let depletion = (x - x.adjoint()) * MINUS_I;
        let y = v * rho_eg.adjoint();
        let source = (y - y.adjoint()) * MINUS_I;
        let excited = Block::from_fn(|a, b| {
            let w = self.ham.level(GROUND_DIM + a, v_z) - self.ham.level(GROUND_DIM + b, v_z);
            source[(a, b)] / C64::new(self.rates.delta_dcy, w)
        });
        depletion + self.sys.repopulation.apply(&excited) * C64::new(self.rates.delta_dcy, 0.0)
    }

    /// Reduced-tier derivative of one velocity group (ground block only,
    /// hyperfine coherences dropped), without the velocity mixing term.
    pub fn local_reduced(&self, t: f64, v_z: f64, rho: &Op) -> Op {
        let rho_g = ground_block(rho);
        let b = self.drive.field_at(t);
        let mut vb = Block::zeros();
        for a in 0..3 {
            if b[a] != 0.0 {
                vb += self.sys.zeeman[a].fixed_view::<GROUND_DIM, GROUND_DIM>(0, 0) * C64::new(b[a], 0.0);
            }
        }
        let mut d = commutator_term(&vb, &rho_g)
            - (rho_g - ground_block(&self.rho0)) * C64::new(self.rates.gamma, 0.0);
        if self.pump.e_amp != 0.0 {
            d += self.pump_ground(v_z, &rho_g);
        }
        let mut out = Op::zeros();
        for r in 0..GROUND_DIM {
            for c in 0..GROUND_DIM {
                if same_hyperfine(r, c) {
                    out[(r, c)] = d[(r, c)];
                }
            }
        }
        out
    }
}

fn add_mixing(state: &VelocityEnsembleState, delta_mix: f64, local: Vec<Op>) -> Vec<Op> {
    if delta_mix == 0.0 {
        return local;
    }
    let m = mapping_m(&state.nodes, &state.rho);
    local
        .into_iter()
        .zip(m)
        .map(|(l, m)| l - m * C64::new(delta_mix, 0.0))
        .collect()
}

/// dρ_i/dt for every velocity node in the full tier.
pub fn generator_full(
    state: &VelocityEnsembleState,
    rates: &RelaxationRates,
    drive: &DriveConfig,
    pump: &PumpConfig,
    sys: &AtomSystem,
) -> Vec<Op> {
    let gen = Generator::new(sys, drive, pump, rates);
    let local = state
        .nodes
        .iter()
        .zip(&state.rho)
        .map(|(n, r)| gen.local_full(state.t, n.v_z, r))
        .collect();
    add_mixing(state, rates.delta_mix, local)
}

/// dρ_i/dt for every velocity node in the reduced tier. Only the ground
/// block of each ρ_i is read or written.
pub fn generator_reduced(
    state: &VelocityEnsembleState,
    rates: &RelaxationRates,
    drive: &DriveConfig,
    pump: &PumpConfig,
    sys: &AtomSystem,
) -> Result<Vec<Op>> {
    let gen = Generator::new(sys, drive, pump, rates);
    gen.check_reduced()?;
    let local = state
        .nodes
        .iter()
        .zip(&state.rho)
        .map(|(n, r)| gen.local_reduced(state.t, n.v_z, r))
        .collect();
    let ground_only = VelocityEnsembleState {
        nodes: state.nodes.clone(),
        rho: state.rho.iter().map(project_ground).collect(),
        t: state.t,
    };
    Ok(add_mixing(&ground_only, rates.delta_mix, local))
}

/// Keep only the secular ground block (F=1 and F=2 diagonal blocks).
pub(crate) fn project_ground(rho: &Op) -> Op {
    let mut out = Op::zeros();
    for r in 0..GROUND_DIM {
        for c in 0..GROUND_DIM {
            if same_hyperfine(r, c) {
                out[(r, c)] = rho[(r, c)];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::build_atom_system;
    use crate::constants::{celsius_to_kelvin, AtomSpec};
    use crate::quadrature::maxwell_nodes;
    use crate::test_util::random_density;
    use std::f64::consts::PI;

    fn setup() -> (AtomSystem, DriveConfig, RelaxationRates) {
        let sys = build_atom_system(&AtomSpec::default()).unwrap();
        (sys, DriveConfig::dual_harmonic(27e-6, 2.0 * PI * 33.2e3), RelaxationRates::default())
    }

    fn ensemble(sys: &AtomSystem, seed: u64) -> VelocityEnsembleState {
        let u = sys.spec.thermal_speed(celsius_to_kelvin(80.0));
        let nodes = maxwell_nodes(4, u).unwrap();
        let rho = (0..4).map(|k| random_density(seed + k)).collect();
        VelocityEnsembleState { nodes, rho, t: 1.7e-6 }
    }

    #[test]
    fn equilibrium_is_fixed_point_with_pump_off() {
        let (sys, drive, rates) = setup();
        let u = sys.spec.thermal_speed(celsius_to_kelvin(80.0));
        let mut state = VelocityEnsembleState::equilibrium(&sys, maxwell_nodes(8, u).unwrap(), 0.0);
        let off = PumpConfig::new(0.0, 0.0);
        for t in [0.0, 3.3e-6, 1.1e-5] {
            state.t = t;
            for d in generator_full(&state, &rates, &drive, &off, &sys) {
                assert!(d.norm() < 1e-9, "{}", d.norm());
            }
            for d in generator_reduced(&state, &rates, &drive, &off, &sys).unwrap() {
                assert!(d.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn full_generator_is_traceless_and_hermitian() {
        let (sys, drive, rates) = setup();
        let pump = PumpConfig::new(100.0, 0.0);
        for seed in [1, 7, 19] {
            let state = ensemble(&sys, seed);
            for d in generator_full(&state, &rates, &drive, &pump, &sys) {
                let scale = d.norm();
                assert!(d.trace().norm() < 1e-12 * scale, "{} vs {}", d.trace().norm(), scale);
                assert!((d - d.adjoint()).norm() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn reduced_generator_is_traceless_and_hermitian() {
        let (sys, drive, rates) = setup();
        let pump = PumpConfig::new(100.0, 0.0);
        let mut state = ensemble(&sys, 3);
        // unit-trace secular ground states; unequal traces would make 𝓜 carry trace
        state.rho = state
            .rho
            .iter()
            .map(|r| {
                let g = project_ground(r);
                g / g.trace()
            })
            .collect();
        for d in generator_reduced(&state, &rates, &drive, &pump, &sys).unwrap() {
            let scale = d.norm();
            assert!(d.trace().norm() < 1e-12 * scale, "{} {}", d.trace(), scale);
            assert!((d - d.adjoint()).norm() < 1e-12 * scale);
        }
    }

    #[test]
    fn pump_off_tiers_agree_on_ground_dynamics() {
        let (sys, drive, rates) = setup();
        let off = PumpConfig::new(0.0, 0.0);
        let mut state = ensemble(&sys, 5);
        // restrict to a secular ground state so both tiers see the same input
        state.rho = state.rho.iter().map(project_ground).collect();
        let full = generator_full(&state, &rates, &drive, &off, &sys);
        let red = generator_reduced(&state, &rates, &drive, &off, &sys).unwrap();
        for (f, r) in full.iter().zip(&red) {
            // the full tier also rotates hyperfine coherences at 6.8 GHz, which
            // the secular ground state does not have
            let diff = project_ground(f) - r;
            assert!(diff.norm() < 1e-9 * f.norm(), "{}", diff.norm());
        }
    }

    #[test]
    fn large_detuning_switches_pump_off() {
        let (sys, drive, rates) = setup();
        let near = Generator::new(&sys, &drive, &PumpConfig::new(100.0, 0.0), &rates);
        let far = Generator::new(&sys, &drive, &PumpConfig::new(100.0, 2.0 * PI * 1e15), &rates);
        let rho = ground_block(&equilibrium_state(&sys));
        let a = near.pump_ground(0.0, &rho).norm();
        let b = far.pump_ground(0.0, &rho).norm();
        assert!(a > 0.0);
        assert!(b < 1e-10 * a, "{b} vs {a}");
    }

    #[test]
    fn reduced_refuses_strong_drive() {
        let (sys, drive, rates) = setup();
        let strong = PumpConfig::new(1e7, 0.0);
        let state = ensemble(&sys, 2);
        let err = generator_reduced(&state, &rates, &drive, &strong, &sys).unwrap_err();
        assert!(matches!(err, Error::ReducedTier(_)));
    }

    #[test]
    fn pump_depletes_f1_and_orients_f2() {
        let (sys, drive, rates) = setup();
        let gen = Generator::new(&sys, &drive, &PumpConfig::new(100.0, 0.0), &rates);
        let rho = ground_block(&equilibrium_state(&sys));
        let d = gen.pump_ground(0.0, &rho);
        let f1: f64 = (0..3).map(|i| d[(i, i)].re).sum();
        assert!(f1 < 0.0, "F=1 population must drop, got {f1}");
        // repopulation favours high m in F=2
        assert!(d[(7, 7)].re > d[(3, 3)].re);
        assert!(d.trace().norm() < 1e-12 * d.norm());
    }
}
