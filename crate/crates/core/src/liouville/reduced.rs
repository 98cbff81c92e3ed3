//! Reduced-tier generator as a real superoperator.
//!
//! The secular ground state (F=1 and F=2 diagonal blocks, Hermitian) has
//! 3² + 5² = 34 real parameters. Because the reduced generator is affine in
//! ρ and linear in B(t), it is stored as per-node matrices A_i, three Zeeman
//! matrices Z_α and a constant c:
//!     dp_i/dt = (A_i + Σ_α B_α(t) Z_α) p_i + c.
//! The matrices are built by applying [`Generator::local_reduced`] to a basis,
//! so the two forms agree to rounding.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64 as C64;

use super::generator::Generator;
use crate::atom::{equilibrium_state, Op};
use crate::quadrature::VelocityNode;

pub const PARAMS: usize = 34;
pub type Params = SVector<f64, PARAMS>;
pub type SuperOp = SMatrix<f64, PARAMS, PARAMS>;

#[derive(Clone, Copy, Debug)]
enum Slot {
    Diag(usize),
    Re(usize, usize),
    Im(usize, usize),
}

fn slots() -> Vec<Slot> {
    let mut out = Vec::with_capacity(PARAMS);
    for range in [0..3usize, 3..8] {
        for r in range.clone() {
            out.push(Slot::Diag(r));
            for c in r + 1..range.end {
                out.push(Slot::Re(r, c));
                out.push(Slot::Im(r, c));
            }
        }
    }
    debug_assert_eq!(out.len(), PARAMS);
    out
}

/// Parameters of the secular ground block of ρ.
pub fn to_params(rho: &Op) -> Params {
    let s = slots();
    Params::from_fn(|k, _| match s[k] {
        Slot::Diag(r) => rho[(r, r)].re,
        Slot::Re(r, c) => rho[(r, c)].re,
        Slot::Im(r, c) => rho[(r, c)].im,
    })
}

pub fn from_params(p: &Params) -> Op {
    let mut rho = Op::zeros();
    for (k, slot) in slots().into_iter().enumerate() {
        match slot {
            Slot::Diag(r) => rho[(r, r)] = C64::new(p[k], 0.0),
            Slot::Re(r, c) => {
                rho[(r, c)].re = p[k];
                rho[(c, r)].re = p[k];
            }
            Slot::Im(r, c) => {
                rho[(r, c)].im = p[k];
                rho[(c, r)].im = -p[k];
            }
        }
    }
    rho
}

/// Trace of the ground block from its parameters.
pub fn params_trace(p: &Params) -> f64 {
    slots()
        .iter()
        .enumerate()
        .filter_map(|(k, s)| matches!(s, Slot::Diag(_)).then_some(p[k]))
        .sum()
}

fn basis_op(slot: Slot) -> Op {
    let mut e = Op::zeros();
    match slot {
        Slot::Diag(r) => e[(r, r)] = C64::new(1.0, 0.0),
        Slot::Re(r, c) => {
            e[(r, c)] = C64::new(1.0, 0.0);
            e[(c, r)] = C64::new(1.0, 0.0);
        }
        Slot::Im(r, c) => {
            e[(r, c)] = C64::new(0.0, 1.0);
            e[(c, r)] = C64::new(0.0, -1.0);
        }
    }
    e
}

#[derive(Clone, Debug)]
pub struct ReducedModel {
    pub nodes: Vec<VelocityNode>,
    pub per_node: Vec<SuperOp>,
    pub zeeman: [SuperOp; 3],
    pub constant: Params,
    /// Largest decay rate on the diagonal of any A_i, s⁻¹.
    pub fastest_rate: f64,
}

impl ReducedModel {
    pub fn new(gen: &Generator<'_>, nodes: &[VelocityNode]) -> Self {
        let basis: Vec<Op> = slots().into_iter().map(basis_op).collect();
        let gamma = gen.rates.gamma;
        let pump_on = gen.pump.e_amp != 0.0;

        let per_node: Vec<SuperOp> = nodes
            .iter()
            .map(|n| {
                let mut a = SuperOp::identity() * (-gamma);
                if pump_on {
                    for (k, e) in basis.iter().enumerate() {
                        let g = crate::atom::ground_block(e);
                        let d = gen.pump_ground(n.v_z, &g);
                        let mut full = Op::zeros();
                        full.fixed_view_mut::<8, 8>(0, 0).copy_from(&d);
                        a.set_column(k, &(a.column(k) + to_params(&full)));
                    }
                }
                a
            })
            .collect();

        let zeeman = std::array::from_fn(|axis| {
            let vb = gen.sys.zeeman[axis];
            let mut z = SuperOp::zeros();
            for (k, e) in basis.iter().enumerate() {
                let a = vb * e;
                let comm = (a - a.adjoint()) * C64::new(0.0, -1.0);
                z.set_column(k, &to_params(&comm));
            }
            z
        });

        let constant = to_params(&equilibrium_state(gen.sys)) * gamma;
        let fastest_rate = per_node
            .iter()
            .flat_map(|a| (0..PARAMS).map(move |k| -a[(k, k)]))
            .fold(0.0, f64::max);

        Self {
            nodes: nodes.to_vec(),
            per_node,
            zeeman,
            constant,
            fastest_rate,
        }
    }

    /// Zeeman superoperator for field `b`.
    pub fn zeeman_at(&self, b: &nalgebra::Vector3<f64>) -> SuperOp {
        let mut z = SuperOp::zeros();
        for axis in 0..3 {
            if b[axis] != 0.0 {
                z += self.zeeman[axis] * b[axis];
            }
        }
        z
    }

    /// Per-node derivative (mixing excluded) at field `b`.
    pub fn derivative(&self, b: &nalgebra::Vector3<f64>, p: &[Params], out: &mut [Params]) {
        let z = self.zeeman_at(b);
        for ((a, pi), o) in self.per_node.iter().zip(p).zip(out.iter_mut()) {
            *o = a * pi + z * pi + self.constant;
        }
    }
}
