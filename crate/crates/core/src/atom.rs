//! Time-independent operators of the Rb-87 D1 line in the coupled |F, m⟩
//! basis.
//!
//! Basis order (16 states): ground F=1 (m = −1…1), ground F=2 (m = −2…2),
//! excited F'=1 (m = −1…1), excited F'=2 (m = −2…2). Within each manifold the
//! local order is the same, which lets one coupled↔uncoupled map serve both.

use nalgebra::{DMatrix, SMatrix};
use num_complex::Complex64 as C64;
use serde::Serialize;
use serde_json::json;

use crate::angular::{clebsch_gordan, spin_matrices, wigner_3j, wigner_6j};
use crate::constants::AtomSpec;
use crate::error::{Error, Result};

pub const DIM: usize = 16;
pub const GROUND_DIM: usize = 8;

/// 16×16 complex operator.
pub type Op = SMatrix<C64, DIM, DIM>;
/// 8×8 complex block (one manifold).
pub type Block = SMatrix<C64, GROUND_DIM, GROUND_DIM>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    Ground,
    Excited,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct BasisLabel {
    pub manifold: Manifold,
    pub f: u8,
    pub m: i8,
}

impl std::fmt::Display for BasisLabel {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let prime = match self.manifold {
            Manifold::Ground => "",
            Manifold::Excited => "'",
        };
        write!(fmt, "|F{}={}, m={}⟩", prime, self.f, self.m)
    }
}

/// Local index (0..8) of |F, m⟩ inside a manifold.
pub fn local_index(f: u8, m: i8) -> usize {
    debug_assert!((f == 1 || f == 2) && m.unsigned_abs() <= f);
    match f {
        1 => (m + 1) as usize,
        _ => (m + 2) as usize + 3,
    }
}

pub fn ground_index(f: u8, m: i8) -> usize {
    local_index(f, m)
}

pub fn excited_index(f: u8, m: i8) -> usize {
    GROUND_DIM + local_index(f, m)
}

fn local_label(i: usize) -> (u8, i8) {
    if i < 3 {
        (1, i as i8 - 1)
    } else {
        (2, i as i8 - 5)
    }
}

/// Sparse real linear map from the excited block to the ground block:
/// excited population → nuclear partial trace ⊗ maximally mixed electron.
#[derive(Clone, Debug)]
pub struct RepopulationMap {
    /// (ground local (r, c), excited local (r, c), coefficient)
    terms: Vec<((usize, usize), (usize, usize), f64)>,
}

impl RepopulationMap {
    /// Apply to an excited 8×8 block, returning the repopulated ground block.
    pub fn apply(&self, excited: &Block) -> Block {
        let mut out = Block::zeros();
        for &((gr, gc), (er, ec), w) in &self.terms {
            out[(gr, gc)] += excited[(er, ec)] * w;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct AtomSystem {
    pub spec: AtomSpec,
    pub labels: Vec<BasisLabel>,
    /// Rotating-frame angular-frequency offsets at zero pump detuning, rad/s.
    /// F=1 is the zero; F'=2 sits at zero because the carrier is resonant
    /// with F=1↔F'=2.
    pub energies: [f64; DIM],
    /// Ground angular-momentum matrices: `fops[0]` for F=1 (3×3), `fops[1]`
    /// for F=2 (5×5), each (F_x, F_y, F_z).
    pub fops: [[DMatrix<C64>; 3]; 2],
    /// Σ_n g_n γ_e F_{n,α} embedded in 16 dims (rad/(s·T)), α = x, y, z.
    pub zeeman: [Op; 3],
    /// Absorption part P_e (d·l₊) P_g of the σ⁺ dipole operator, C·m.
    pub dipole: Op,
    pub p_g: Op,
    pub p_e: Op,
    pub p_1: Op,
    pub p_2: Op,
    /// Uncoupled |m_I, m_J⟩ ← coupled |F, m⟩ (real orthogonal).
    pub cg_map: SMatrix<f64, GROUND_DIM, GROUND_DIM>,
    pub repopulation: RepopulationMap,
    pub g_factors: [f64; 2],
    pub gamma_e: f64,
}

fn embed(block: &DMatrix<C64>, offset: usize) -> Op {
    let mut out = Op::zeros();
    for r in 0..block.nrows() {
        for c in 0..block.ncols() {
            out[(offset + r, offset + c)] = block[(r, c)];
        }
    }
    out
}

fn projector(range: std::ops::Range<usize>) -> Op {
    let mut p = Op::zeros();
    for i in range {
        p[(i, i)] = C64::new(1.0, 0.0);
    }
    p
}

/// ⟨F' m'| d_q |F m⟩ / ⟨J'‖d‖J⟩ for J = J' = 1/2 and nuclear spin `i2/2`.
fn dipole_angular(i2: i32, fe: i32, me: i32, fg: i32, mg: i32, q: i32) -> f64 {
    let (j, je) = (1, 1);
    let (fe2, me2, fg2, mg2) = (2 * fe, 2 * me, 2 * fg, 2 * mg);
    let reduced_f = sign((je + i2 + fg2 + 2) / 2)
        * (((fe2 + 1) * (fg2 + 1)) as f64).sqrt()
        * wigner_6j(je, fe2, i2, fg2, j, 2);
    sign(fe - me) * wigner_3j(fe2, 2, fg2, -me2, 2 * q, mg2) * reduced_f
}

fn sign(n: i32) -> f64 {
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Build the 16-level operator set from a physical-constants record.
pub fn build_atom_system(spec: &AtomSpec) -> Result<AtomSystem> {
    if spec.nuclear_spin_x2 != 3 {
        return Err(Error::AtomSpec(format!(
            "nuclear spin {}/2 gives {} ground states; this model is built for I = 3/2 (8 ground, 8 excited)",
            spec.nuclear_spin_x2,
            2 * (spec.nuclear_spin_x2 + 1)
        )));
    }
    for (name, v) in [
        ("reduced_dipole_cm", spec.reduced_dipole_cm),
        ("ground_hyperfine_hz", spec.ground_hyperfine_hz),
        ("excited_hyperfine_hz", spec.excited_hyperfine_hz),
        ("d1_frequency_hz", spec.d1_frequency_hz),
        ("gamma_e", spec.gamma_e),
        ("mass_u", spec.mass_u),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::AtomSpec(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if !(spec.g_f1.is_finite() && spec.g_f2.is_finite()) || spec.g_f1 * spec.g_f2 >= 0.0 {
        return Err(Error::AtomSpec(format!(
            "ground g-factors must be finite with opposite signs, got g1 = {}, g2 = {}",
            spec.g_f1, spec.g_f2
        )));
    }

    let i2 = spec.nuclear_spin_x2 as i32;
    let mut labels = Vec::with_capacity(DIM);
    for manifold in [Manifold::Ground, Manifold::Excited] {
        for i in 0..GROUND_DIM {
            let (f, m) = local_label(i);
            labels.push(BasisLabel { manifold, f, m });
        }
    }

    let two_pi = 2.0 * std::f64::consts::PI;
    let mut energies = [0.0; DIM];
    for (k, l) in labels.iter().enumerate() {
        energies[k] = match (l.manifold, l.f) {
            (Manifold::Ground, 1) => 0.0,
            (Manifold::Ground, _) => two_pi * spec.ground_hyperfine_hz,
            (Manifold::Excited, 2) => 0.0,
            (Manifold::Excited, _) => -two_pi * spec.excited_hyperfine_hz,
        };
    }

    let f1 = spin_matrices(2);
    let f2 = spin_matrices(4);
    let g = [spec.g_f1, spec.g_f2];
    let zeeman: [Op; 3] = std::array::from_fn(|a| {
        (embed(&f1[a], 0) * C64::new(g[0], 0.0) + embed(&f2[a], 3) * C64::new(g[1], 0.0))
            * C64::new(spec.gamma_e, 0.0)
    });

    let mut dipole = Op::zeros();
    for e in 0..GROUND_DIM {
        let (fe, me) = local_label(e);
        for gi in 0..GROUND_DIM {
            let (fg, mg) = local_label(gi);
            let a = dipole_angular(i2, fe as i32, me as i32, fg as i32, mg as i32, 1);
            if a != 0.0 {
                dipole[(GROUND_DIM + e, gi)] = C64::new(a * spec.reduced_dipole_cm, 0.0);
            }
        }
    }

    let cg_map = SMatrix::<f64, GROUND_DIM, GROUND_DIM>::from_fn(|unc, coup| {
        let mi2 = 2 * (unc / 2) as i32 - 3;
        let mj2 = 2 * (unc % 2) as i32 - 1;
        let (f, m) = local_label(coup);
        clebsch_gordan(i2, mi2, 1, mj2, 2 * f as i32, 2 * m as i32)
    });
    let repopulation = build_repopulation(&cg_map);

    Ok(AtomSystem {
        spec: spec.clone(),
        labels,
        energies,
        fops: [f1, f2],
        zeeman,
        dipole,
        p_g: projector(0..GROUND_DIM),
        p_e: projector(GROUND_DIM..DIM),
        p_1: projector(0..3),
        p_2: projector(3..GROUND_DIM),
        cg_map,
        repopulation,
        g_factors: g,
        gamma_e: spec.gamma_e,
    })
}

fn build_repopulation(u: &SMatrix<f64, GROUND_DIM, GROUND_DIM>) -> RepopulationMap {
    let uc = u.map(|x| C64::new(x, 0.0));
    let mut terms = Vec::new();
    for er in 0..GROUND_DIM {
        for ec in 0..GROUND_DIM {
            let mut unit = Block::zeros();
            unit[(er, ec)] = C64::new(1.0, 0.0);
            let out = repopulate_dense(&uc, &unit);
            for gr in 0..GROUND_DIM {
                for gc in 0..GROUND_DIM {
                    let v = out[(gr, gc)];
                    debug_assert!(v.im.abs() < 1e-14);
                    if v.re.abs() > 1e-15 {
                        terms.push(((gr, gc), (er, ec), v.re));
                    }
                }
            }
        }
    }
    RepopulationMap { terms }
}

/// Dense reference: U ρ_e U† → trace over m_J → ⊗ 𝟙/2 → U† (·) U.
pub(crate) fn repopulate_dense(u: &Block, excited: &Block) -> Block {
    let unc = u * excited * u.adjoint();
    let mut nuclear = SMatrix::<C64, 4, 4>::zeros();
    for a in 0..4 {
        for b in 0..4 {
            nuclear[(a, b)] = unc[(2 * a, 2 * b)] + unc[(2 * a + 1, 2 * b + 1)];
        }
    }
    let mut ground_unc = Block::zeros();
    for a in 0..4 {
        for b in 0..4 {
            for s in 0..2 {
                ground_unc[(2 * a + s, 2 * b + s)] = nuclear[(a, b)] * 0.5;
            }
        }
    }
    u.adjoint() * ground_unc * u
}

pub fn ground_block(op: &Op) -> Block {
    op.fixed_view::<GROUND_DIM, GROUND_DIM>(0, 0).into_owned()
}

pub fn excited_block(op: &Op) -> Block {
    op.fixed_view::<GROUND_DIM, GROUND_DIM>(GROUND_DIM, GROUND_DIM).into_owned()
}

#[derive(Clone, Debug, Serialize)]
pub struct DipoleElement {
    pub excited: BasisLabel,
    pub ground: BasisLabel,
    pub value_cm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelectionAudit {
    pub elements: Vec<DipoleElement>,
    /// Every nonzero element raises m by one and joins ground to excited.
    pub sigma_plus_ok: bool,
    pub ground_ground_norm: f64,
    pub excited_excited_norm: f64,
}

/// List every nonzero element of the σ⁺ dipole matrix and check the
/// circular selection rule.
pub fn selection_rule_audit(sys: &AtomSystem) -> SelectionAudit {
    let mut elements = Vec::new();
    let mut ok = true;
    for r in 0..DIM {
        for c in 0..DIM {
            let v = sys.dipole[(r, c)];
            if v.norm() == 0.0 {
                continue;
            }
            let (lr, lc) = (sys.labels[r], sys.labels[c]);
            let raises = lr.m == lc.m + 1;
            let crosses = lr.manifold == Manifold::Excited && lc.manifold == Manifold::Ground;
            ok &= raises && crosses;
            elements.push(DipoleElement {
                excited: lr,
                ground: lc,
                value_cm: v.re,
            });
        }
    }
    SelectionAudit {
        elements,
        sigma_plus_ok: ok,
        ground_ground_norm: (sys.p_g * sys.dipole * sys.p_g).norm(),
        excited_excited_norm: (sys.p_e * sys.dipole * sys.p_e).norm(),
    }
}

/// Thermal state: uniform over the eight ground Zeeman sublevels.
pub fn equilibrium_state(sys: &AtomSystem) -> Op {
    sys.p_g * C64::new(1.0 / GROUND_DIM as f64, 0.0)
}

impl AtomSystem {
    pub fn dim(&self) -> usize {
        DIM
    }

    /// All matrices as JSON; complex entries are `[re, im]` pairs.
    pub fn to_json(&self) -> serde_json::Value {
        let op_json = |m: &Op| -> serde_json::Value {
            (0..DIM)
                .map(|r| (0..DIM).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect::<Vec<_>>())
                .collect::<Vec<_>>()
                .into()
        };
        let dm_json = |m: &DMatrix<C64>| -> serde_json::Value {
            (0..m.nrows())
                .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect::<Vec<_>>())
                .collect::<Vec<_>>()
                .into()
        };
        let fops = |k: usize| json!({ "x": dm_json(&self.fops[k][0]), "y": dm_json(&self.fops[k][1]), "z": dm_json(&self.fops[k][2]) });
        json!({
            "dim": DIM,
            "labels": self.labels,
            "energies_rad_s": self.energies.to_vec(),
            "g_factors": self.g_factors,
            "gamma_e": self.gamma_e,
            "fops": { "F1": fops(0), "F2": fops(1) },
            "dipole_cm": op_json(&self.dipole),
            "projectors": {
                "P_g": op_json(&self.p_g),
                "P_e": op_json(&self.p_e),
                "P_1": op_json(&self.p_1),
                "P_2": op_json(&self.p_2),
            },
            "cg_map": (0..GROUND_DIM)
                .map(|r| (0..GROUND_DIM).map(|c| self.cg_map[(r, c)]).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "spec": self.spec,
        })
    }
}
