//! Gauss–Hermite discretization of the Maxwell–Boltzmann velocity marginal.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Nodes and weights for ∫ e^{−x²} f(x) dx (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let jacobi = DMatrix::<f64>::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // enforce exact mirror symmetry of the nodes
    for k in 0..n / 2 {
        let (a, b) = (pairs[k], pairs[n - 1 - k]);
        let x = 0.5 * (b.0 - a.0);
        let w = 0.5 * (a.1 + b.1);
        pairs[k] = (-x, w);
        pairs[n - 1 - k] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VelocityNode {
    /// Velocity along the pump axis, m/s.
    pub v_z: f64,
    pub weight: f64,
}

/// Velocity nodes for the 1-D Maxwell marginal μ(v) ∝ exp(−v²/u²),
/// u = √(2k_BT/m); weights sum to one.
pub fn maxwell_nodes(n: usize, thermal_speed: f64) -> Result<Vec<VelocityNode>> {
    if n == 0 {
        return Err(Error::Precondition("at least one velocity node is required".into()));
    }
    if !(thermal_speed.is_finite() && thermal_speed >= 0.0) {
        return Err(Error::Precondition(format!("thermal speed must be ≥ 0, got {thermal_speed}")));
    }
    let (x, w) = gauss_hermite(n);
    let norm: f64 = w.iter().sum();
    Ok(x
        .into_iter()
        .zip(w)
        .map(|(x, w)| VelocityNode {
            v_z: thermal_speed * x,
            weight: w / norm,
        })
        .collect())
}
