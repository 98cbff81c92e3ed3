//! Angular-momentum algebra: Wigner 3j/6j symbols, Clebsch–Gordan
//! coefficients, and spin matrices.
//!
//! All angular momenta are passed doubled (`j2 = 2j`, `m2 = 2m`) so that
//! half-integer values stay exact.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

fn factorial(n: i32) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn triangle_ok(a: i32, b: i32, c: i32) -> bool {
    c >= (a - b).abs() && c <= a + b && (a + b + c) % 2 == 0
}

/// Δ(abc) triangle coefficient with doubled arguments.
fn delta(a: i32, b: i32, c: i32) -> f64 {
    factorial((a + b - c) / 2) * factorial((a - b + c) / 2) * factorial((-a + b + c) / 2)
        / factorial((a + b + c) / 2 + 1)
}

fn parity(n: i32) -> f64 {
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Wigner 3j symbol (j1 j2 j3; m1 m2 m3), doubled arguments.
pub fn wigner_3j(j1: i32, j2: i32, j3: i32, m1: i32, m2: i32, m3: i32) -> f64 {
    if m1 + m2 + m3 != 0 || !triangle_ok(j1, j2, j3) {
        return 0.0;
    }
    for (j, m) in [(j1, m1), (j2, m2), (j3, m3)] {
        if m.abs() > j || (j + m) % 2 != 0 {
            return 0.0;
        }
    }
    let h = |x: i32| x / 2;
    let pre = parity(h(j1 - j2 - m3))
        * delta(j1, j2, j3).sqrt()
        * (factorial(h(j1 + m1))
            * factorial(h(j1 - m1))
            * factorial(h(j2 + m2))
            * factorial(h(j2 - m2))
            * factorial(h(j3 + m3))
            * factorial(h(j3 - m3)))
        .sqrt();
    let k_min = 0.max(h(j2 - j3 - m1)).max(h(j1 - j3 + m2));
    let k_max = h(j1 + j2 - j3).min(h(j1 - m1)).min(h(j2 + m2));
    let sum: f64 = (k_min..=k_max)
        .map(|k| {
            parity(k)
                / (factorial(k)
                    * factorial(h(j3 - j2 + m1) + k)
                    * factorial(h(j3 - j1 - m2) + k)
                    * factorial(h(j1 + j2 - j3) - k)
                    * factorial(h(j1 - m1) - k)
                    * factorial(h(j2 + m2) - k))
        })
        .sum();
    pre * sum
}

/// Wigner 6j symbol {j1 j2 j3; j4 j5 j6}, doubled arguments.
pub fn wigner_6j(j1: i32, j2: i32, j3: i32, j4: i32, j5: i32, j6: i32) -> f64 {
    if !(triangle_ok(j1, j2, j3)
        && triangle_ok(j1, j5, j6)
        && triangle_ok(j4, j2, j6)
        && triangle_ok(j4, j5, j3))
    {
        return 0.0;
    }
    let a = [
        (j1 + j2 + j3) / 2,
        (j1 + j5 + j6) / 2,
        (j4 + j2 + j6) / 2,
        (j4 + j5 + j3) / 2,
    ];
    let b = [
        (j1 + j2 + j4 + j5) / 2,
        (j2 + j3 + j5 + j6) / 2,
        (j3 + j1 + j6 + j4) / 2,
    ];
    let t_min = *a.iter().max().unwrap();
    let t_max = *b.iter().min().unwrap();
    let pre = (delta(j1, j2, j3) * delta(j1, j5, j6) * delta(j4, j2, j6) * delta(j4, j5, j3)).sqrt();
    let sum: f64 = (t_min..=t_max)
        .map(|t| {
            let den: f64 = a.iter().map(|&x| factorial(t - x)).product::<f64>()
                * b.iter().map(|&x| factorial(x - t)).product::<f64>();
            parity(t) * factorial(t + 1) / den
        })
        .sum();
    pre * sum
}

/// Clebsch–Gordan coefficient ⟨j1 m1; j2 m2 | J M⟩, doubled arguments.
pub fn clebsch_gordan(j1: i32, m1: i32, j2: i32, m2: i32, j: i32, m: i32) -> f64 {
    parity((j1 - j2 + m) / 2) * ((j + 1) as f64).sqrt() * wigner_3j(j1, j2, j, m1, m2, -m)
}

/// Spin matrices (J_x, J_y, J_z) for spin `j2 / 2`, basis ordered by
/// ascending projection m = −j … j.
pub fn spin_matrices(j2: i32) -> [DMatrix<C64>; 3] {
    let dim = (j2 + 1) as usize;
    let j = j2 as f64 / 2.0;
    let m_of = |i: usize| -j + i as f64;
    let mut jp = DMatrix::<C64>::zeros(dim, dim);
    for i in 0..dim - 1 {
        let m = m_of(i);
        jp[(i + 1, i)] = C64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * C64::new(0.5, 0.0);
    let jy = (&jp - &jm) * C64::new(0.0, -0.5);
    let jz = DMatrix::from_fn(dim, dim, |r, c| {
        if r == c {
            C64::new(m_of(r), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    [jx, jy, jz]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_3j_values() {
        // (1 1 0; 0 0 0) = -1/sqrt(3)
        assert!((wigner_3j(2, 2, 0, 0, 0, 0) + 1.0 / 3f64.sqrt()).abs() < 1e-14);
        // (1/2 1/2 1; 1/2 -1/2 0) = 1/sqrt(6)
        assert!((wigner_3j(1, 1, 2, 1, -1, 0) - 1.0 / 6f64.sqrt()).abs() < 1e-14);
        assert_eq!(wigner_3j(2, 2, 2, 0, 0, 0), 0.0);
    }

    #[test]
    fn known_6j_value() {
        // {1/2 1/2 1; 1/2 1/2 0} = 1/2 (up to sign -1^(...)): direct Racah value is 1/2
        let v = wigner_6j(1, 1, 2, 1, 1, 0);
        assert!((v.abs() - 0.5).abs() < 1e-14, "{v}");
        // {1 1 1; 1 1 1} = 1/6
        assert!((wigner_6j(2, 2, 2, 2, 2, 2) - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn cg_orthonormality_three_halves_one_half() {
        for f in [2, 4] {
            for f2 in [2, 4] {
                for m in (-f.min(f2)..=f.min(f2)).step_by(2) {
                    let mut s = 0.0;
                    for mi in (-3..=3).step_by(2) {
                        let mj = m - mi;
                        s += clebsch_gordan(3, mi, 1, mj, f, m) * clebsch_gordan(3, mi, 1, mj, f2, m);
                    }
                    let expect = if f == f2 { 1.0 } else { 0.0 };
                    assert!((s - expect).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn spin_commutators() {
        for j2 in 1..=4 {
            let [x, y, z] = spin_matrices(j2);
            let c = &x * &y - &y * &x - &z * C64::new(0.0, 1.0);
            assert!(c.norm() < 1e-13);
            let casimir = &x * &x + &y * &y + &z * &z;
            let j = j2 as f64 / 2.0;
            let id = DMatrix::<C64>::identity(j2 as usize + 1, j2 as usize + 1) * C64::new(j * (j + 1.0), 0.0);
            assert!((casimir - id).norm() < 1e-12);
        }
    }
}
