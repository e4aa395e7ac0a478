//! Closed-form reference wavenumbers.

use std::f64::consts::PI;

/// Lowest interior resonance of the unit ball: the first positive root of
/// `(r j1(r))' = cos r / r - sin r / r^2 + sin r`.
pub fn sphere_first_eigenvalue() -> f64 {
    let f = |r: f64| r.cos() / r - r.sin() / (r * r) + r.sin();
    let (mut a, mut b) = (2.0, 3.0);
    debug_assert!(f(a) * f(b) < 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(a) * f(m) <= 0.0 {
            b = m;
        } else {
            a = m;
        }
        if b - a <= f64::EPSILON * m {
            break;
        }
    }
    0.5 * (a + b)
}

/// Lowest two resonances of the unit cube, `π√2` (multiplicity three) and
/// `π√3` (multiplicity two), listed with multiplicity.
pub fn cube_eigenvalues() -> [f64; 5] {
    let a = PI * 2f64.sqrt();
    let b = PI * 3f64.sqrt();
    [a, a, a, b, b]
}

/// Reference values for a named built-in geometry.
pub fn reference_eigenvalues(geometry: &str) -> Option<Vec<f64>> {
    match geometry {
        "cube" => Some(cube_eigenvalues().to_vec()),
        "sphere" => Some(vec![sphere_first_eigenvalue(); 3]),
        _ => None,
    }
}
