//! Built-in closed surfaces: the unit cube `[0,1]^3` and the unit sphere.
//!
//! Both use the same six-face layout so that patch `k` of the cube and of
//! the sphere cover the same face of the circumscribed cube.
//!
//! The sphere patches are exact rational Bezier patches of bidegree (4, 4).
//! Each face is the image of a biquadratic quaternion polynomial `q(u, v)`
//! under the Hopf-type map `q -> q i conj(q) / |q|^2`, which lands on the
//! unit sphere for every `q != 0`. Face edges are lifted horizontally so that
//! they map to great-circle arcs, and a linear complex phase along each lifted
//! edge closes the loop around every face.

use std::collections::BTreeMap;

use nalgebra::{Quaternion, Vector3};

use super::{MultipatchGeometry, NurbsPatch, Vec3};
use crate::error::{Error, Result};

type Quat = Quaternion<f64>;
type Key = [i32; 3];

pub fn builtin_geometry(name: &str) -> Result<MultipatchGeometry> {
    match name {
        "cube" => Ok(cube()),
        "sphere" => Ok(sphere()),
        other => Err(Error::Usage(format!(
            "unknown built-in geometry '{other}' (expected 'cube' or 'sphere')"
        ))),
    }
}

/// Faces as `(v0, v1, v2, v3)` counter-clockwise seen from outside;
/// `u` runs from `v0` to `v1`, `v` from `v0` to `v3`.
fn faces() -> Vec<[Key; 4]> {
    let mut out = Vec::with_capacity(6);
    for ax in 0..3 {
        for s in [-1, 1] {
            let (mut e1, mut e2) = match ax {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let cross = Vector3::ith(e1, 1.0).cross(&Vector3::<f64>::ith(e2, 1.0));
            if cross[ax] * s as f64 <= 0.0 {
                std::mem::swap(&mut e1, &mut e2);
            }
            let key = |a: i32, b: i32| {
                let mut k = [0; 3];
                k[ax] = s;
                k[e1] = a;
                k[e2] = b;
                k
            };
            out.push([key(-1, -1), key(1, -1), key(1, 1), key(-1, 1)]);
        }
    }
    out
}

fn key_vec(k: Key) -> Vec3 {
    Vec3::new(k[0] as f64, k[1] as f64, k[2] as f64)
}

/// Six bilinear patches bounding `[0,1]^3`, normals outward.
pub fn cube() -> MultipatchGeometry {
    let corner = |k: Key| (key_vec(k) + Vec3::repeat(1.0)) * 0.5;
    let patches = faces()
        .into_iter()
        .map(|[v0, v1, v2, v3]| NurbsPatch::bilinear(corner(v0), corner(v1), corner(v3), corner(v2)))
        .collect();
    MultipatchGeometry::new(patches).expect("built-in cube is valid")
}

fn complex(re: f64, im: f64) -> Quat {
    Quat::new(re, im, 0.0, 0.0)
}

fn dot4(a: &Quat, b: &Quat) -> f64 {
    a.w * b.w + a.i * b.i + a.j * b.j + a.k * b.k
}

/// Point on the sphere represented by `q`.
fn project(q: &Quat) -> Vec3 {
    let r = q * Quat::new(0.0, 1.0, 0.0, 0.0) * q.conjugate();
    r.imag() / dot4(q, q)
}

/// Unit rotation quaternion about `axis` (not necessarily normalised) by `angle`.
fn rotation(axis: Vec3, angle: f64) -> Quat {
    let n = axis.norm();
    let a = if n < 1e-14 { Vec3::z() } else { axis / n };
    let (s, c) = (0.5 * angle).sin_cos();
    Quat::new(c, s * a.x, s * a.y, s * a.z)
}

/// Minimal rotation taking unit vector `a` to unit vector `b`.
fn minimal_rotation(a: Vec3, b: Vec3) -> Quat {
    let ax = a.cross(&b);
    rotation(ax, ax.norm().atan2(a.dot(&b)))
}

/// Complex `z` with `a z = b` for quaternions on the same fibre.
fn fibre_ratio(a: &Quat, b: &Quat) -> (f64, f64) {
    let z = a.conjugate() * b / dot4(a, a);
    debug_assert!(z.j.abs() < 1e-12 && z.k.abs() < 1e-12);
    (z.w, z.i)
}

fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn cdiv(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let d = b.0 * b.0 + b.1 * b.1;
    ((a.0 * b.0 + a.1 * b.1) / d, (a.1 * b.0 - a.0 * b.1) / d)
}

struct SphereLifts {
    point: BTreeMap<Key, Vec3>,
    lift: BTreeMap<Key, Quat>,
}

impl SphereLifts {
    fn new() -> Self {
        let mut point = BTreeMap::new();
        let mut lift = BTreeMap::new();
        for x in [-1, 1] {
            for y in [-1, 1] {
                for z in [-1, 1] {
                    let k = [x, y, z];
                    let p = key_vec(k) / 3f64.sqrt();
                    point.insert(k, p);
                    lift.insert(k, minimal_rotation(Vec3::x(), p));
                }
            }
        }
        Self { point, lift }
    }

    /// Lift of the edge `v -> w` at parameter `t`, linear in `t`. Shared by
    /// both faces adjacent to the edge, so it is built from the smaller key.
    fn edge(&self, v: Key, w: Key, t: f64) -> Quat {
        let (a, b, s) = if v < w { (v, w, t) } else { (w, v, 1.0 - t) };
        let sa = self.lift[&a];
        let h = minimal_rotation(project(&sa), self.point[&b]) * sa;
        sa * (1.0 - s) + h * s
    }

    /// Biquadratic quaternion control net `N[a][b]` for one face.
    fn face_net(&self, v: [Key; 4]) -> [[Quat; 3]; 3] {
        let lp = [(v[0], v[1]), (v[1], v[2]), (v[2], v[3]), (v[3], v[0])];
        let transport = |twist: (f64, f64)| {
            let mut cur = (1.0, 0.0);
            let mut deltas = Vec::with_capacity(4);
            for &(a, b) in &lp {
                let da = fibre_ratio(&self.lift[&a], &self.edge(a, b, 0.0));
                let db = fibre_ratio(&self.lift[&b], &self.edge(a, b, 1.0));
                let d0 = cdiv(cur, da);
                let d1 = cmul(d0, twist);
                deltas.push((d0, d1));
                cur = cmul(db, d1);
            }
            (cur, deltas)
        };
        let (hol, _) = transport((1.0, 0.0));
        let theta = -hol.1.atan2(hol.0) / 4.0;
        let (closed, deltas) = transport((theta.cos(), theta.sin()));
        debug_assert!((closed.0 - 1.0).abs() < 1e-12 && closed.1.abs() < 1e-12);

        let edge_q = |e: usize, t: f64| {
            let (a, b) = lp[e];
            let (d0, d1) = deltas[e];
            let d = (d0.0 * (1.0 - t) + d1.0 * t, d0.1 * (1.0 - t) + d1.1 * t);
            self.edge(a, b, t) * complex(d.0, d.1)
        };
        let bezier = |f: &dyn Fn(f64) -> Quat| {
            let (q0, qm, q1) = (f(0.0), f(0.5), f(1.0));
            [q0, qm * 2.0 - (q0 + q1) * 0.5, q1]
        };
        let bottom = bezier(&|t| edge_q(0, t));
        let right = bezier(&|t| edge_q(1, t));
        let top = bezier(&|t| edge_q(2, 1.0 - t));
        let left = bezier(&|t| edge_q(3, 1.0 - t));
        let mut n = [[Quat::identity(); 3]; 3];
        for k in 0..3 {
            n[k][0] = bottom[k];
            n[2][k] = right[k];
            n[k][2] = top[k];
            n[0][k] = left[k];
        }
        n[1][1] = (n[1][0] + n[2][1] + n[1][2] + n[0][1]) * 0.5 - (n[0][0] + n[2][0] + n[2][2] + n[0][2]) * 0.25;
        n
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Rational bidegree-(4,4) Bezier patch of `q i conj(q)/|q|^2` for a
/// biquadratic `q` with control net `n`.
fn hopf_patch(n: &[[Quat; 3]; 3]) -> NurbsPatch {
    let ex = Quat::new(0.0, 1.0, 0.0, 0.0);
    let mut w = [[0.0; 5]; 5];
    let mut h = [[Vec3::zeros(); 5]; 5];
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    let cu = binom(2, a) * binom(2, c) / binom(4, a + c);
                    let cv = binom(2, b) * binom(2, d) / binom(4, b + d);
                    let f = cu * cv;
                    w[a + c][b + d] += f * dot4(&n[a][b], &n[c][d]);
                    h[a + c][b + d] += (n[a][b] * ex * n[c][d].conjugate()).imag() * f;
                }
            }
        }
    }
    let mut pts = Vec::with_capacity(25);
    let mut wts = Vec::with_capacity(25);
    for k in 0..5 {
        for l in 0..5 {
            pts.push(h[k][l] / w[k][l]);
            wts.push(w[k][l]);
        }
    }
    let knots = vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    NurbsPatch::new(4, knots.clone(), 4, knots, pts, wts).expect("sphere patch data is consistent")
}

/// Six exact rational patches covering the unit sphere, normals outward.
pub fn sphere() -> MultipatchGeometry {
    let lifts = SphereLifts::new();
    let patches = faces().into_iter().map(|f| hopf_patch(&lifts.face_net(f))).collect();
    MultipatchGeometry::new(patches).expect("built-in sphere is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn unknown_name_is_usage_error() {
        assert!(matches!(builtin_geometry("torus"), Err(Error::Usage(_))));
    }

    #[test]
    fn sphere_corners_hit_cube_diagonals() {
        let g = sphere();
        for (k, f) in faces().into_iter().enumerate() {
            let corners = [(0.0, 0.0, f[0]), (1.0, 0.0, f[1]), (1.0, 1.0, f[2]), (0.0, 1.0, f[3])];
            for (x, y, key) in corners {
                let p = g.frame(k, x, y).unwrap().point;
                assert_abs_diff_eq!(p, key_vec(key) / 3f64.sqrt(), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn sphere_weights_positive() {
        for p in sphere().patches() {
            assert!(p.weights().iter().all(|w| *w > 0.5));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn sphere_is_exact_and_outward(k in 0usize..6, x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            let g = sphere();
            let f = g.frame(k, x, y).unwrap();
            prop_assert!((f.point.norm() - 1.0).abs() <= 1e-13);
            prop_assert!((f.normal - f.point).norm() <= 1e-12);
        }

        #[test]
        fn sphere_jacobian_matches_finite_differences(k in 0usize..6, x in 0.01f64..0.99, y in 0.01f64..0.99) {
            let g = sphere();
            let f = g.frame(k, x, y).unwrap();
            let h = 1e-6;
            let p = |x: f64, y: f64| g.frame(k, x, y).unwrap().point;
            let d1 = (p(x + h, y) - p(x - h, y)) / (2.0 * h);
            let d2 = (p(x, y + h) - p(x, y - h)) / (2.0 * h);
            prop_assert!((d1 - f.jacobian[0]).norm() <= 1e-5 * f.jacobian[0].norm());
            prop_assert!((d2 - f.jacobian[1]).norm() <= 1e-5 * f.jacobian[1].norm());
        }
    }
}
