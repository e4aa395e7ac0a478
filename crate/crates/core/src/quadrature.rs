//! Gauss-Legendre rules on the unit square and regularising rules for pairs
//! of cells whose product domain contains the kernel singularity.
//!
//! Singular rules are written in a canonical frame and mapped back to each
//! cell's local coordinates with a [`Dihedral`] symmetry of the square:
//!
//! * coincident: both cells are the same cell;
//! * edge: the shared edge is `s2 = 0` in both cells and `s1` agrees along it;
//! * vertex: the shared vertex is the origin of both cells.
//!
//! The rules integrate over `[0,1]^2 x [0,1]^2` with total weight 1; callers
//! scale by the parameter-cell areas.

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 30;

/// `n`-point Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton on P_n from the Chebyshev-like initial guess
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { t } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (t * p - pm1) / (t * t - 1.0);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            t = 0.0;
            dp = 1.0;
        }
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = 0.5 * (1.0 - t);
        x[n - 1 - i] = 0.5 * (1.0 + t);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

/// Tensor Gauss rule on `[0,1]^2` with `d` points per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGaussRule {
    pub degree: usize,
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

fn check_degree(d: usize) -> Result<()> {
    if (1..=MAX_DEGREE).contains(&d) {
        Ok(())
    } else {
        Err(Error::Usage(format!("quadrature degree {d} outside 1..={MAX_DEGREE}")))
    }
}

pub fn gauss_rule(d: usize) -> Result<TensorGaussRule> {
    check_degree(d)?;
    let (x, w) = gauss_legendre(d);
    let mut nodes = Vec::with_capacity(d * d);
    let mut weights = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            nodes.push([x[i], x[j]]);
            weights.push(w[i] * w[j]);
        }
    }
    Ok(TensorGaussRule {
        degree: d,
        nodes,
        weights,
    })
}

/// Symmetry of the unit square: optional swap of the coordinates followed
/// by optional reflections `s -> 1 - s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Dihedral {
    pub swap: bool,
    pub flip_x: bool,
    pub flip_y: bool,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral {
        swap: false,
        flip_x: false,
        flip_y: false,
    };

    pub fn all() -> impl Iterator<Item = Dihedral> {
        (0..8).map(|b| Dihedral {
            swap: b & 1 != 0,
            flip_x: b & 2 != 0,
            flip_y: b & 4 != 0,
        })
    }

    /// Maps canonical coordinates to the cell's local coordinates.
    #[inline]
    pub fn apply(self, p: [f64; 2]) -> [f64; 2] {
        let [mut a, mut b] = if self.swap { [p[1], p[0]] } else { p };
        if self.flip_x {
            a = 1.0 - a;
        }
        if self.flip_y {
            b = 1.0 - b;
        }
        [a, b]
    }

    /// Inverse of [`apply`](Self::apply).
    #[inline]
    pub fn invert(self, p: [f64; 2]) -> [f64; 2] {
        let [mut a, mut b] = p;
        if self.flip_x {
            a = 1.0 - a;
        }
        if self.flip_y {
            b = 1.0 - b;
        }
        if self.swap {
            [b, a]
        } else {
            [a, b]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Adjacency {
    Far,
    Vertex,
    Edge,
    Coincident,
}

/// How the two cells of a pair sit relative to the canonical frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Far pairs: no shared point.
    Unrelated,
    /// Both cells are the same cell.
    Same,
    /// Local maps taking the canonical shared edge or vertex to each cell.
    Shared { a: Dihedral, b: Dihedral },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularPairRule {
    pub class: Adjacency,
    pub x: Vec<[f64; 2]>,
    pub y: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl SingularPairRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn push(&mut self, x: [f64; 2], y: [f64; 2], w: f64) {
        self.x.push(x);
        self.y.push(y);
        self.weights.push(w);
    }

    /// Integral of `f(x, y)` over the pair of unit cells.
    pub fn integrate<F: FnMut([f64; 2], [f64; 2]) -> f64>(&self, mut f: F) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.x[i], self.y[i])).sum()
    }
}

/// For a difference `z` with `|z| <= 1`, the start of the admissible range of
/// `x` with both `x` and `x + z` in `[0, 1]`.
#[inline]
fn offset(z: f64) -> f64 {
    if z < 0.0 {
        -z
    } else {
        0.0
    }
}

pub fn singular_pair_rule(class: Adjacency, d: usize, orientation: Orientation) -> Result<SingularPairRule> {
    check_degree(d)?;
    let (g, w) = gauss_legendre(d);
    let mut r = SingularPairRule {
        class,
        x: Vec::new(),
        y: Vec::new(),
        weights: Vec::new(),
    };
    let mismatch = || {
        Err(Error::Usage(format!(
            "{class:?} pair rule cannot be used with orientation {orientation:?}"
        )))
    };
    match (class, orientation) {
        (Adjacency::Far, Orientation::Unrelated) => {
            let t = gauss_rule(d)?;
            for (xa, wa) in t.nodes.iter().zip(&t.weights) {
                for (yb, wb) in t.nodes.iter().zip(&t.weights) {
                    r.push(*xa, *yb, wa * wb);
                }
            }
        }
        (Adjacency::Coincident, Orientation::Same) => {
            // z = y - x split by sign pattern and by which |z_i| is larger
            for sx in [-1.0, 1.0] {
                for sy in [-1.0, 1.0] {
                    for first_larger in [true, false] {
                        for i in 0..d {
                            let rho = g[i];
                            for j in 0..d {
                                let (a, b) = if first_larger { (rho, rho * g[j]) } else { (rho * g[j], rho) };
                                let (z1, z2) = (sx * a, sy * b);
                                let jac = rho * (1.0 - a) * (1.0 - b);
                                for k in 0..d {
                                    let x1 = offset(z1) + (1.0 - a) * g[k];
                                    for l in 0..d {
                                        let x2 = offset(z2) + (1.0 - b) * g[l];
                                        r.push([x1, x2], [x1 + z1, x2 + z2], w[i] * w[j] * w[k] * w[l] * jac);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        (Adjacency::Edge, Orientation::Shared { a: ma, b: mb }) => {
            // z = y1 - x1 by sign, then (|z|, x2, y2) by the largest coordinate
            for sz in [-1.0, 1.0] {
                for lead in 0..3 {
                    for i in 0..d {
                        let rho = g[i];
                        for j in 0..d {
                            for k in 0..d {
                                let c = [rho * g[j], rho * g[k]];
                                let (az, x2, y2) = match lead {
                                    0 => (rho, c[0], c[1]),
                                    1 => (c[0], rho, c[1]),
                                    _ => (c[0], c[1], rho),
                                };
                                let z = sz * az;
                                let jac = rho * rho * (1.0 - az);
                                for l in 0..d {
                                    let x1 = offset(z) + (1.0 - az) * g[l];
                                    let wt = w[i] * w[j] * w[k] * w[l] * jac;
                                    r.push(ma.apply([x1, x2]), mb.apply([x1 + z, y2]), wt);
                                }
                            }
                        }
                    }
                }
            }
        }
        (Adjacency::Vertex, Orientation::Shared { a: ma, b: mb }) => {
            for lead in 0..4 {
                for i in 0..d {
                    let rho = g[i];
                    let jac = rho * rho * rho;
                    for j in 0..d {
                        for k in 0..d {
                            for l in 0..d {
                                let c = [rho * g[j], rho * g[k], rho * g[l]];
                                let mut v = [0.0; 4];
                                let mut n = 0;
                                for (s, vs) in v.iter_mut().enumerate() {
                                    if s == lead {
                                        *vs = rho;
                                    } else {
                                        *vs = c[n];
                                        n += 1;
                                    }
                                }
                                let wt = w[i] * w[j] * w[k] * w[l] * jac;
                                r.push(ma.apply([v[0], v[1]]), mb.apply([v[2], v[3]]), wt);
                            }
                        }
                    }
                }
            }
        }
        _ => return mismatch(),
    }
    Ok(r)
}
