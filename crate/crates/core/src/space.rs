//! Divergence-conforming spline spaces on multipatch surfaces.
//!
//! On the reference square the space is
//! `(S^p ⊗ S^{p-1}) × (S^{p-1} ⊗ S^p)`; patch functions are pushed forward
//! with the Piola map `j∘F = dF v / η`, `div_Γ j ∘ F = div v / η`. Functions
//! whose normal component does not vanish on a patch edge are glued with the
//! matching function of the neighbouring patch so that normal fluxes are
//! continuous.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Edge, EdgeRef, Interface, MultipatchGeometry, SurfaceFrame, Vec3};
use crate::splines::SplineBasis;

const MAXP: usize = 16;

/// `(S^p_m ⊗ S^{p-1}_m) × (S^{p-1}_m ⊗ S^p_m)` on the unit square.
///
/// Local indices list the first component (`i1 * n_q + i2`) before the
/// second (`n_p * n_q + i1 * n_p + i2`), where `n_p = dim S^p_m` and
/// `n_q = dim S^{p-1}_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDivSpace {
    s_p: SplineBasis,
    s_q: SplineBasis,
}

/// Reference-cell values of the `2p(p+1)` functions supported on one cell.
#[derive(Debug, Clone, Copy)]
pub struct CellValues {
    pub values: [[f64; 2]; 2 * MAXP * MAXP],
    pub divs: [f64; 2 * MAXP * MAXP],
}

impl ReferenceDivSpace {
    pub fn new(p: usize, m: u32) -> Result<Self> {
        if p == 0 {
            return Err(Error::UnsupportedDegree(p));
        }
        if p >= MAXP {
            return Err(Error::Usage(format!("degree {p} exceeds the supported maximum {}", MAXP - 1)));
        }
        if m > 10 {
            return Err(Error::Usage(format!("refinement level {m} exceeds the supported maximum 10")));
        }
        Ok(Self {
            s_p: SplineBasis::uniform(p, m),
            s_q: SplineBasis::uniform(p - 1, m),
        })
    }

    pub fn degree(&self) -> usize {
        self.s_p.degree()
    }

    pub fn level(&self) -> u32 {
        self.s_p.knot_vector().level().expect("uniform knot vector")
    }

    /// Cells per parameter direction, `2^m`.
    pub fn cells_per_direction(&self) -> usize {
        1 << self.level()
    }

    pub fn n_p(&self) -> usize {
        self.s_p.dim()
    }

    pub fn n_q(&self) -> usize {
        self.s_q.dim()
    }

    pub fn dim(&self) -> usize {
        2 * self.n_p() * self.n_q()
    }

    pub fn local_index(&self, component: usize, i1: usize, i2: usize) -> usize {
        let (np, nq) = (self.n_p(), self.n_q());
        match component {
            0 => i1 * nq + i2,
            _ => np * nq + i1 * np + i2,
        }
    }

    /// `(component, i1, i2)` of a local index.
    pub fn decompose(&self, local: usize) -> (usize, usize, usize) {
        let (np, nq) = (self.n_p(), self.n_q());
        if local < np * nq {
            (0, local / nq, local % nq)
        } else {
            let r = local - np * nq;
            (1, r / np, r % np)
        }
    }

    /// Reference value and divergence of one function at `x`.
    pub fn eval(&self, local: usize, x: [f64; 2]) -> Result<([f64; 2], f64)> {
        let (c, i1, i2) = self.decompose(local);
        let (bx, by) = if c == 0 { (&self.s_p, &self.s_q) } else { (&self.s_q, &self.s_p) };
        let vx = bx.eval(x[0])?[i1];
        let dx = bx.eval_derivative(x[0])?[i1];
        let vy = by.eval(x[1])?[i2];
        let dy = by.eval_derivative(x[1])?[i2];
        Ok(if c == 0 { ([vx * vy, 0.0], dx * vy) } else { ([0.0, vx * vy], vx * dy) })
    }

    /// Number of functions supported on each cell, `2p(p+1)`.
    pub fn functions_per_cell(&self) -> usize {
        let p = self.degree();
        2 * p * (p + 1)
    }

    /// Local indices of the functions supported on cell `(c1, c2)`, in the
    /// order used by [`eval_cell`](Self::eval_cell).
    pub fn cell_functions(&self, c1: usize, c2: usize) -> Vec<usize> {
        let p = self.degree();
        let mut out = Vec::with_capacity(self.functions_per_cell());
        for r in 0..=p {
            for s in 0..p {
                out.push(self.local_index(0, c1 + r, c2 + s));
            }
        }
        for r in 0..p {
            for s in 0..=p {
                out.push(self.local_index(1, c1 + r, c2 + s));
            }
        }
        out
    }

    /// Values and divergences (with respect to the patch parameter) of the
    /// cell's functions at cell-local coordinates `t`.
    pub fn eval_cell(&self, c1: usize, c2: usize, t: [f64; 2], out: &mut CellValues) {
        let p = self.degree();
        let h = 1.0 / self.cells_per_direction() as f64;
        let x = [(c1 as f64 + t[0]) * h, (c2 as f64 + t[1]) * h];
        let mut vp = [[0.0; MAXP]; 2];
        let mut dp = [[0.0; MAXP]; 2];
        let mut vq = [[0.0; MAXP]; 2];
        let mut dq = [[0.0; MAXP]; 2];
        for (k, (&xk, ck)) in x.iter().zip([c1, c2]).enumerate() {
            self.s_p.eval_span(ck + p, xk, &mut vp[k], &mut dp[k]);
            self.s_q.eval_span(ck + p - 1, xk, &mut vq[k], &mut dq[k]);
        }
        let mut n = 0;
        for r in 0..=p {
            for s in 0..p {
                out.values[n] = [vp[0][r] * vq[1][s], 0.0];
                out.divs[n] = dp[0][r] * vq[1][s];
                n += 1;
            }
        }
        for r in 0..p {
            for s in 0..=p {
                out.values[n] = [0.0, vq[0][r] * vp[1][s]];
                out.divs[n] = vq[0][r] * dp[1][s];
                n += 1;
            }
        }
    }

    /// Local indices of the functions with nonzero normal trace on `edge`,
    /// ordered along the edge parameter.
    pub fn edge_functions(&self, edge: Edge) -> Vec<usize> {
        let (np, nq) = (self.n_p(), self.n_q());
        (0..nq)
            .map(|j| match edge {
                Edge::West => self.local_index(0, 0, j),
                Edge::East => self.local_index(0, np - 1, j),
                Edge::South => self.local_index(1, j, 0),
                Edge::North => self.local_index(1, j, np - 1),
            })
            .collect()
    }

    /// Edge on which `local` has a nonzero normal trace together with its
    /// position along that edge.
    fn edge_of(&self, local: usize) -> Option<(Edge, usize)> {
        let np = self.n_p();
        match self.decompose(local) {
            (0, 0, j) => Some((Edge::West, j)),
            (0, i, j) if i == np - 1 => Some((Edge::East, j)),
            (1, j, 0) => Some((Edge::South, j)),
            (1, j, i) if i == np - 1 => Some((Edge::North, j)),
            _ => None,
        }
    }
}

/// Knot-span cell of a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub patch: usize,
    pub c1: usize,
    pub c2: usize,
}

/// Physical current of one basis function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentialCurrentSample {
    pub value: Vec3,
    pub divergence: f64,
    pub reference_value: [f64; 2],
    pub reference_divergence: f64,
}

/// Largest normal-flux jump per interface.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceReport {
    pub interfaces: Vec<(Interface, f64)>,
}

impl TraceReport {
    pub fn max_jump(&self) -> f64 {
        self.interfaces.iter().map(|(_, j)| *j).fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.max_jump() <= 1e-10
    }
}

/// Global divergence-conforming space on a multipatch surface.
#[derive(Debug, Clone)]
pub struct DivConformingSpace {
    geometry: MultipatchGeometry,
    reference: ReferenceDivSpace,
    /// `(global index, sign)` per patch and local index
    map: Vec<Vec<(usize, f64)>>,
    /// `(patch, local index, sign)` per global index
    supports: Vec<Vec<(usize, usize, f64)>>,
}

pub fn build_space(geometry: MultipatchGeometry, p: usize, m: u32) -> Result<DivConformingSpace> {
    DivConformingSpace::new(geometry, p, m)
}

impl DivConformingSpace {
    pub fn new(geometry: MultipatchGeometry, p: usize, m: u32) -> Result<Self> {
        let reference = ReferenceDivSpace::new(p, m)?;
        let nq = reference.n_q();
        let npatch = geometry.patches().len();
        let mut map = vec![vec![(usize::MAX, 0.0); reference.dim()]; npatch];
        let mut supports: Vec<Vec<(usize, usize, f64)>> = Vec::new();
        for k in 0..npatch {
            for local in 0..reference.dim() {
                if map[k][local].0 != usize::MAX {
                    continue;
                }
                let g = supports.len();
                match reference.edge_of(local) {
                    None => {
                        map[k][local] = (g, 1.0);
                        supports.push(vec![(k, local, 1.0)]);
                    }
                    Some((edge, j)) => {
                        let (other, reversed) = geometry
                            .partner(EdgeRef { patch: k, edge })
                            .ok_or_else(|| Error::Geometry(format!("{edge:?} edge of patch {k} is unmatched")))?;
                        let jo = if reversed { nq - 1 - j } else { j };
                        let lo = reference.edge_functions(other.edge)[jo];
                        if map[other.patch][lo].0 != usize::MAX {
                            return Err(Error::Geometry(format!(
                                "a basis function on patch {} would be shared by more than two patches (unsupported)",
                                other.patch
                            )));
                        }
                        // flux leaves the lower-index patch and enters the higher one
                        let (lower, lower_edge, lower_local, upper, upper_edge, upper_local) = if k <= other.patch {
                            (k, edge, local, other.patch, other.edge, lo)
                        } else {
                            (other.patch, other.edge, lo, k, edge, local)
                        };
                        let s_lower = lower_edge.outward_sign();
                        let s_upper = -upper_edge.outward_sign();
                        map[lower][lower_local] = (g, s_lower);
                        map[upper][upper_local] = (g, s_upper);
                        supports.push(vec![(lower, lower_local, s_lower), (upper, upper_local, s_upper)]);
                    }
                }
            }
        }
        Ok(Self {
            geometry,
            reference,
            map,
            supports,
        })
    }

    pub fn dim(&self) -> usize {
        self.supports.len()
    }

    pub fn geometry(&self) -> &MultipatchGeometry {
        &self.geometry
    }

    pub fn reference(&self) -> &ReferenceDivSpace {
        &self.reference
    }

    pub fn degree(&self) -> usize {
        self.reference.degree()
    }

    pub fn level(&self) -> u32 {
        self.reference.level()
    }

    /// Global index and sign of a patch-local function.
    pub fn dof(&self, patch: usize, local: usize) -> (usize, f64) {
        self.map[patch][local]
    }

    /// Patch-local pieces `(patch, local, sign)` of a global function.
    pub fn support(&self, global: usize) -> &[(usize, usize, f64)] {
        &self.supports[global]
    }

    pub fn cells(&self) -> Vec<Cell> {
        let n = self.reference.cells_per_direction();
        let mut out = Vec::with_capacity(self.geometry.patches().len() * n * n);
        for patch in 0..self.geometry.patches().len() {
            for c1 in 0..n {
                for c2 in 0..n {
                    out.push(Cell { patch, c1, c2 });
                }
            }
        }
        out
    }

    /// `(global, sign)` of the cell's functions in [`ReferenceDivSpace::eval_cell`] order.
    pub fn cell_dofs(&self, cell: Cell) -> Vec<(usize, f64)> {
        self.reference
            .cell_functions(cell.c1, cell.c2)
            .into_iter()
            .map(|l| self.map[cell.patch][l])
            .collect()
    }

    /// Physical surface current of global function `global` on `patch` at
    /// parameter `x`; zero if the function has no support there.
    pub fn eval_basis_current(&self, global: usize, patch: usize, x: [f64; 2]) -> Result<TangentialCurrentSample> {
        if global >= self.dim() {
            return Err(Error::Usage(format!("basis index {global} out of range 0..{}", self.dim())));
        }
        let frame = self.geometry.frame(patch, x[0], x[1])?;
        let mut v = [0.0; 2];
        let mut div = 0.0;
        for &(k, local, sign) in &self.supports[global] {
            if k == patch {
                let (vl, dl) = self.reference.eval(local, x)?;
                v[0] += sign * vl[0];
                v[1] += sign * vl[1];
                div += sign * dl;
            }
        }
        Ok(TangentialCurrentSample {
            value: frame.push_forward(v) / frame.measure,
            divergence: div / frame.measure,
            reference_value: v,
            reference_divergence: div,
        })
    }

    /// Current `Σ c_i j_i` and its surface divergence on `patch` at `x`.
    pub fn eval_current(&self, coefficients: &[Complex64], patch: usize, x: [f64; 2]) -> Result<([Complex64; 3], Complex64, SurfaceFrame)> {
        let frame = self.geometry.frame(patch, x[0], x[1])?;
        let n = self.reference.cells_per_direction();
        let c1 = ((x[0] * n as f64) as usize).min(n - 1);
        let c2 = ((x[1] * n as f64) as usize).min(n - 1);
        let t = [x[0] * n as f64 - c1 as f64, x[1] * n as f64 - c2 as f64];
        let mut vals = CellValues::zeroed();
        self.reference.eval_cell(c1, c2, t, &mut vals);
        let mut v = [Complex64::new(0.0, 0.0); 2];
        let mut div = Complex64::new(0.0, 0.0);
        for (a, (g, s)) in self.cell_dofs(Cell { patch, c1, c2 }).into_iter().enumerate() {
            let c = coefficients[g] * s;
            v[0] += c * vals.values[a][0];
            v[1] += c * vals.values[a][1];
            div += c * vals.divs[a];
        }
        let [d1, d2] = frame.jacobian;
        let e = frame.measure;
        let j = [0, 1, 2].map(|i| (v[0] * d1[i] + v[1] * d2[i]) / e);
        Ok((j, div / e, frame))
    }

    /// Normal-flux continuity check at 17 points of every interface.
    pub fn interface_trace_check(&self) -> Result<TraceReport> {
        let nq = self.reference.n_q();
        let mut out = Vec::with_capacity(self.geometry.interfaces().len());
        for iface in self.geometry.interfaces() {
            let mut worst: f64 = 0.0;
            for j in 0..nq {
                let la = self.reference.edge_functions(iface.a.edge)[j];
                let (g, _) = self.map[iface.a.patch][la];
                for k in 0..17 {
                    let t = k as f64 / 16.0;
                    let tb = if iface.reversed { 1.0 - t } else { t };
                    let fa = self.outward_flux(g, iface.a, t)?;
                    let fb = self.outward_flux(g, iface.b, tb)?;
                    worst = worst.max((fa + fb).abs());
                }
            }
            out.push((*iface, worst));
        }
        Ok(TraceReport { interfaces: out })
    }

    /// Flux of a global function out of `edge.patch` through its edge, per
    /// unit edge parameter, computed from the physical current.
    fn outward_flux(&self, global: usize, edge: EdgeRef, t: f64) -> Result<f64> {
        let x = edge.edge.point(t);
        let sample = self.eval_basis_current(global, edge.patch, x)?;
        let frame = self.geometry.frame(edge.patch, x[0], x[1])?;
        let along = frame.jacobian[1 - edge.edge.normal_component()];
        let across = frame.jacobian[edge.edge.normal_component()] * edge.edge.outward_sign();
        let mut conormal = along.cross(&frame.normal).normalize();
        if conormal.dot(&across) < 0.0 {
            conormal = -conormal;
        }
        Ok(sample.value.dot(&conormal) * along.norm())
    }

    #[cfg(test)]
    pub(crate) fn flip_sign_for_test(&mut self, patch: usize, local: usize) {
        let (g, s) = self.map[patch][local];
        self.map[patch][local] = (g, -s);
        for piece in &mut self.supports[g] {
            if piece.0 == patch && piece.1 == local {
                piece.2 = -piece.2;
            }
        }
    }
}

impl CellValues {
    pub fn zeroed() -> Self {
        Self {
            values: [[0.0; 2]; 2 * MAXP * MAXP],
            divs: [0.0; 2 * MAXP * MAXP],
        }
    }
}
