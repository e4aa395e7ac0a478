//! Multipatch NURBS surfaces: evaluation, interface detection and validation.

mod builtin;
mod io;
mod patch;

pub use builtin::{builtin_geometry, cube, sphere};
pub use io::{load_geometry, parse_geometry, write_geometry};
pub use patch::{NurbsPatch, SurfaceFrame, Vec3};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Local edge of the parameter square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Edge {
    /// `x2 = 0`, parametrised by `(t, 0)`
    South,
    /// `x1 = 1`, parametrised by `(1, t)`
    East,
    /// `x2 = 1`, parametrised by `(t, 1)`
    North,
    /// `x1 = 0`, parametrised by `(0, t)`
    West,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::South, Edge::East, Edge::North, Edge::West];

    /// Parameter point at edge coordinate `t`.
    pub fn point(self, t: f64) -> [f64; 2] {
        match self {
            Edge::South => [t, 0.0],
            Edge::East => [1.0, t],
            Edge::North => [t, 1.0],
            Edge::West => [0.0, t],
        }
    }

    /// Sign of the edge direction relative to the counter-clockwise boundary loop.
    pub fn loop_sign(self) -> f64 {
        match self {
            Edge::South | Edge::East => 1.0,
            Edge::North | Edge::West => -1.0,
        }
    }

    /// Sign of the outward reference normal component (`-1` for South/West).
    pub fn outward_sign(self) -> f64 {
        match self {
            Edge::South | Edge::West => -1.0,
            Edge::East | Edge::North => 1.0,
        }
    }

    /// Reference component normal to this edge (0 for West/East, 1 for South/North).
    pub fn normal_component(self) -> usize {
        match self {
            Edge::West | Edge::East => 0,
            Edge::South | Edge::North => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeRef {
    pub patch: usize,
    pub edge: Edge,
}

/// Two patch edges identified with each other. When `reversed` is set,
/// `a` at edge coordinate `t` meets `b` at `1 - t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interface {
    pub a: EdgeRef,
    pub b: EdgeRef,
    pub reversed: bool,
    /// Largest point mismatch over the traced samples.
    pub deviation: f64,
}

const TRACE_SAMPLES: usize = 33;
const COINCIDENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct MultipatchGeometry {
    patches: Vec<NurbsPatch>,
    interfaces: Vec<Interface>,
    partner: Vec<[Option<(EdgeRef, bool)>; 4]>,
}

/// Per-patch numbers printed by geometry validation.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSummary {
    pub area: f64,
    pub min_measure: f64,
    pub max_measure: f64,
    pub degrees: (usize, usize),
    pub control_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub patches: Vec<PatchSummary>,
    pub interfaces: Vec<Interface>,
    pub area: f64,
    /// `(1/3) ∫ x·n dΓ`; positive for outward-oriented closed surfaces.
    pub enclosed_volume: f64,
    /// Largest `| |F(x)| - 1 |` over sample points.
    pub max_radial_deviation: f64,
}

impl ValidationReport {
    pub fn max_interface_deviation(&self) -> f64 {
        self.interfaces.iter().map(|i| i.deviation).fold(0.0, f64::max)
    }

    pub fn outward(&self) -> bool {
        self.enclosed_volume > 0.0
    }
}

fn edge_point(p: &NurbsPatch, e: Edge, t: f64) -> Vec3 {
    let [x, y] = e.point(t);
    p.point(x, y).expect("edge parameter lies in the unit square")
}

impl MultipatchGeometry {
    /// Builds a closed multipatch surface, inferring and checking all interfaces.
    pub fn new(patches: Vec<NurbsPatch>) -> Result<Self> {
        if patches.is_empty() {
            return Err(Error::Geometry("no patches".into()));
        }
        let diameter = bbox_diagonal(&patches);
        let edges: Vec<EdgeRef> = (0..patches.len())
            .flat_map(|patch| Edge::ALL.into_iter().map(move |edge| EdgeRef { patch, edge }))
            .collect();
        let probes = [0.0, 0.5, 1.0];
        let samples: Vec<[Vec3; 3]> = edges
            .iter()
            .map(|r| probes.map(|t| edge_point(&patches[r.patch], r.edge, t)))
            .collect();

        // best partner candidate per edge from three probe points
        let mut best: Vec<(usize, bool, f64)> = Vec::with_capacity(edges.len());
        for (i, si) in samples.iter().enumerate() {
            let mut cand = (usize::MAX, false, f64::INFINITY);
            for (j, sj) in samples.iter().enumerate() {
                if i == j {
                    continue;
                }
                let fwd = (0..3).map(|k| (si[k] - sj[k]).norm()).fold(0.0, f64::max);
                let rev = (0..3).map(|k| (si[k] - sj[2 - k]).norm()).fold(0.0, f64::max);
                let (d, r) = if rev < fwd { (rev, true) } else { (fwd, false) };
                if d < cand.2 {
                    cand = (j, r, d);
                }
            }
            if cand.2 > 0.05 * diameter {
                return Err(Error::Geometry(format!(
                    "{:?} edge of patch {} has no matching edge; the surface is not closed",
                    edges[i].edge, edges[i].patch
                )));
            }
            best.push(cand);
        }

        let mut interfaces = Vec::new();
        let mut partner = vec![[None; 4]; patches.len()];
        for (i, &(j, reversed, _)) in best.iter().enumerate() {
            let (a, b) = (edges[i], edges[j]);
            if best[j].0 != i {
                return Err(Error::Geometry(format!(
                    "{:?} edge of patch {} is shared by more than two patch edges (unsupported)",
                    b.edge, b.patch
                )));
            }
            partner[a.patch][a.edge as usize] = Some((b, reversed));
            if j < i {
                continue;
            }
            let pa = &patches[a.patch];
            let pb = &patches[b.patch];
            let mut deviation: f64 = 0.0;
            for k in 0..TRACE_SAMPLES {
                let t = k as f64 / (TRACE_SAMPLES - 1) as f64;
                let tb = if reversed { 1.0 - t } else { t };
                let d = (edge_point(pa, a.edge, t) - edge_point(pb, b.edge, tb)).norm();
                deviation = deviation.max(d);
            }
            if !(deviation <= COINCIDENCE_TOL) {
                return Err(Error::InterfaceMismatch {
                    patch_a: a.patch,
                    patch_b: b.patch,
                    deviation,
                });
            }
            let orient = a.edge.loop_sign() * b.edge.loop_sign() * if reversed { -1.0 } else { 1.0 };
            if orient > 0.0 {
                return Err(Error::Geometry(format!(
                    "patches {} and {} have inconsistent orientation along their shared edge",
                    a.patch, b.patch
                )));
            }
            interfaces.push(Interface {
                a,
                b,
                reversed,
                deviation,
            });
        }
        Ok(Self {
            patches,
            interfaces,
            partner,
        })
    }

    pub fn patches(&self) -> &[NurbsPatch] {
        &self.patches
    }

    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    /// Edge glued to `edge` and whether the identification reverses direction.
    pub fn partner(&self, edge: EdgeRef) -> Option<(EdgeRef, bool)> {
        self.partner[edge.patch][edge.edge as usize]
    }

    /// Surface frame of patch `patch` at parameter `(x, y)`.
    pub fn frame(&self, patch: usize, x: f64, y: f64) -> Result<SurfaceFrame> {
        self.patches[patch].eval(x, y).map_err(|e| match e {
            Error::DegenerateJacobian { u, v, measure, .. } => Error::DegenerateJacobian {
                patch,
                u,
                v,
                measure,
            },
            e => e,
        })
    }

    /// Length of the control-point bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        bbox_diagonal(&self.patches)
    }

    /// Integrates `f(frame) * measure` over every patch with a `d`-point Gauss
    /// rule on each cell of a uniform `2^m x 2^m` grid.
    pub fn integrate<F: FnMut(usize, &SurfaceFrame) -> f64>(&self, m: u32, d: usize, mut f: F) -> Result<f64> {
        let mut total = 0.0;
        self.integrate_weighted(m, d, |k, w, fr| total += w * f(k, fr))?;
        Ok(total)
    }

    /// Visits every quadrature node with its weight including the surface measure.
    fn integrate_weighted<F: FnMut(usize, f64, &SurfaceFrame)>(&self, m: u32, d: usize, mut f: F) -> Result<()> {
        let (nodes, weights) = gauss_legendre(d);
        let cells = 1usize << m;
        let h = 1.0 / cells as f64;
        for k in 0..self.patches.len() {
            for c1 in 0..cells {
                for c2 in 0..cells {
                    for (g1, w1) in nodes.iter().zip(&weights) {
                        for (g2, w2) in nodes.iter().zip(&weights) {
                            let fr = self.frame(k, (c1 as f64 + g1) * h, (c2 as f64 + g2) * h)?;
                            f(k, w1 * w2 * h * h * fr.measure, &fr);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn area(&self) -> Result<f64> {
        self.integrate(2, 10, |_, _| 1.0)
    }

    /// Runs interface, orientation and sampling checks.
    pub fn validate(&self) -> Result<ValidationReport> {
        let mut summaries = Vec::with_capacity(self.patches.len());
        let mut radial: f64 = 0.0;
        let n = 21;
        for (k, p) in self.patches.iter().enumerate() {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for i in 0..n {
                for j in 0..n {
                    let fr = self.frame(k, i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64)?;
                    lo = lo.min(fr.measure);
                    hi = hi.max(fr.measure);
                    radial = radial.max((fr.point.norm() - 1.0).abs());
                }
            }
            summaries.push(PatchSummary {
                area: 0.0,
                min_measure: lo,
                max_measure: hi,
                degrees: (p.basis_u().degree(), p.basis_v().degree()),
                control_points: p.control_points().len(),
            });
        }
        let mut areas = vec![0.0; self.patches.len()];
        self.integrate_weighted(2, 10, |k, w, _| areas[k] += w)?;
        for (s, a) in summaries.iter_mut().zip(&areas) {
            s.area = *a;
        }
        let area = areas.iter().sum();
        let enclosed_volume = self.integrate(2, 10, |_, fr| fr.point.dot(&fr.normal) / 3.0)?;
        if enclosed_volume <= 0.0 {
            return Err(Error::Geometry(format!(
                "surface normals point inward (enclosed volume {enclosed_volume:e})"
            )));
        }
        Ok(ValidationReport {
            patches: summaries,
            interfaces: self.interfaces.clone(),
            area,
            enclosed_volume,
            max_radial_deviation: radial,
        })
    }
}

fn bbox_diagonal(patches: &[NurbsPatch]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in patches {
        for c in p.control_points() {
            lo = lo.inf(c);
            hi = hi.sup(c);
        }
    }
    (hi - lo).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn cube_interfaces_and_area() {
        let g = cube();
        assert_eq!(g.patches().len(), 6);
        assert_eq!(g.interfaces().len(), 12);
        assert!(g.interfaces().iter().all(|i| i.deviation <= 1e-15));
        assert_abs_diff_eq!(g.area().unwrap(), 6.0, epsilon = 1e-12);
        let r = g.validate().unwrap();
        assert_abs_diff_eq!(r.enclosed_volume, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cube_face_center_and_constant_jacobian() {
        let g = cube();
        for k in 0..6 {
            let c = g.frame(k, 0.5, 0.5).unwrap();
            // barycenter of a unit-cube face: two coordinates 0.5, one 0 or 1
            let halves = c.point.iter().filter(|v| (**v - 0.5).abs() < 1e-15).count();
            assert_eq!(halves, 2);
            for (x, y) in [(0.0, 0.0), (0.2, 0.9), (1.0, 0.3)] {
                let f = g.frame(k, x, y).unwrap();
                assert_abs_diff_eq!(f.jacobian[0], c.jacobian[0], epsilon = 1e-15);
                assert_abs_diff_eq!(f.jacobian[1], c.jacobian[1], epsilon = 1e-15);
                assert_abs_diff_eq!(f.measure, 1.0, epsilon = 1e-15);
                // outward: normal points away from the cube center
                let centre = Vec3::new(0.5, 0.5, 0.5);
                assert!((f.point - centre).dot(&f.normal) > 0.0);
            }
        }
    }

    #[test]
    fn sphere_area_and_interfaces() {
        let g = sphere();
        assert_eq!(g.interfaces().len(), 12);
        assert!(g.interfaces().iter().all(|i| i.deviation <= 1e-13));
        assert_abs_diff_eq!(g.area().unwrap(), 4.0 * PI, epsilon = 1e-8);
        let r = g.validate().unwrap();
        assert!(r.max_radial_deviation <= 1e-13);
        assert_abs_diff_eq!(r.enclosed_volume, 4.0 * PI / 3.0, epsilon = 1e-8);
        for s in &r.patches {
            assert_abs_diff_eq!(s.area, 2.0 * PI / 3.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn flipped_patch_is_rejected() {
        let mut patches = cube().patches().to_vec();
        let p = &patches[0];
        // swap parameter directions, which reverses the normal
        let n = 2;
        let pts: Vec<Vec3> = (0..4).map(|i| p.control_points()[(i % n) * n + i / n]).collect();
        patches[0] = NurbsPatch::new(1, vec![0., 0., 1., 1.], 1, vec![0., 0., 1., 1.], pts, vec![1.0; 4]).unwrap();
        assert!(matches!(MultipatchGeometry::new(patches), Err(Error::Geometry(_))));
    }

    #[test]
    fn gap_is_reported_with_patch_pair() {
        let mut patches = cube().patches().to_vec();
        let p = &patches[2];
        let pts: Vec<Vec3> = p.control_points().iter().map(|c| c + Vec3::new(1e-3, 0.0, 0.0)).collect();
        patches[2] = NurbsPatch::new(1, vec![0., 0., 1., 1.], 1, vec![0., 0., 1., 1.], pts, vec![1.0; 4]).unwrap();
        match MultipatchGeometry::new(patches) {
            Err(Error::InterfaceMismatch { patch_a, patch_b, deviation }) => {
                assert!(patch_a == 2 || patch_b == 2);
                assert!(deviation > 1e-4);
            }
            other => panic!("expected interface mismatch, got {other:?}"),
        }
    }

    #[test]
    fn open_surface_is_rejected() {
        let patches = cube().patches()[..5].to_vec();
        assert!(matches!(MultipatchGeometry::new(patches), Err(Error::Geometry(_))));
    }

    #[test]
    fn partners_are_symmetric() {
        for g in [cube(), sphere()] {
            for k in 0..6 {
                for e in Edge::ALL {
                    let r = EdgeRef { patch: k, edge: e };
                    let (o, rev) = g.partner(r).unwrap();
                    assert_ne!(o.patch, k);
                    assert_eq!(g.partner(o), Some((r, rev)));
                }
            }
        }
    }
}
