use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::splines::{KnotVector, SplineBasis};

pub type Vec3 = Vector3<f64>;

const MAXP: usize = 16;

/// Tensor-product NURBS surface `F: [0,1]^2 -> R^3`.
///
/// Control points are stored row-major with the second index fastest:
/// `points[j1 * n2 + j2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NurbsPatch {
    basis_u: SplineBasis,
    basis_v: SplineBasis,
    points: Vec<Vec3>,
    weights: Vec<f64>,
}

/// Point, Jacobian columns, unit normal and surface measure at a parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceFrame {
    pub point: Vec3,
    /// `[dF/dx1, dF/dx2]`
    pub jacobian: [Vec3; 2],
    pub normal: Vec3,
    /// `|dF/dx1 x dF/dx2|`
    pub measure: f64,
}

impl SurfaceFrame {
    /// Push a reference-domain vector forward to the tangent plane: `dF v`.
    #[inline]
    pub fn push_forward(&self, v: [f64; 2]) -> Vec3 {
        self.jacobian[0] * v[0] + self.jacobian[1] * v[1]
    }
}

impl NurbsPatch {
    pub fn new(
        degree_u: usize,
        knots_u: Vec<f64>,
        degree_v: usize,
        knots_v: Vec<f64>,
        points: Vec<Vec3>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if degree_u >= MAXP || degree_v >= MAXP {
            return Err(Error::Geometry(format!(
                "patch degrees ({degree_u}, {degree_v}) exceed the supported maximum {}",
                MAXP - 1
            )));
        }
        let basis_u = SplineBasis::new(KnotVector::open(degree_u, knots_u)?);
        let basis_v = SplineBasis::new(KnotVector::open(degree_v, knots_v)?);
        let n = basis_u.dim() * basis_v.dim();
        if points.len() != n || weights.len() != n {
            return Err(Error::Geometry(format!(
                "control net has {} points and {} weights, knot vectors need {}x{} = {n}",
                points.len(),
                weights.len(),
                basis_u.dim(),
                basis_v.dim()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Geometry(format!("weight {w} is not strictly positive")));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Geometry("control point with non-finite coordinate".into()));
        }
        Ok(Self {
            basis_u,
            basis_v,
            points,
            weights,
        })
    }

    /// Bilinear patch through four corners `F(0,0), F(1,0), F(0,1), F(1,1)`.
    pub fn bilinear(c00: Vec3, c10: Vec3, c01: Vec3, c11: Vec3) -> Self {
        let k = vec![0.0, 0.0, 1.0, 1.0];
        Self::new(1, k.clone(), 1, k, vec![c00, c01, c10, c11], vec![1.0; 4])
            .expect("bilinear patch data is consistent")
    }

    pub fn basis_u(&self) -> &SplineBasis {
        &self.basis_u
    }

    pub fn basis_v(&self) -> &SplineBasis {
        &self.basis_v
    }

    pub fn control_points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Evaluates the parametrisation with exact rational derivatives.
    pub fn eval(&self, x: f64, y: f64) -> Result<SurfaceFrame> {
        let frame = self.eval_raw(x, y)?;
        if !(frame.measure >= 1e-14) {
            return Err(Error::DegenerateJacobian {
                patch: 0,
                u: x,
                v: y,
                measure: frame.measure,
            });
        }
        Ok(frame)
    }

    /// Like [`eval`](Self::eval) but without the degeneracy check; the
    /// normal is left as zero when the measure vanishes.
    pub fn eval_raw(&self, x: f64, y: f64) -> Result<SurfaceFrame> {
        let su = self.basis_u.knot_vector().find_span(x)?;
        let sv = self.basis_v.knot_vector().find_span(y)?;
        let (pu, pv) = (self.basis_u.degree(), self.basis_v.degree());
        let mut nu = [0.0; MAXP];
        let mut du = [0.0; MAXP];
        let mut nv = [0.0; MAXP];
        let mut dv = [0.0; MAXP];
        self.basis_u.eval_span(su, x, &mut nu, &mut du);
        self.basis_v.eval_span(sv, y, &mut nv, &mut dv);

        let n2 = self.basis_v.dim();
        // homogeneous sums A = sum w c N, W = sum w N and their partials
        let mut a = Vec3::zeros();
        let mut a_u = Vec3::zeros();
        let mut a_v = Vec3::zeros();
        let (mut w, mut w_u, mut w_v) = (0.0, 0.0, 0.0);
        for r in 0..=pu {
            let j1 = su - pu + r;
            for s in 0..=pv {
                let j2 = sv - pv + s;
                let idx = j1 * n2 + j2;
                let wt = self.weights[idx];
                let c = &self.points[idx];
                let b = nu[r] * nv[s] * wt;
                let bu = du[r] * nv[s] * wt;
                let bv = nu[r] * dv[s] * wt;
                a += c * b;
                a_u += c * bu;
                a_v += c * bv;
                w += b;
                w_u += bu;
                w_v += bv;
            }
        }
        let point = a / w;
        let d1 = (a_u - point * w_u) / w;
        let d2 = (a_v - point * w_v) / w;
        let cross = d1.cross(&d2);
        let measure = cross.norm();
        let normal = if measure > 0.0 { cross / measure } else { Vec3::zeros() };
        Ok(SurfaceFrame {
            point,
            jacobian: [d1, d2],
            normal,
            measure,
        })
    }

    pub fn point(&self, x: f64, y: f64) -> Result<Vec3> {
        Ok(self.eval_raw(x, y)?.point)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flat() -> NurbsPatch {
        NurbsPatch::bilinear(
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        )
    }

    #[test]
    fn flat_square_frame() {
        let p = flat();
        for (x, y) in [(0.0, 0.0), (0.3, 0.7), (1.0, 1.0)] {
            let f = p.eval(x, y).unwrap();
            assert_abs_diff_eq!(f.measure, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(f.normal.z.abs(), 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(f.point, Vec3::new(x, y, 0.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn degenerate_patch_is_rejected() {
        let c = Vec3::new(1.0, 2.0, 3.0);
        let p = NurbsPatch::bilinear(c, c, Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.0));
        assert!(matches!(p.eval(0.0, 0.0), Err(Error::DegenerateJacobian { .. })));
    }

    #[test]
    fn rejects_bad_weights() {
        let k = vec![0.0, 0.0, 1.0, 1.0];
        let pts = vec![Vec3::zeros(); 4];
        let r = NurbsPatch::new(1, k.clone(), 1, k, pts, vec![1.0, -1.0, 1.0, 1.0]);
        assert!(matches!(r, Err(Error::Geometry(_))));
    }

    #[test]
    fn rational_quarter_circle_cylinder() {
        // quarter circle in (x, z) as a rational quadratic, extruded linearly in y
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let pts = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(1.0, 0.0, 1.0),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 1.0, 1.0),
        ];
        let w = vec![1.0, 1.0, s, s, 1.0, 1.0];
        let p = NurbsPatch::new(2, vec![0., 0., 0., 1., 1., 1.], 1, vec![0., 0., 1., 1.], pts, w).unwrap();
        let h = 1e-6;
        for (x, y) in [(0.1, 0.2), (0.5, 0.5), (0.9, 0.3)] {
            let f = p.eval(x, y).unwrap();
            assert_abs_diff_eq!((f.point.x.powi(2) + f.point.z.powi(2)).sqrt(), 1.0, epsilon = 1e-14);
            let fd = (p.point(x + h, y).unwrap() - p.point(x - h, y).unwrap()) / (2.0 * h);
            assert!((fd - f.jacobian[0]).norm() <= 1e-5 * f.jacobian[0].norm());
            let fd = (p.point(x, y + h).unwrap() - p.point(x, y - h).unwrap()) / (2.0 * h);
            assert!((fd - f.jacobian[1]).norm() <= 1e-5 * f.jacobian[1].norm());
        }
    }
}
