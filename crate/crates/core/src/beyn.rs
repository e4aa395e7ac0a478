//! Contour integral method for holomorphic matrix eigenvalue problems
//! `T(z) v = 0` with eigenvalues inside an ellipse.
//!
//! Two moments of `T^-1 V` are approximated by the trapezoidal rule on the
//! contour, their rank reveals the number of enclosed eigenvalues, and a
//! small linear eigenproblem recovers eigenvalues and eigenvectors.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::densela::{eig, svd, CMatrix, LuFactorization};
use crate::efie::Assembler;
use crate::error::{Error, Result};

/// A matrix-valued function, evaluated a batch of points at a time.
pub trait MatrixFunction {
    fn dim(&self) -> usize;
    fn eval_many(&self, z: &[Complex64]) -> Result<Vec<CMatrix>>;
}

impl MatrixFunction for Assembler<'_> {
    fn dim(&self) -> usize {
        self.space().dim()
    }

    fn eval_many(&self, z: &[Complex64]) -> Result<Vec<CMatrix>> {
        self.assemble_many(z)
    }
}

/// Wraps a closure `z -> T(z)`.
pub struct FnMatrix<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(Complex64) -> CMatrix> FnMatrix<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(Complex64) -> CMatrix> MatrixFunction for FnMatrix<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_many(&self, z: &[Complex64]) -> Result<Vec<CMatrix>> {
        Ok(z.iter().map(|z| (self.f)(*z)).collect())
    }
}

/// `φ(t) = center + a sin t + i b cos t`, sampled at `t_j = 2πj/N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticContour {
    pub center: Complex64,
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl EllipticContour {
    pub fn new(center: Complex64, a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) || !center.is_finite() {
            return Err(Error::Usage(format!("contour semi-axes must be positive, got a={a}, b={b}")));
        }
        if n < 2 {
            return Err(Error::Usage(format!("contour needs at least 2 nodes, got {n}")));
        }
        Ok(Self { center, a, b, n })
    }

    pub fn circle(center: Complex64, radius: f64, n: usize) -> Result<Self> {
        Self::new(center, radius, radius, n)
    }

    fn t(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * j as f64 / self.n as f64
    }

    pub fn point(&self, j: usize) -> Complex64 {
        let t = self.t(j);
        self.center + Complex64::new(self.a * t.sin(), self.b * t.cos())
    }

    pub fn derivative(&self, j: usize) -> Complex64 {
        let t = self.t(j);
        Complex64::new(self.a * t.cos(), -self.b * t.sin())
    }

    pub fn nodes(&self) -> Vec<Complex64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    /// Strictly inside the ellipse.
    pub fn contains(&self, z: Complex64) -> bool {
        let d = z - self.center;
        (d.re / self.a).powi(2) + (d.im / self.b).powi(2) < 1.0
    }

    /// Trapezoidal weight of node `j` for `(1/2πi)∮ f dz` taken
    /// counter-clockwise; the parametrisation itself runs clockwise.
    fn weight(&self, j: usize) -> Complex64 {
        -self.derivative(j) / Complex64::new(0.0, self.n as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeynConfig {
    /// Initial number of probe columns.
    pub ell: usize,
    /// Largest number of probe columns before giving up (capped at the
    /// matrix dimension).
    pub max_ell: usize,
    /// Singular values above `delta` times the summed norms of the
    /// trapezoid terms count towards the rank.
    pub delta: f64,
    /// Accepted residual `|T(λ)v| / (τ |v|)`, with `τ` the largest
    /// Frobenius norm of `T` at the contour nodes.
    pub residual_tol: f64,
    pub seed: u64,
    /// Contour nodes evaluated per call of [`MatrixFunction::eval_many`].
    pub batch: usize,
}

impl Default for BeynConfig {
    fn default() -> Self {
        Self {
            ell: 10,
            max_ell: 200,
            delta: 1e-8,
            residual_tol: 1e-6,
            seed: 0,
            batch: 25,
        }
    }
}

impl BeynConfig {
    fn check(&self, dim: usize) -> Result<()> {
        if self.ell == 0 || self.ell > dim {
            return Err(Error::Usage(format!("probe count {} outside 1..={dim}", self.ell)));
        }
        if self.max_ell < self.ell {
            return Err(Error::Usage(format!("maximum probe count {} below initial {}", self.max_ell, self.ell)));
        }
        if !(self.delta > 0.0) || !(self.residual_tol > 0.0) || self.batch == 0 {
            return Err(Error::Usage("delta, residual tolerance and batch must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BeynResult {
    pub eigenvalues: Vec<Complex64>,
    /// Unit eigenvectors, one column per eigenvalue.
    pub eigenvectors: CMatrix,
    pub residuals: Vec<f64>,
    /// Singular values of the zeroth moment, descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub probes: usize,
    pub nodes: usize,
    pub seed: u64,
    /// Candidates dropped by the filter, with their residuals.
    pub rejected: Vec<(Complex64, f64)>,
}

/// Cached factorisations of `T` at the contour nodes.
pub struct ContourFactorization {
    contour: EllipticContour,
    lus: Vec<LuFactorization>,
    dim: usize,
    /// largest `|T(z_j)|_F` over the nodes
    scale: f64,
}

const PIVOT_TOL: f64 = 1e-13;

impl ContourFactorization {
    pub fn new<T: MatrixFunction + ?Sized>(t: &T, contour: &EllipticContour, batch: usize) -> Result<Self> {
        let nodes = contour.nodes();
        let mut lus = Vec::with_capacity(nodes.len());
        let mut norm: f64 = 0.0;
        for zs in nodes.chunks(batch.max(1)) {
            for (z, m) in zs.iter().zip(t.eval_many(zs)?) {
                norm = norm.max(m.norm());
                match LuFactorization::new(m) {
                    Ok(lu) => lus.push(lu),
                    Err(Error::Singular { magnitude, .. }) => {
                        return Err(Error::ContourTouchesSpectrum { z: *z, pivot: magnitude })
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        // pivots are compared across all nodes, so a node where T is much
        // smaller than elsewhere on the contour also counts as touching
        let scale = lus.iter().map(|lu| lu.max_pivot()).fold(0.0, f64::max);
        for (z, lu) in nodes.iter().zip(&lus) {
            let (_, pivot) = lu.min_pivot();
            if pivot <= PIVOT_TOL * scale {
                return Err(Error::ContourTouchesSpectrum { z: *z, pivot });
            }
        }
        Ok(Self {
            contour: *contour,
            lus,
            dim: t.dim(),
            scale: norm,
        })
    }

    /// `(A0, A1, S)` for the probe block, where `S` is the sum of the
    /// norms of the trapezoid summands of `A0`, a bound for its size.
    pub fn moments(&self, probe: &CMatrix) -> Result<(CMatrix, CMatrix, f64)> {
        let mut a0 = CMatrix::zeros(self.dim, probe.ncols());
        let mut a1 = a0.clone();
        let mut s: f64 = 0.0;
        for (j, lu) in self.lus.iter().enumerate() {
            let x = lu.solve(probe)? * self.contour.weight(j);
            s += x.norm();
            a1 += &x * self.contour.point(j);
            a0 += x;
        }
        Ok((a0, a1, s))
    }
}

/// Zeroth and first contour moments of `T^-1 probe`.
pub fn moments<T: MatrixFunction + ?Sized>(t: &T, contour: &EllipticContour, probe: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let f = ContourFactorization::new(t, contour, contour.n)?;
    let (a0, a1, _) = f.moments(probe)?;
    Ok((a0, a1))
}

/// Seeded uniform complex probe; column `j` depends only on the seed and
/// `j`, so growing the block keeps earlier columns.
pub fn probe_matrix(dim: usize, cols: usize, seed: u64) -> CMatrix {
    let mut m = CMatrix::zeros(dim, cols);
    for j in 0..cols {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        for i in 0..dim {
            m[(i, j)] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    m
}

fn rank(sigma: &[f64], delta: f64, scale: f64) -> usize {
    sigma.iter().take_while(|s| **s > delta * scale).count()
}

/// Number of eigenvalues inside the contour as seen by the rank of `A0`.
pub fn estimate_count<T: MatrixFunction + ?Sized>(t: &T, contour: &EllipticContour, config: &BeynConfig) -> Result<usize> {
    config.check(t.dim())?;
    let f = ContourFactorization::new(t, contour, config.batch)?;
    let (a0, _, s) = f.moments(&probe_matrix(t.dim(), config.ell, config.seed))?;
    Ok(rank(&svd(&a0)?.sigma, config.delta, s))
}

pub fn solve<T: MatrixFunction + ?Sized>(t: &T, contour: &EllipticContour, config: &BeynConfig) -> Result<BeynResult> {
    let dim = t.dim();
    config.check(dim)?;
    let max_ell = config.max_ell.min(dim);
    let f = ContourFactorization::new(t, contour, config.batch)?;
    let mut ell = config.ell;
    let (a1, sv, k) = loop {
        let probe = probe_matrix(dim, ell, config.seed);
        let ps = svd(&probe)?.sigma;
        if ps[ps.len() - 1] <= 1e-10 * ps[0] {
            return Err(Error::Numerical("probe matrix is rank deficient".into()));
        }
        let (a0, a1, s) = f.moments(&probe)?;
        let sv = svd(&a0)?;
        let k = rank(&sv.sigma, config.delta, s);
        // k = ell may hide further eigenvalues unless the probe already
        // spans the whole space
        if k < ell || ell == dim {
            break (a1, sv, k);
        }
        if ell >= max_ell {
            return Err(Error::RankOverflow { probes: ell, max: max_ell });
        }
        ell = (2 * ell).min(max_ell);
    };
    let mut result = BeynResult {
        eigenvalues: Vec::new(),
        eigenvectors: CMatrix::zeros(dim, 0),
        residuals: Vec::new(),
        singular_values: sv.sigma.clone(),
        rank: k,
        probes: ell,
        nodes: contour.n,
        seed: config.seed,
        rejected: Vec::new(),
    };
    if k == 0 {
        return Ok(result);
    }
    let v0 = sv.u.columns(0, k).into_owned();
    let w0 = sv.v_h.rows(0, k).adjoint();
    let sinv = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        k,
        sv.sigma[..k].iter().map(|s| Complex64::new(1.0 / s, 0.0)),
    ));
    let b = v0.adjoint() * a1 * w0 * sinv;
    let e = eig(&b)?;
    let vecs = &v0 * &e.vectors;
    let mut cands: Vec<usize> = (0..k).filter(|&i| e.values[i].is_finite()).collect();
    cands.sort_by(|&i, &j| e.values[i].re.total_cmp(&e.values[j].re).then(e.values[i].im.total_cmp(&e.values[j].im)));
    let inside: Vec<usize> = cands.iter().copied().filter(|&i| contour.contains(e.values[i])).collect();
    for &i in cands.iter().filter(|i| !inside.contains(i)) {
        result.rejected.push((e.values[i], f64::NAN));
    }
    let lams: Vec<Complex64> = inside.iter().map(|&i| e.values[i]).collect();
    let mut mats = Vec::with_capacity(lams.len());
    for zs in lams.chunks(config.batch) {
        mats.extend(t.eval_many(zs)?);
    }
    let mut cols = Vec::new();
    for (&i, m) in inside.iter().zip(&mats) {
        let v = vecs.column(i);
        let v = v / Complex64::new(v.norm(), 0.0);
        let r = (m * &v).norm() / f.scale;
        if r <= config.residual_tol {
            result.eigenvalues.push(e.values[i]);
            result.residuals.push(r);
            cols.push(v);
        } else {
            result.rejected.push((e.values[i], r));
        }
    }
    result.eigenvectors = if cols.is_empty() {
        CMatrix::zeros(dim, 0)
    } else {
        CMatrix::from_columns(&cols)
    };
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar(f: impl Fn(Complex64) -> Complex64) -> FnMatrix<impl Fn(Complex64) -> CMatrix> {
        FnMatrix::new(1, move |z| CMatrix::from_element(1, 1, f(z)))
    }

    fn diag(vals: Vec<f64>) -> FnMatrix<impl Fn(Complex64) -> CMatrix> {
        let n = vals.len();
        FnMatrix::new(n, move |z| {
            CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, vals.iter().map(|v| c(*v, 0.0) - z)))
        })
    }

    #[test]
    fn moments_of_simple_pole() {
        let t = scalar(|z| z - 2.0);
        let one = CMatrix::from_element(1, 1, c(1.0, 0.0));
        let (a0, a1) = moments(&t, &EllipticContour::circle(c(2.0, 0.0), 1.0, 16).unwrap(), &one).unwrap();
        assert!((a0[0] - 1.0).norm() <= 1e-12);
        assert!((a1[0] - 2.0).norm() <= 1e-12);
        // no pole inside; what remains is the aliasing of the pole at
        // distance 3, exactly -q / (1 - q) with q = 3^-16
        let (a0, _) = moments(&t, &EllipticContour::circle(c(5.0, 0.0), 1.0, 16).unwrap(), &one).unwrap();
        let q = 3f64.powi(-16);
        assert!((a0[0] + q / (1.0 - q)).norm() <= 1e-12);
    }

    #[test]
    fn moments_converge_with_nodes() {
        // pole off centre so the trapezoid error is visible
        let t = scalar(|z| z - 2.4);
        let one = CMatrix::from_element(1, 1, c(1.0, 0.0));
        let err = |n| {
            let (a0, _) = moments(&t, &EllipticContour::circle(c(2.0, 0.0), 1.0, n).unwrap(), &one).unwrap();
            (a0[0] - 1.0).norm()
        };
        let (e8, e16) = (err(8), err(16));
        assert!(e8 > 100.0 * e16, "{e8:e} {e16:e}");
    }

    #[test]
    fn touching_contour_is_reported() {
        let t = scalar(|z| z - 3.0);
        let r = solve(&t, &EllipticContour::circle(c(2.0, 0.0), 1.0, 4).unwrap(), &BeynConfig {
            ell: 1,
            ..Default::default()
        });
        assert!(matches!(r, Err(Error::ContourTouchesSpectrum { .. })));
    }

    #[test]
    fn linear_diagonal_problem() {
        let t = diag(vec![1.0, 2.0, 3.0]);
        let cfg = BeynConfig {
            ell: 2,
            ..Default::default()
        };
        let r = solve(&t, &EllipticContour::circle(c(1.0, 0.0), 0.5, 25).unwrap(), &cfg).unwrap();
        // the pole at 2 leaks into A0 at 0.5^25 > delta, and the spurious
        // candidate is removed by the filter
        assert!(r.rank >= 1);
        assert_eq!(r.eigenvalues.len(), 1);
        assert!((r.eigenvalues[0] - 1.0).norm() <= 1e-10);
        let v = r.eigenvectors.column(0);
        assert!((v[0].norm() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn quadratic_semisimple_pair() {
        let t = FnMatrix::new(2, |z: Complex64| CMatrix::identity(2, 2) * (z * z - 1.0));
        let cfg = BeynConfig {
            ell: 2,
            ..Default::default()
        };
        let r = solve(&t, &EllipticContour::new(c(1.0, 0.0), 0.5, 0.3, 25).unwrap(), &cfg).unwrap();
        assert_eq!(r.rank, 2);
        assert_eq!(r.eigenvalues.len(), 2);
        for (l, res) in r.eigenvalues.iter().zip(&r.residuals) {
            assert!((l - 1.0).norm() <= 1e-9);
            assert!(*res <= 1e-9);
        }
    }

    #[test]
    fn empty_contour_has_rank_zero() {
        let t = diag(vec![1.0, 2.0, 3.0, 4.0]);
        let cfg = BeynConfig {
            ell: 2,
            ..Default::default()
        };
        let con = EllipticContour::circle(c(100.0, 0.0), 0.5, 25).unwrap();
        assert_eq!(estimate_count(&t, &con, &cfg).unwrap(), 0);
        let r = solve(&t, &con, &cfg).unwrap();
        assert!(r.eigenvalues.is_empty());
    }

    #[test]
    fn probe_count_grows_and_overflows() {
        let vals: Vec<f64> = (0..12).map(|i| 1.0 + 0.01 * i as f64).collect();
        let t = diag(vals);
        let con = EllipticContour::circle(c(1.05, 0.0), 0.5, 40).unwrap();
        let cfg = BeynConfig {
            ell: 2,
            ..Default::default()
        };
        let r = solve(&t, &con, &cfg).unwrap();
        assert_eq!(r.eigenvalues.len(), 12);
        assert_eq!(r.probes, 12);
        let cfg = BeynConfig {
            ell: 2,
            max_ell: 4,
            ..Default::default()
        };
        let con = EllipticContour::circle(c(1.3, 0.0), 0.5, 40).unwrap();
        let t = diag((0..12).map(|i| 1.0 + 0.05 * i as f64).chain([5.0, 6.0]).collect());
        assert!(matches!(solve(&t, &con, &cfg), Err(Error::RankOverflow { probes: 4, max: 4 })));
    }

    #[test]
    fn bad_config_rejected() {
        let t = diag(vec![1.0, 2.0]);
        let con = EllipticContour::circle(c(1.0, 0.0), 0.5, 8).unwrap();
        for cfg in [
            BeynConfig { ell: 0, ..Default::default() },
            BeynConfig { ell: 3, ..Default::default() },
            BeynConfig { ell: 1, delta: 0.0, ..Default::default() },
        ] {
            assert!(matches!(solve(&t, &con, &cfg), Err(Error::Usage(_))));
        }
        assert!(EllipticContour::new(c(0.0, 0.0), -1.0, 1.0, 8).is_err());
    }

    fn nonlinear(dim: usize) -> FnMatrix<impl Fn(Complex64) -> CMatrix> {
        // T(z) = A - z I + 0.1 sin(z) B with fixed A, B
        let a = CMatrix::from_fn(dim, dim, |i, j| {
            c(if i == j { 1.0 + 0.7 * i as f64 } else { 0.05 * ((i * 7 + j * 3) % 5) as f64 }, 0.0)
        });
        let b = CMatrix::from_fn(dim, dim, |i, j| c(((i + 2 * j) % 3) as f64 * 0.3, 0.0));
        FnMatrix::new(dim, move |z: Complex64| &a - CMatrix::identity(dim, dim) * z + &b * (z.sin() * 0.1))
    }

    fn sorted(r: &BeynResult) -> Vec<Complex64> {
        let mut v = r.eigenvalues.clone();
        v.sort_by(|a, b| a.re.total_cmp(&b.re));
        v
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn invariant_under_seed_and_probe_count(seed in 0u64..1000, extra in 0usize..3) {
            let t = nonlinear(8);
            let con = EllipticContour::new(c(2.0, 0.0), 1.6, 0.5, 48).unwrap();
            let base = solve(&t, &con, &BeynConfig { ell: 4, ..Default::default() }).unwrap();
            let other = solve(&t, &con, &BeynConfig { ell: 4 + 2 * extra, seed, ..Default::default() }).unwrap();
            let (x, y) = (sorted(&base), sorted(&other));
            prop_assert!(!x.is_empty());
            prop_assert_eq!(x.len(), y.len());
            for (p, q) in x.iter().zip(&y) {
                prop_assert!((p - q).norm() <= 1e-8);
            }
            for (l, r) in other.eigenvalues.iter().zip(&other.residuals) {
                prop_assert!(con.contains(*l));
                prop_assert!(*r <= 1e-6);
            }
        }

        #[test]
        fn linear_problems_match_dense_eigensolver(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 6;
            let a = CMatrix::from_fn(n, n, |i, j| if i == j { c(i as f64, 0.0) } else { c(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)) });
            let reference: Vec<Complex64> = eig(&a).unwrap().values;
            let a2 = a.clone();
            let t = FnMatrix::new(n, move |z| &a2 - CMatrix::identity(n, n) * z);
            let con = EllipticContour::new(c(1.5, 0.0), 1.0, 0.6, 64).unwrap();
            let r = solve(&t, &con, &BeynConfig { ell: 4, seed, ..Default::default() }).unwrap();
            let mut expect: Vec<Complex64> = reference.into_iter().filter(|z| con.contains(*z)).collect();
            expect.sort_by(|a, b| a.re.total_cmp(&b.re));
            let got = sorted(&r);
            prop_assert_eq!(got.len(), expect.len());
            for (p, q) in got.iter().zip(&expect) {
                prop_assert!((p - q).norm() <= 1e-9, "{} vs {}", p, q);
            }
        }
    }
}
