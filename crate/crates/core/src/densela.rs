//! Dense complex linear algebra used by the assembly and the eigensolver:
//! LU with partial pivoting, SVD and the general eigendecomposition.
//!
//! Matrices are exchanged as nalgebra `DMatrix`; the factorisations run on
//! faer.

use faer::linalg::solvers::Solve;
use faer::Mat;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

fn to_faer(a: &CMatrix) -> Mat<Complex64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, Complex64>) -> CMatrix {
    CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Partially pivoted LU factorisation of a square matrix.
#[derive(Debug)]
pub struct LuFactorization {
    lu: faer::linalg::solvers::PartialPivLu<Complex64>,
    min_pivot: (usize, f64),
    max_pivot: f64,
}

impl LuFactorization {
    pub fn new(a: CMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Usage(format!("LU needs a square matrix, got {}x{}", a.nrows(), a.ncols())));
        }
        if a.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numerical("matrix has non-finite entries".into()));
        }
        let lu = to_faer(&a).partial_piv_lu();
        let u = lu.U();
        let mut min_pivot = (0, f64::INFINITY);
        let mut max_pivot: f64 = 0.0;
        for i in 0..u.nrows() {
            let m = u[(i, i)].norm();
            max_pivot = max_pivot.max(m);
            if m < min_pivot.1 {
                min_pivot = (i, m);
            }
        }
        if min_pivot.1 == 0.0 {
            return Err(Error::Singular {
                index: min_pivot.0,
                magnitude: 0.0,
            });
        }
        Ok(Self {
            lu,
            min_pivot,
            max_pivot,
        })
    }

    pub fn dim(&self) -> usize {
        self.lu.U().nrows()
    }

    /// Smallest pivot magnitude and its index.
    pub fn min_pivot(&self) -> (usize, f64) {
        self.min_pivot
    }

    pub fn max_pivot(&self) -> f64 {
        self.max_pivot
    }

    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        if b.nrows() != self.dim() {
            return Err(Error::Usage(format!(
                "right-hand side has {} rows, matrix dimension is {}",
                b.nrows(),
                self.dim()
            )));
        }
        let x = self.lu.solve(to_faer(b));
        Ok(from_faer(x.as_ref()))
    }
}

/// Solves `A X = B`.
pub fn lu_solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    LuFactorization::new(a.clone())?.solve(b)
}

/// Thin SVD `A = U diag(sigma) V^H` with `sigma` sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v_h: CMatrix,
}

pub fn svd(a: &CMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(Svd {
            u: CMatrix::zeros(m, 0),
            sigma: Vec::new(),
            v_h: CMatrix::zeros(0, n),
        });
    }
    if a.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let s = to_faer(a)
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD of a {m}x{n} matrix failed: {e:?}")))?;
    let sigma = (0..m.min(n)).map(|i| s.S()[i].re).collect();
    Ok(Svd {
        u: from_faer(s.U()),
        sigma,
        v_h: from_faer(s.V()).adjoint(),
    })
}

/// Eigenvalues and unit right eigenvectors (columns) of a square matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    pub vectors: CMatrix,
}

pub fn eig(a: &CMatrix) -> Result<Eigen> {
    if !a.is_square() {
        return Err(Error::Usage(format!("eig needs a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(Eigen {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        });
    }
    if a.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let e = to_faer(a)
        .eigen()
        .map_err(|e| Error::Numerical(format!("eigendecomposition of a {n}x{n} matrix failed: {e:?}")))?;
    let values = (0..n).map(|i| e.S()[i]).collect();
    let mut vectors = from_faer(e.U());
    for mut c in vectors.column_iter_mut() {
        let nv = c.norm();
        if nv > 0.0 {
            c /= Complex64::new(nv, 0.0);
        }
    }
    Ok(Eigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random(m: usize, n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(m, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn lu_identity_and_diagonal() {
        let b = random(3, 2, 1);
        let x = lu_solve(&CMatrix::identity(3, 3), &b).unwrap();
        assert!(max_abs(&(x - &b)) == 0.0);
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(2.0)]));
        let x = lu_solve(&a, &CMatrix::from_vec(2, 1, vec![c(2.0), c(2.0)])).unwrap();
        assert!((x[0] - c(2.0)).norm() < 1e-15 && (x[1] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn lu_random_residual() {
        let a = random(50, 50, 7);
        let b = random(50, 3, 8);
        let x = lu_solve(&a, &b).unwrap();
        assert!(max_abs(&(&a * x - &b)) <= 1e-11 * max_abs(&b));
    }

    #[test]
    fn lu_singular_reports_pivot() {
        let mut a = random(4, 4, 3);
        a.set_column(1, &nalgebra::DVector::zeros(4));
        assert!(matches!(LuFactorization::new(a), Err(Error::Singular { .. })));
        let a = random(4, 4, 3);
        let lu = LuFactorization::new(a).unwrap();
        assert!(lu.min_pivot().1 > 0.0 && lu.min_pivot().1 <= lu.max_pivot());
        assert!(matches!(lu.solve(&random(3, 1, 1)), Err(Error::Usage(_))));
    }

    #[test]
    fn svd_examples() {
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(3.0)]));
        let s = svd(&a).unwrap();
        assert!((s.sigma[0] - 3.0).abs() < 1e-15 && (s.sigma[1] - 1.0).abs() < 1e-15);
        let u = random(6, 1, 2);
        let v = random(1, 5, 3);
        let s = svd(&(u * v)).unwrap();
        assert!(s.sigma[1] / s.sigma[0] <= 1e-14);
        let a = random(20, 7, 4);
        let s = svd(&a).unwrap();
        assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]) && s.sigma.iter().all(|x| *x >= 0.0));
        let sig = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(7, s.sigma.iter().map(|x| c(*x))));
        let rec = &s.u * sig * &s.v_h;
        assert!(max_abs(&(rec - &a)) <= 1e-12 * max_abs(&a) * 10.0);
    }

    proptest::proptest! {
        #[test]
        fn svd_reconstructs_low_rank(seed in 0u64..10_000, rank in 1usize..4, m in 4usize..9, n in 2usize..6) {
            let a = random(m, rank, seed) * random(rank, n, seed + 1);
            let s = svd(&a).unwrap();
            let k = s.sigma.len();
            let sig = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k, s.sigma.iter().map(|x| c(*x))));
            let rec = &s.u * sig * &s.v_h;
            proptest::prop_assert!(max_abs(&(rec - &a)) <= 1e-13 * max_abs(&a).max(1.0));
            proptest::prop_assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn eig_examples() {
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(2.0), c(3.0)]));
        let mut ev: Vec<f64> = eig(&a).unwrap().values.iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        assert_eq!(ev, vec![1.0, 2.0, 3.0]);
        let rot = CMatrix::from_row_slice(2, 2, &[c(0.0), c(-1.0), c(1.0), c(0.0)]);
        let e = eig(&rot).unwrap();
        let mut im: Vec<f64> = e.values.iter().map(|z| z.im).collect();
        im.sort_by(f64::total_cmp);
        assert!((im[0] + 1.0).abs() < 1e-14 && (im[1] - 1.0).abs() < 1e-14);
        assert!(e.values.iter().all(|z| z.re.abs() < 1e-14));
    }

    #[test]
    fn eig_random_residuals() {
        for seed in 0..5 {
            let a = random(10, 10, 100 + seed);
            let e = eig(&a).unwrap();
            let na = a.norm();
            for (k, l) in e.values.iter().enumerate() {
                let v = e.vectors.column(k);
                let r = (&a * v - v * *l).norm();
                assert!(r <= 1e-10 * na * v.norm(), "residual {r}");
            }
        }
    }
}
