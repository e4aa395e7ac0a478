//! Univariate B-splines on open (clamped) knot vectors.
//!
//! The discretisation only ever uses the dyadic knot vectors built by
//! [`KnotVector::uniform`]; NURBS patches read from geometry files may carry
//! arbitrary open knot vectors, which is why the representation is general.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    level: Option<u32>,
    knots: Vec<f64>,
}

impl KnotVector {
    /// The clamped knot vector of degree `p` with `2^m` equal knot spans on `[0, 1]`.
    pub fn uniform(degree: usize, level: u32) -> Self {
        let cells = 1usize << level;
        let mut knots = Vec::with_capacity(cells + 2 * degree + 1);
        knots.extend(std::iter::repeat_n(0.0, degree + 1));
        knots.extend((1..cells).map(|j| j as f64 / cells as f64));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self {
            degree,
            level: Some(level),
            knots,
        }
    }

    /// General open knot vector on `[0, 1]`, used for geometry patches.
    pub(crate) fn open(degree: usize, knots: Vec<f64>) -> Result<Self> {
        let bad = |msg: &str| Err(Error::Geometry(format!("knot vector {knots:?}: {msg}")));
        if knots.len() < 2 * degree + 2 {
            return bad("too few knots for the degree");
        }
        if knots.windows(2).any(|w| !(w[0] <= w[1])) {
            return bad("knots must be nondecreasing");
        }
        let n = knots.len();
        if knots[..=degree].iter().any(|&k| k != 0.0) || knots[n - degree - 1..].iter().any(|&k| k != 1.0) {
            return bad("end knots must be clamped to 0 and 1");
        }
        Ok(Self {
            degree,
            level: None,
            knots,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Refinement level `m` for dyadic knot vectors.
    pub fn level(&self) -> Option<u32> {
        self.level
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions.
    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Knot index `k` with `knots[k] <= x < knots[k + 1]`; the last nonempty
    /// span is closed at 1.
    pub fn find_span(&self, x: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(x));
        }
        let n = self.dim();
        let p = self.degree;
        if x >= self.knots[n] {
            let mut k = n - 1;
            while self.knots[k] == self.knots[k + 1] {
                k -= 1;
            }
            return Ok(k);
        }
        // first knot strictly greater than x, searched in knots[p+1..=n]
        let upper = p + 1 + self.knots[p + 1..=n].partition_point(|&k| k <= x);
        Ok(upper - 1)
    }

    /// Distinct breakpoints (cell boundaries).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.knots.clone();
        b.dedup();
        b
    }
}

/// B-spline basis built on a knot vector by the Cox–de Boor recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    knots: KnotVector,
}

impl SplineBasis {
    pub fn new(knots: KnotVector) -> Self {
        Self { knots }
    }

    pub fn uniform(degree: usize, level: u32) -> Self {
        Self::new(KnotVector::uniform(degree, level))
    }

    pub fn knot_vector(&self) -> &KnotVector {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.knots.degree
    }

    pub fn dim(&self) -> usize {
        self.knots.dim()
    }

    /// All basis values at `x`; zero outside the supports.
    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let span = self.knots.find_span(x)?;
        let p = self.degree();
        let mut vals = vec![0.0; p + 1];
        let mut ders = vec![0.0; p + 1];
        self.eval_span(span, x, &mut vals, &mut ders);
        let mut out = vec![0.0; self.dim()];
        out[span - p..=span].copy_from_slice(&vals);
        Ok(out)
    }

    /// All first derivatives at `x`.
    pub fn eval_derivative(&self, x: f64) -> Result<Vec<f64>> {
        let span = self.knots.find_span(x)?;
        let p = self.degree();
        let mut vals = vec![0.0; p + 1];
        let mut ders = vec![0.0; p + 1];
        self.eval_span(span, x, &mut vals, &mut ders);
        let mut out = vec![0.0; self.dim()];
        out[span - p..=span].copy_from_slice(&ders);
        Ok(out)
    }

    /// Greville abscissae: the mean of knots `i+1 ..= i+p` for each function.
    pub fn greville_points(&self) -> Vec<f64> {
        let p = self.degree();
        let k = &self.knots.knots;
        (0..self.dim())
            .map(|i| {
                if p == 0 {
                    0.5 * (k[i] + k[i + 1])
                } else {
                    k[i + 1..=i + p].iter().sum::<f64>() / p as f64
                }
            })
            .collect()
    }

    /// Values and derivatives of the `p + 1` functions that are nonzero on the
    /// knot span `span`, evaluated from that span's polynomial pieces.
    /// Entry `r` belongs to basis function `span - p + r`.
    ///
    /// `x` may lie on the closure of the span, which is how cell-local
    /// quadrature evaluates traces on cell edges.
    pub fn eval_span(&self, span: usize, x: f64, vals: &mut [f64], ders: &mut [f64]) {
        let p = self.degree();
        let u = &self.knots.knots;
        debug_assert!(vals.len() > p && ders.len() > p);
        if p == 0 {
            vals[0] = 1.0;
            ders[0] = 0.0;
            return;
        }
        // ndu[j][r]: upper triangle holds basis values, lower triangle knot differences
        const MAXP: usize = 16;
        assert!(p < MAXP, "degree {p} exceeds supported maximum");
        let mut ndu = [[0.0f64; MAXP]; MAXP];
        let mut left = [0.0f64; MAXP];
        let mut right = [0.0f64; MAXP];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        for r in 0..=p {
            vals[r] = ndu[r][p];
            let mut d = 0.0;
            if r >= 1 {
                d += ndu[r - 1][p - 1] / ndu[p][r - 1];
            }
            if r < p {
                d -= ndu[r][p - 1] / ndu[p][r];
            }
            ders[r] = p as f64 * d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn uniform_knots_layout() {
        let k = KnotVector::uniform(2, 1);
        assert_eq!(k.knots(), &[0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]);
        assert_eq!(k.dim(), 4);
        for p in 0..6 {
            for m in 0..6 {
                assert_eq!(KnotVector::uniform(p, m).dim(), (1 << m) + p);
            }
        }
    }

    #[test]
    fn piecewise_constant() {
        let b = SplineBasis::uniform(0, 1);
        assert_eq!(b.eval(0.25).unwrap(), vec![1.0, 0.0]);
        assert_eq!(b.eval(0.5).unwrap(), vec![0.0, 1.0]);
        assert_eq!(b.eval(1.0).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn bernstein_endpoint() {
        let b = SplineBasis::uniform(2, 0);
        assert_eq!(b.eval(0.0).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(b.eval(1.0).unwrap(), vec![0.0, 0.0, 1.0]);
        let x = 0.3;
        let v = b.eval(x).unwrap();
        let bern = [(1.0 - x) * (1.0 - x), 2.0 * x * (1.0 - x), x * x];
        for (a, e) in v.iter().zip(bern) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn quadratic_at_interior_knot() {
        // hand evaluation of the recursion on [0,0,0,1/2,1,1,1] at x = 1/2
        let b = SplineBasis::uniform(2, 1);
        let v = b.eval(0.5).unwrap();
        for (a, e) in v.iter().zip([0.0, 0.5, 0.5, 0.0]) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn linear_derivatives() {
        let b = SplineBasis::uniform(1, 0);
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(b.eval_derivative(x).unwrap(), vec![-1.0, 1.0]);
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let b = SplineBasis::uniform(2, 1);
        let h = 1e-6;
        let d = b.eval_derivative(0.25).unwrap();
        let fp = b.eval(0.25 + h).unwrap();
        let fm = b.eval(0.25 - h).unwrap();
        for i in 0..b.dim() {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            assert!((d[i] - fd).abs() <= 1e-6 * d[i].abs().max(1e-3), "{i}: {} vs {fd}", d[i]);
        }
    }

    #[test]
    fn greville() {
        let g = SplineBasis::uniform(1, 1).greville_points();
        assert_eq!(g, vec![0.0, 0.5, 1.0]);
        assert_eq!(SplineBasis::uniform(2, 0).greville_points(), vec![0.0, 0.5, 1.0]);
        let g = SplineBasis::uniform(3, 1).greville_points();
        for (a, e) in g.iter().zip([0.0, 1.0 / 6.0, 0.5, 5.0 / 6.0, 1.0]) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn domain_errors() {
        let b = SplineBasis::uniform(2, 2);
        assert!(matches!(b.eval(-1e-9), Err(Error::Domain(_))));
        assert!(matches!(b.eval_derivative(1.5), Err(Error::Domain(_))));
        assert!(b.eval(f64::NAN).is_err());
    }

    #[test]
    fn open_rejects_unclamped() {
        assert!(KnotVector::open(1, vec![0.0, 0.0, 1.0, 1.0]).is_ok());
        assert!(KnotVector::open(1, vec![0.0, 0.2, 1.0, 1.0]).is_err());
        assert!(KnotVector::open(2, vec![0.0, 0.0, 0.0, 0.7, 0.5, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn continuity_across_interior_knots() {
        for p in 1..=5 {
            for m in 1..=4u32 {
                let b = SplineBasis::uniform(p, m);
                let n = 1usize << m;
                let mut vl = vec![0.0; p + 1];
                let mut vr = vec![0.0; p + 1];
                let mut dd = vec![0.0; p + 1];
                for j in 1..n {
                    let x = j as f64 / n as f64;
                    // span on the left of the knot is knot index p + j - 1, on the right p + j
                    b.eval_span(p + j - 1, x, &mut vl, &mut dd);
                    b.eval_span(p + j, x, &mut vr, &mut dd);
                    let mut left = vec![0.0; b.dim()];
                    let mut right = vec![0.0; b.dim()];
                    left[j - 1..j + p].copy_from_slice(&vl);
                    right[j..=j + p].copy_from_slice(&vr);
                    for (a, c) in left.iter().zip(&right) {
                        assert_abs_diff_eq!(a, c, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn partition_of_unity(p in 0usize..=5, m in 0u32..=5, x in 0.0f64..=1.0) {
            let b = SplineBasis::uniform(p, m);
            let v = b.eval(x).unwrap();
            prop_assert!(v.iter().all(|&y| y >= -1e-15));
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-13);
            prop_assert!(v.iter().filter(|&&y| y != 0.0).count() <= p + 1);
            let d = b.eval_derivative(x).unwrap();
            let scale = d.iter().map(|y| y.abs()).fold(1.0, f64::max);
            prop_assert!(d.iter().sum::<f64>().abs() <= 1e-13 * scale);
        }

        #[test]
        fn derivative_finite_difference(p in 1usize..=5, m in 0u32..=4, x in 0.01f64..0.99) {
            let b = SplineBasis::uniform(p, m);
            let n = (1u32 << m) as f64;
            let h = 1e-6;
            // stay away from knots so the difference quotient sees one polynomial piece
            let frac = (x * n).fract();
            prop_assume!(frac > 1e-4 && frac < 1.0 - 1e-4);
            let d = b.eval_derivative(x).unwrap();
            let fp = b.eval(x + h).unwrap();
            let fm = b.eval(x - h).unwrap();
            let scale = d.iter().map(|y| y.abs()).fold(0.0, f64::max);
            for i in 0..b.dim() {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                prop_assert!((d[i] - fd).abs() <= 1e-5 * scale, "{} vs {}", d[i], fd);
            }
        }

        #[test]
        fn support_is_knot_interval(p in 0usize..=4, m in 0u32..=4, x in 0.0f64..1.0) {
            let b = SplineBasis::uniform(p, m);
            let k = b.knot_vector().knots();
            let v = b.eval(x).unwrap();
            for (i, &y) in v.iter().enumerate() {
                if y != 0.0 {
                    prop_assert!(k[i] <= x && x <= k[i + p + 1]);
                }
            }
        }
    }
}
