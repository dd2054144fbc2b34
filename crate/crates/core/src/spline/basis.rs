//! Clamped knot vectors and B-spline basis evaluation.

use crate::error::{Error, Result};

/// Clamped, non-decreasing knot vector of a degree-`p` spline.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        if degree == 0 && knots.len() < 2 || knots.len() < 2 * (degree + 1) {
            return Err(Error::Parameter(format!(
                "{} knots cannot carry a degree-{degree} spline",
                knots.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::Parameter("knots must be non-decreasing".into()));
        }
        let m = knots.len() - 1;
        let clamped_start = knots[..=degree].iter().all(|&k| k == knots[0]);
        let clamped_end = knots[m - degree..].iter().all(|&k| k == knots[m]);
        if !clamped_start || !clamped_end {
            return Err(Error::Parameter(format!(
                "knot vector must repeat its end knots {} times",
                degree + 1
            )));
        }
        if knots[0] == knots[m] {
            return Err(Error::Parameter("knot vector spans an empty domain".into()));
        }
        Ok(Self { knots, degree })
    }

    /// Uniform clamped knots on [0, 1] for `n_ctrl` control points.
    pub fn clamped_uniform(n_ctrl: usize, degree: usize) -> Result<Self> {
        check_count(n_ctrl, degree)?;
        let inner = n_ctrl - degree - 1;
        let mut knots = vec![0.0; degree + 1];
        knots.extend((1..=inner).map(|j| j as f64 / (inner + 1) as f64));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self::new(knots, degree)
    }

    /// Knots for interpolation at `params` by averaging consecutive parameters.
    pub fn averaging(params: &[f64], degree: usize) -> Result<Self> {
        let n = params.len();
        check_count(n, degree)?;
        let mut knots = vec![0.0; degree + 1];
        for j in 1..n - degree {
            knots.push(params[j..j + degree].iter().sum::<f64>() / degree as f64);
        }
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self::new(knots, degree)
    }

    /// Knots for least-squares approximation of `params` with `n_ctrl` control
    /// points, spread so every knot span holds at least one parameter.
    pub fn approximating(params: &[f64], n_ctrl: usize, degree: usize) -> Result<Self> {
        let m = params.len();
        check_count(n_ctrl, degree)?;
        if n_ctrl > m {
            return Err(Error::Parameter(format!(
                "{n_ctrl} control points exceed {m} data parameters"
            )));
        }
        let mut knots = vec![0.0; degree + 1];
        let d = m as f64 / (n_ctrl - degree) as f64;
        for j in 1..n_ctrl - degree {
            let jd = j as f64 * d;
            let i = jd.floor() as usize;
            let alpha = jd - i as f64;
            knots.push((1.0 - alpha) * params[i - 1] + alpha * params[i]);
        }
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self::new(knots, degree)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions (control points) the vector supports.
    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn check_domain(&self, u: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if u >= lo && u <= hi {
            Ok(())
        } else {
            Err(Error::Domain { value: u, lo, hi })
        }
    }

    /// Index `s` with `knots[s] <= u < knots[s + 1]`; the last span at the end.
    pub fn span(&self, u: f64) -> usize {
        let n = self.n_basis() - 1;
        let p = self.degree;
        if u >= self.knots[n + 1] {
            return n;
        }
        if u <= self.knots[p] {
            return p;
        }
        // Largest s in [p, n] with knots[s] <= u.
        let idx = self.knots[p..=n + 1].partition_point(|&k| k <= u);
        p + idx - 1
    }

    /// The `p + 1` basis functions nonzero on `span`, evaluated at `u`.
    pub fn basis_funs(&self, span: usize, u: f64, out: &mut [f64]) {
        let p = self.degree;
        let k = &self.knots;
        let mut left = [0.0; 16];
        let mut right = [0.0; 16];
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = u - k[span + 1 - j];
            right[j] = k[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    /// Basis values (`out[0]`) and first derivatives (`out[1]`) on `span`.
    pub fn basis_funs_and_derivs(&self, span: usize, u: f64, out: &mut [[f64; 16]; 2]) {
        let p = self.degree;
        let k = &self.knots;
        let mut ndu = [[0.0f64; 16]; 16];
        let mut left = [0.0; 16];
        let mut right = [0.0; 16];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = u - k[span + 1 - j];
            right[j] = k[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        for j in 0..=p {
            out[0][j] = ndu[j][p];
        }
        if p == 0 {
            out[1][0] = 0.0;
            return;
        }
        // First derivative: p * (N_{r,p-1} / (u_{r+p} - u_r) - N_{r+1,p-1} / (u_{r+p+1} - u_{r+1})).
        for r in 0..=p {
            let mut d = 0.0;
            if r >= 1 {
                d += ndu[r - 1][p - 1] / ndu[p][r - 1];
            }
            if r < p {
                d -= ndu[r][p - 1] / ndu[p][r];
            }
            out[1][r] = d * p as f64;
        }
    }

    /// Dense row of all basis values at `u`.
    pub fn basis_row(&self, u: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.n_basis()];
        let span = self.span(u);
        let mut vals = [0.0; 16];
        self.basis_funs(span, u, &mut vals);
        for j in 0..=self.degree {
            row[span - self.degree + j] = vals[j];
        }
        row
    }
}

fn check_count(n_ctrl: usize, degree: usize) -> Result<()> {
    if degree == 0 || degree > 15 {
        return Err(Error::Parameter(format!("unsupported spline degree {degree}")));
    }
    if n_ctrl <= degree {
        return Err(Error::Parameter(format!(
            "{n_ctrl} control points are too few for degree {degree}"
        )));
    }
    Ok(())
}

/// Value of the single basis function `N_{i,p}(u)` over a raw knot sequence,
/// by the Cox-de Boor recursion. The right end of the domain belongs to the
/// last basis function.
pub fn bspline_basis(i: usize, p: usize, u: f64, knots: &[f64]) -> Result<f64> {
    let m = knots.len();
    if m < p + 2 || i + p + 1 >= m {
        return Err(Error::Parameter(format!(
            "basis index {i} of degree {p} needs more than {m} knots"
        )));
    }
    let (lo, hi) = (knots[0], knots[m - 1]);
    if !(u >= lo && u <= hi) {
        return Err(Error::Domain { value: u, lo, hi });
    }
    // At the right end, the half-open spans would all be empty; use the last
    // nonempty span instead.
    let last_span = (0..m - 1).rev().find(|&s| knots[s] < knots[s + 1]).unwrap_or(0);
    Ok(cox_de_boor(i, p, u, knots, last_span))
}

fn cox_de_boor(i: usize, p: usize, u: f64, k: &[f64], last_span: usize) -> f64 {
    if p == 0 {
        let inside = if u == k[k.len() - 1] {
            i == last_span
        } else {
            k[i] <= u && u < k[i + 1]
        };
        return if inside { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = k[i + p] - k[i];
    if d1 > 0.0 {
        v += (u - k[i]) / d1 * cox_de_boor(i, p - 1, u, k, last_span);
    }
    let d2 = k[i + p + 1] - k[i + 1];
    if d2 > 0.0 {
        v += (k[i + p + 1] - u) / d2 * cox_de_boor(i + 1, p - 1, u, k, last_span);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degree_zero_is_indicator() {
        let k = [0.0, 0.25, 0.5, 1.0];
        assert_eq!(bspline_basis(1, 0, 0.3, &k).unwrap(), 1.0);
        assert_eq!(bspline_basis(1, 0, 0.5, &k).unwrap(), 0.0);
        assert_eq!(bspline_basis(0, 0, 0.3, &k).unwrap(), 0.0);
    }

    #[test]
    fn degree_one_hat() {
        let k = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(bspline_basis(0, 1, 0.5, &k).unwrap(), 0.5);
        assert_eq!(bspline_basis(0, 1, 1.0, &k).unwrap(), 1.0);
        assert_eq!(bspline_basis(0, 1, 1.5, &k).unwrap(), 0.5);
    }

    #[test]
    fn outside_domain_errors() {
        let k = [0.0, 0.0, 1.0, 1.0];
        assert!(matches!(bspline_basis(0, 1, 1.5, &k), Err(Error::Domain { .. })));
    }

    #[test]
    fn partition_of_unity_at_random_parameters() {
        let kv = KnotVector::new(
            vec![0.0, 0.0, 0.0, 0.0, 0.1, 0.35, 0.35, 0.6, 0.9, 1.0, 1.0, 1.0, 1.0],
            3,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let u: f64 = rng.random();
            let recursive: f64 = (0..kv.n_basis())
                .map(|i| bspline_basis(i, 3, u, kv.knots()).unwrap())
                .sum();
            assert!((recursive - 1.0).abs() <= 1e-12);
            let fast: f64 = kv.basis_row(u).iter().sum();
            assert!((fast - 1.0).abs() <= 1e-12);
        }
        for end in [0.0, 1.0] {
            let s: f64 = (0..kv.n_basis())
                .map(|i| bspline_basis(i, 3, end, kv.knots()).unwrap())
                .sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn fast_basis_matches_recursion(u in 0.0f64..=1.0, n in 4usize..12) {
            let kv = KnotVector::clamped_uniform(n, 3).unwrap();
            let row = kv.basis_row(u);
            for (i, v) in row.iter().enumerate() {
                let want = bspline_basis(i, 3, u, kv.knots()).unwrap();
                prop_assert!((v - want).abs() <= 1e-12);
                prop_assert!((0.0..=1.0).contains(v));
            }
        }

        #[test]
        fn derivative_matches_finite_difference(u in 0.01f64..0.99, n in 4usize..10) {
            let kv = KnotVector::clamped_uniform(n, 3).unwrap();
            let h = 1e-6;
            let span = kv.span(u);
            let mut d = [[0.0; 16]; 2];
            kv.basis_funs_and_derivs(span, u, &mut d);
            let (a, b) = (kv.basis_row(u + h), kv.basis_row(u - h));
            for j in 0..=3 {
                let i = span - 3 + j;
                let fd = (a[i] - b[i]) / (2.0 * h);
                prop_assert!((d[1][j] - fd).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn knot_constructors_are_clamped() {
        let params = [0.0, 0.1, 0.3, 0.45, 0.7, 0.8, 1.0];
        let avg = KnotVector::averaging(&params, 3).unwrap();
        assert_eq!(avg.n_basis(), params.len());
        let approx = KnotVector::approximating(&params, 5, 3).unwrap();
        assert_eq!(approx.n_basis(), 5);
        assert!(KnotVector::new(vec![0.0, 0.5, 1.0, 1.0], 1).is_err());
    }
}
