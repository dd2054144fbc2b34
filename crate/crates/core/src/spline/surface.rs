use nalgebra::{Point3, Vector3};

use super::basis::KnotVector;
use crate::error::{Error, Result};

/// Tensor-product rational B-spline surface. Control points and weights are
/// stored row-major: index `i * n_v + j` for `P_ij`, `i` along u.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricSurface {
    control: Vec<Point3<f64>>,
    weights: Vec<f64>,
    knots_u: KnotVector,
    knots_v: KnotVector,
}

impl ParametricSurface {
    pub fn new(
        control: Vec<Point3<f64>>,
        weights: Vec<f64>,
        knots_u: KnotVector,
        knots_v: KnotVector,
    ) -> Result<Self> {
        let n = knots_u.n_basis() * knots_v.n_basis();
        if control.len() != n || weights.len() != n {
            return Err(Error::Parameter(format!(
                "knot vectors need {n} control points and weights, got {} and {}",
                control.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Parameter("weights must be finite and positive".into()));
        }
        Ok(Self {
            control,
            weights,
            knots_u,
            knots_v,
        })
    }

    /// Polynomial surface: every weight equal to one.
    pub fn polynomial(control: Vec<Point3<f64>>, knots_u: KnotVector, knots_v: KnotVector) -> Result<Self> {
        let w = vec![1.0; control.len()];
        Self::new(control, w, knots_u, knots_v)
    }

    pub fn n_u(&self) -> usize {
        self.knots_u.n_basis()
    }

    pub fn n_v(&self) -> usize {
        self.knots_v.n_basis()
    }

    pub fn control(&self, i: usize, j: usize) -> Point3<f64> {
        self.control[i * self.n_v() + j]
    }

    pub fn control_points(&self) -> &[Point3<f64>] {
        &self.control
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n_v() + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn knots_u(&self) -> &KnotVector {
        &self.knots_u
    }

    pub fn knots_v(&self) -> &KnotVector {
        &self.knots_v
    }

    pub fn domain(&self) -> ((f64, f64), (f64, f64)) {
        (self.knots_u.domain(), self.knots_v.domain())
    }

    /// Copy with one weight replaced.
    pub fn with_weight(&self, i: usize, j: usize, w: f64) -> Result<Self> {
        let mut weights = self.weights.clone();
        weights[i * self.n_v() + j] = w;
        Self::new(self.control.clone(), weights, self.knots_u.clone(), self.knots_v.clone())
    }

    /// Copy with every control point mapped through `f`.
    pub fn map_control(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Self {
        Self {
            control: self.control.iter().map(f).collect(),
            ..self.clone()
        }
    }

    /// `S(u, v) = sum N_i(u) M_j(v) w_ij P_ij / sum N_i(u) M_j(v) w_ij`.
    pub fn evaluate(&self, u: f64, v: f64) -> Result<Point3<f64>> {
        self.knots_u.check_domain(u)?;
        self.knots_v.check_domain(v)?;
        let (p, q) = (self.knots_u.degree(), self.knots_v.degree());
        let (su, sv) = (self.knots_u.span(u), self.knots_v.span(v));
        let mut nu = [0.0; 16];
        let mut nv = [0.0; 16];
        self.knots_u.basis_funs(su, u, &mut nu);
        self.knots_v.basis_funs(sv, v, &mut nv);
        let mut num = Vector3::zeros();
        let mut den = 0.0;
        for a in 0..=p {
            let i = su - p + a;
            for b in 0..=q {
                let j = sv - q + b;
                let k = i * self.n_v() + j;
                let c = nu[a] * nv[b] * self.weights[k];
                num += self.control[k].coords * c;
                den += c;
            }
        }
        Ok(Point3::from(num / den))
    }

    /// Point and first partial derivatives `(S, dS/du, dS/dv)`.
    pub fn derivatives(&self, u: f64, v: f64) -> Result<(Point3<f64>, Vector3<f64>, Vector3<f64>)> {
        self.knots_u.check_domain(u)?;
        self.knots_v.check_domain(v)?;
        let (p, q) = (self.knots_u.degree(), self.knots_v.degree());
        let (su, sv) = (self.knots_u.span(u), self.knots_v.span(v));
        let mut du = [[0.0; 16]; 2];
        let mut dv = [[0.0; 16]; 2];
        self.knots_u.basis_funs_and_derivs(su, u, &mut du);
        self.knots_v.basis_funs_and_derivs(sv, v, &mut dv);
        let (mut a, mut a_u, mut a_v) = (Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
        let (mut w, mut w_u, mut w_v) = (0.0, 0.0, 0.0);
        for ia in 0..=p {
            let i = su - p + ia;
            for jb in 0..=q {
                let j = sv - q + jb;
                let k = i * self.n_v() + j;
                let wk = self.weights[k];
                let pk = self.control[k].coords * wk;
                let b = du[0][ia] * dv[0][jb];
                let bu = du[1][ia] * dv[0][jb];
                let bv = du[0][ia] * dv[1][jb];
                a += pk * b;
                a_u += pk * bu;
                a_v += pk * bv;
                w += wk * b;
                w_u += wk * bu;
                w_v += wk * bv;
            }
        }
        let s = a / w;
        Ok((Point3::from(s), (a_u - s * w_u) / w, (a_v - s * w_v) / w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_surface(seed: u64, nu: usize, nv: usize) -> ParametricSurface {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let control = (0..nu * nv)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let weights = (0..nu * nv).map(|_| rng.random_range(0.2..3.0)).collect();
        ParametricSurface::new(
            control,
            weights,
            KnotVector::clamped_uniform(nu, 3).unwrap(),
            KnotVector::clamped_uniform(nv, 2).unwrap(),
        )
        .unwrap()
    }

    /// Direct rational double sum over every basis function.
    fn naive_eval(s: &ParametricSurface, u: f64, v: f64) -> Point3<f64> {
        let (ku, kv) = (s.knots_u(), s.knots_v());
        let mut num = Vector3::zeros();
        let mut den = 0.0;
        for i in 0..s.n_u() {
            let ni = super::super::basis::bspline_basis(i, ku.degree(), u, ku.knots()).unwrap();
            for j in 0..s.n_v() {
                let mj = super::super::basis::bspline_basis(j, kv.degree(), v, kv.knots()).unwrap();
                num += s.control(i, j).coords * (ni * mj * s.weight(i, j));
                den += ni * mj * s.weight(i, j);
            }
        }
        Point3::from(num / den)
    }

    #[test]
    fn constant_net_gives_constant_surface() {
        let p = Point3::new(1.5, -2.0, 0.25);
        let s = ParametricSurface::polynomial(
            vec![p; 30],
            KnotVector::clamped_uniform(5, 3).unwrap(),
            KnotVector::clamped_uniform(6, 2).unwrap(),
        )
        .unwrap();
        for (u, v) in [(0.0, 0.0), (0.3, 0.7), (1.0, 1.0)] {
            assert!((s.evaluate(u, v).unwrap() - p).norm() < 1e-14);
        }
    }

    #[test]
    fn corners_interpolate_control_points() {
        let s = random_surface(1, 6, 5);
        assert!((s.evaluate(0.0, 0.0).unwrap() - s.control(0, 0)).norm() < 1e-14);
        assert!((s.evaluate(1.0, 0.0).unwrap() - s.control(5, 0)).norm() < 1e-14);
        assert!((s.evaluate(0.0, 1.0).unwrap() - s.control(0, 4)).norm() < 1e-14);
        assert!((s.evaluate(1.0, 1.0).unwrap() - s.control(5, 4)).norm() < 1e-14);
    }

    #[test]
    fn outside_domain_is_error() {
        let s = random_surface(2, 5, 5);
        assert!(matches!(s.evaluate(1.2, 0.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn matches_naive_double_sum() {
        let s = random_surface(3, 7, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let (u, v) = (rng.random(), rng.random());
            assert!((s.evaluate(u, v).unwrap() - naive_eval(&s, u, v)).norm() <= 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let s = random_surface(5, 6, 6);
        let h = 1e-6;
        for (u, v) in [(0.2, 0.3), (0.55, 0.81), (0.9, 0.1)] {
            let (_, su, sv) = s.derivatives(u, v).unwrap();
            let fu = (s.evaluate(u + h, v).unwrap() - s.evaluate(u - h, v).unwrap()) / (2.0 * h);
            let fv = (s.evaluate(u, v + h).unwrap() - s.evaluate(u, v - h).unwrap()) / (2.0 * h);
            assert!((su - fu).norm() < 1e-5 * (1.0 + fu.norm()));
            assert!((sv - fv).norm() < 1e-5 * (1.0 + fv.norm()));
        }
    }

    proptest! {
        #[test]
        fn rigid_transform_commutes_with_evaluation(
            roll in -3.0f64..3.0, yaw in -3.0f64..3.0,
            t in prop::array::uniform3(-10.0f64..10.0),
            u in 0.0f64..=1.0, v in 0.0f64..=1.0,
        ) {
            let s = random_surface(6, 5, 5);
            let iso = nalgebra::Isometry3::new(Vector3::from(t), Vector3::new(roll, 0.3, yaw));
            let moved = s.map_control(|p| iso * p);
            let a = moved.evaluate(u, v).unwrap();
            let b = iso * s.evaluate(u, v).unwrap();
            prop_assert!((a - b).norm() <= 1e-9);
        }

        #[test]
        fn rational_denominator_positive(u in 0.0f64..=1.0, v in 0.0f64..=1.0, seed in 0u64..50) {
            let s = random_surface(seed, 5, 4);
            let (ku, kv) = (s.knots_u(), s.knots_v());
            let (ru, rv) = (ku.basis_row(u), kv.basis_row(v));
            let mut den = 0.0;
            for i in 0..s.n_u() {
                for j in 0..s.n_v() {
                    den += ru[i] * rv[j] * s.weight(i, j);
                }
            }
            prop_assert!(den > 0.0);
        }
    }
}
