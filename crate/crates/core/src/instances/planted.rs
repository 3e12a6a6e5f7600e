//! Smooth test objectives with known stationary structure.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{dot, norm_inf};
use crate::objective::{Objective, ProblemParams};
use crate::oracles::NoisyFunction;
use crate::rng::SimRng;

/// `((x_1^2 - 1)^2)/4 + sum_{i>=2} x_i^2 / 2`: a strict saddle at 0 and minima at `+-e_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedQuartic {
    pub d: usize,
}

impl PlantedQuartic {
    pub fn new(d: usize) -> Self {
        assert!(d >= 1);
        PlantedQuartic { d }
    }

    /// Declared constants, valid on the region the algorithms visit (`|x_1| <= 4/3`).
    pub fn params(&self, eps: f64) -> ProblemParams {
        let mut p = ProblemParams::new(self.d, 1.0, 4.0, 8.0, eps);
        p.delta_f = 0.25;
        p.l_noisy = 4.0;
        p
    }

    pub fn minima(&self) -> [Vec<f64>; 2] {
        let mut a = vec![0.0; self.d];
        a[0] = 1.0;
        let mut b = a.clone();
        b[0] = -1.0;
        [a, b]
    }
}

impl Objective for PlantedQuartic {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        let q = x[0] * x[0] - 1.0;
        0.25 * q * q + 0.5 * x[1..].iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = x.to_vec();
        g[0] = x[0] * x[0] * x[0] - x[0];
        g
    }

    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut h = v.to_vec();
        h[0] = (3.0 * x[0] * x[0] - 1.0) * v[0];
        h
    }

    fn smoothed_gradient(&self, x: &[f64], sigma: f64) -> Option<Vec<f64>> {
        let mut g = x.to_vec();
        g[0] = x[0] * x[0] * x[0] + 3.0 * x[0] * sigma * sigma - x[0];
        Some(g)
    }
}

/// `f = F + nu cos(<a, x> + phi)` over the planted quartic.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineNoise {
    pub base: PlantedQuartic,
    pub a: Vec<f64>,
    pub phi: f64,
    pub nu: f64,
}

impl CosineNoise {
    /// Frequency vector with i.i.d. standard normal entries scaled by `freq`.
    pub fn sample(base: PlantedQuartic, nu: f64, freq: f64, rng: &mut SimRng) -> Self {
        use rand::Rng;
        let a = crate::linalg::scale(&crate::linalg::gaussian_vec(base.d, rng), freq);
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        CosineNoise { base, a, phi, nu }
    }

    fn phase(&self, x: &[f64]) -> f64 {
        dot(&self.a, x) + self.phi
    }
}

impl NoisyFunction for CosineNoise {
    fn noisy_value(&self, x: &[f64]) -> f64 {
        self.base.value(x) + self.nu * self.phase(x).cos()
    }

    fn noisy_gradient(&self, x: &[f64]) -> crate::Result<Vec<f64>> {
        let s = self.nu * self.phase(x).sin();
        let mut g = self.base.gradient(x);
        g.iter_mut().zip(&self.a).for_each(|(gi, ai)| *gi -= s * ai);
        Ok(g)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn noisy_smoothed_gradient(&self, x: &[f64], sigma: f64) -> Option<Vec<f64>> {
        let damp = (-0.5 * sigma * sigma * dot(&self.a, &self.a)).exp();
        let s = self.nu * damp * self.phase(x).sin();
        let mut g = self.base.smoothed_gradient(x, sigma)?;
        g.iter_mut().zip(&self.a).for_each(|(gi, ai)| *gi -= s * ai);
        Some(g)
    }

    fn nu(&self) -> f64 {
        self.nu
    }

    fn nu_tilde(&self) -> f64 {
        self.nu * norm_inf(&self.a)
    }
}

/// `F(x) = x^T A x / 2` for symmetric `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub a: DMatrix<f64>,
}

impl Quadratic {
    pub fn new(a: DMatrix<f64>) -> Self {
        assert!(a.is_square());
        Quadratic { a }
    }

    /// `sign * ||x||^2`.
    pub fn scaled_norm(d: usize, sign: f64) -> Self {
        Quadratic { a: DMatrix::identity(d, d) * (2.0 * sign) }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(v)).as_slice().to_vec()
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.apply(x))
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x)
    }

    fn hessian_vector(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
        self.apply(v)
    }

    fn dense_hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }

    fn smoothed_gradient(&self, x: &[f64], _sigma: f64) -> Option<Vec<f64>> {
        Some(self.apply(x))
    }
}
