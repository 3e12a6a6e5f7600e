//! Problem constants, the objective abstraction and per-run query counters.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DENSE_EIG_THRESHOLD: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub d: usize,
    /// Value bound B.
    pub b: f64,
    /// Gradient-Lipschitz constant.
    pub ell: f64,
    /// Smoothness of the noisy function (first-order setting).
    pub l_noisy: f64,
    /// Hessian-Lipschitz constant.
    pub rho: f64,
    pub eps: f64,
    pub nu: f64,
    pub nu_tilde: f64,
    /// Initial-to-optimum gap.
    pub delta_f: f64,
    /// Value gap used by the lower-bound instances.
    pub delta_cap: f64,
}

impl ProblemParams {
    pub fn new(d: usize, b: f64, ell: f64, rho: f64, eps: f64) -> Self {
        ProblemParams {
            d,
            b,
            ell,
            l_noisy: ell,
            rho,
            eps,
            nu: 0.0,
            nu_tilde: 0.0,
            delta_f: b,
            delta_cap: b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        for (name, v) in [("B", self.b), ("ell", self.ell), ("rho", self.rho), ("eps", self.eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("nu", self.nu), ("nu_tilde", self.nu_tilde)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Validation plus the standard regime `eps <= ell^2 / rho` required by the algorithm configs.
    pub fn validate_for_algorithm(&self) -> Result<()> {
        self.validate()?;
        let cap = self.ell * self.ell / self.rho;
        if self.eps > cap {
            return Err(Error::Config(format!("eps {} exceeds ell^2/rho = {cap}", self.eps)));
        }
        Ok(())
    }
}

/// A twice-differentiable target with analytic derivatives.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Vec<f64>;

    /// Dense Hessian, assembled column by column from Hessian-vector products.
    fn dense_hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let d = self.dim();
        if d > DENSE_EIG_THRESHOLD {
            return None;
        }
        let mut h = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = self.hessian_vector(x, &e);
            for i in 0..d {
                h[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        Some((&h + h.transpose()) * 0.5)
    }

    /// Gradient of the Gaussian smoothing `E[F(x + z)]`, `z ~ N(0, sigma^2 I)`, when known in closed form.
    fn smoothed_gradient(&self, _x: &[f64], _sigma: f64) -> Option<Vec<f64>> {
        None
    }

    /// Suggested finite-difference step for derivative checks.
    fn fd_step(&self) -> f64 {
        1e-5
    }
}

type ValueFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VecFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type HvpFn = Box<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Objective assembled from closures; mostly for tests and small examples.
pub struct FnObjective {
    pub d: usize,
    value: ValueFn,
    gradient: VecFn,
    hvp: HvpFn,
}

impl FnObjective {
    pub fn new(
        d: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        hvp: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        FnObjective { d, value: Box::new(value), gradient: Box::new(gradient), hvp: Box::new(hvp) }
    }
}

impl Objective for FnObjective {
    fn dim(&self) -> usize {
        self.d
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }
    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        (self.hvp)(x, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SospVerdict {
    pub grad_norm: f64,
    pub min_eig: f64,
    pub is_sosp: bool,
    pub eps_used: f64,
    pub threshold_curvature: f64,
}

impl SospVerdict {
    pub fn new(grad_norm: f64, min_eig: f64, eps: f64, rho: f64) -> Self {
        let threshold_curvature = -(rho * eps).sqrt();
        SospVerdict {
            grad_norm,
            min_eig,
            is_sosp: grad_norm <= eps && min_eig >= threshold_curvature,
            eps_used: eps,
            threshold_curvature,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLedger {
    pub zeroth: u64,
    pub first: u64,
    /// Wide enough for classical batches at large dimension.
    pub binary: u128,
    pub estimator_calls: u64,
}

impl QueryLedger {
    pub fn total(&self) -> u128 {
        (self.zeroth + self.first) as u128 + self.binary
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        let p = ProblemParams::new(3, 1.0, 1.0, 1.0, 0.1);
        assert!(p.validate_for_algorithm().is_ok());
        assert!(ProblemParams { d: 0, ..p }.validate().is_err());
        assert!(ProblemParams { rho: 0.0, ..p }.validate().is_err());
        assert!(ProblemParams { nu: -1.0, ..p }.validate().is_err());
        assert!(ProblemParams { eps: 2.0, ..p }.validate_for_algorithm().is_err());
    }

    #[test]
    fn verdict_thresholds() {
        let v = SospVerdict::new(0.05, -0.2, 0.1, 1.0);
        assert!(v.is_sosp);
        assert!((v.threshold_curvature + 0.1f64.sqrt()).abs() < 1e-15);
        assert!(!SospVerdict::new(0.05, -0.4, 0.1, 1.0).is_sosp);
        assert!(!SospVerdict::new(0.2, 1.0, 0.1, 1.0).is_sosp);
    }
}
