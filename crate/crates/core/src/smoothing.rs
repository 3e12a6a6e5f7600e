//! Gaussian smoothing of noisy oracles and the stochastic gradients it induces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{add, axpy, gaussian_vec, scale};
use crate::objective::ProblemParams;
use crate::oracles::NoisyOracle;
use crate::qsub::VectorSampler;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub sigma: f64,
    pub eps_prime: f64,
    pub ell_prime: f64,
    pub rho_prime: f64,
    pub sigma0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingOptions {
    /// Multiplier on the admissible noise level.
    pub c_regime: f64,
    pub k_margin: f64,
    pub c_rho: f64,
}

impl Default for SmoothingOptions {
    fn default() -> Self {
        SmoothingOptions { c_regime: 1.0, k_margin: 1.0, c_rho: 2.0 }
    }
}

fn base(p: &ProblemParams, opts: &SmoothingOptions) -> Result<(f64, f64, f64, f64)> {
    p.validate()?;
    let d = p.d as f64;
    let sigma = (p.eps / (p.rho * d)).sqrt();
    let eps_prime = p.eps / (20.0 * d.sqrt()) * opts.k_margin;
    let ell_prime = p.ell + (p.eps / p.rho).sqrt();
    let rho_prime = opts.c_rho * p.rho;
    Ok((sigma, eps_prime, ell_prime, rho_prime))
}

pub fn choose_zeroth_smoothing(p: &ProblemParams) -> Result<SmoothingParams> {
    choose_zeroth_smoothing_with(p, &SmoothingOptions::default())
}

pub fn choose_zeroth_smoothing_with(p: &ProblemParams, opts: &SmoothingOptions) -> Result<SmoothingParams> {
    let limit = opts.c_regime * (p.eps.powi(3) / p.rho).sqrt() / p.d as f64;
    if p.nu > limit {
        return Err(Error::Regime(format!("nu = {} exceeds c*sqrt(eps^3/rho)/d = {limit}", p.nu)));
    }
    let (sigma, eps_prime, ell_prime, rho_prime) = base(p, opts)?;
    Ok(SmoothingParams { sigma, eps_prime, ell_prime, rho_prime, sigma0: p.b / sigma })
}

pub fn choose_first_smoothing(p: &ProblemParams) -> Result<SmoothingParams> {
    choose_first_smoothing_with(p, &SmoothingOptions::default())
}

pub fn choose_first_smoothing_with(p: &ProblemParams, opts: &SmoothingOptions) -> Result<SmoothingParams> {
    let limit = opts.c_regime * p.eps / (p.d as f64).sqrt();
    if p.nu_tilde > limit {
        return Err(Error::Regime(format!("nu_tilde = {} exceeds c*eps/sqrt(d) = {limit}", p.nu_tilde)));
    }
    let (sigma, eps_prime, ell_prime, rho_prime) = base(p, opts)?;
    Ok(SmoothingParams { sigma, eps_prime, ell_prime, rho_prime, sigma0: p.l_noisy })
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("sigma must be positive, got {sigma}")))
    }
}

/// `z (f(x+z) - f(x)) / sigma^2` with `z ~ N(0, sigma^2 I)`; two zeroth-order queries.
pub fn zeroth_stoch_grad_sample(oracle: &mut NoisyOracle, x: &[f64], sigma: f64, rng: &mut SimRng) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    let z = scale(&gaussian_vec(x.len(), rng), sigma);
    let fz = oracle.query_value(&add(x, &z))?;
    let fx = oracle.query_value(x)?;
    Ok(scale(&z, (fz - fx) / (sigma * sigma)))
}

/// `grad f(x+z)` with `z ~ N(0, sigma^2 I)`; one first-order query.
pub fn first_stoch_grad_sample(oracle: &mut NoisyOracle, x: &[f64], sigma: f64, rng: &mut SimRng) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    let z = scale(&gaussian_vec(x.len(), rng), sigma);
    oracle.query_gradient(&add(x, &z))
}

/// Ledger-free stream of zeroth-order smoothed-gradient samples at a fixed point.
pub struct ZerothSampler<'a> {
    oracle: &'a NoisyOracle,
    x: Vec<f64>,
    fx: f64,
    sigma: f64,
    sigma0: Option<f64>,
}

impl<'a> ZerothSampler<'a> {
    pub fn new(oracle: &'a NoisyOracle, x: &[f64], sigma: f64, sigma0: Option<f64>) -> Result<Self> {
        check_sigma(sigma)?;
        let fx = oracle.peek_value(x)?;
        Ok(ZerothSampler { oracle, x: x.to_vec(), fx, sigma, sigma0 })
    }
}

impl VectorSampler for ZerothSampler<'_> {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn sample(&self, rng: &mut SimRng) -> Result<Vec<f64>> {
        let z = scale(&gaussian_vec(self.x.len(), rng), self.sigma);
        let fz = self.oracle.peek_value(&add(&self.x, &z))?;
        Ok(scale(&z, (fz - self.fx) / (self.sigma * self.sigma)))
    }

    fn analytic_mean(&self) -> Option<Vec<f64>> {
        self.oracle.smoothed_gradient(&self.x, self.sigma)
    }

    fn sigma0(&self) -> Option<f64> {
        self.sigma0
    }
}

/// Ledger-free stream of `grad f(x+z)` samples.
pub struct FirstSampler<'a> {
    oracle: &'a NoisyOracle,
    x: Vec<f64>,
    sigma: f64,
    sigma0: Option<f64>,
}

impl<'a> FirstSampler<'a> {
    pub fn new(oracle: &'a NoisyOracle, x: &[f64], sigma: f64, sigma0: Option<f64>) -> Result<Self> {
        check_sigma(sigma)?;
        if !oracle.has_first_order() {
            return Err(Error::Capability("oracle has no first-order access".into()));
        }
        Ok(FirstSampler { oracle, x: x.to_vec(), sigma, sigma0 })
    }
}

impl VectorSampler for FirstSampler<'_> {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn sample(&self, rng: &mut SimRng) -> Result<Vec<f64>> {
        let z = scale(&gaussian_vec(self.x.len(), rng), self.sigma);
        self.oracle.peek_gradient(&add(&self.x, &z))
    }

    fn analytic_mean(&self) -> Option<Vec<f64>> {
        self.oracle.smoothed_first_gradient(&self.x, self.sigma)
    }

    fn sigma0(&self) -> Option<f64> {
        self.sigma0
    }
}

fn check_nmc(n_mc: usize) -> Result<()> {
    if n_mc < 2 {
        return Err(Error::Config("n_mc must be at least 2".into()));
    }
    Ok(())
}

/// Monte Carlo estimate of `E[f(x+z)]` with its standard error. Ledger-free.
pub fn smooth_value_mc(oracle: &NoisyOracle, x: &[f64], sigma: f64, n_mc: usize, rng: &mut SimRng) -> Result<(f64, f64)> {
    check_sigma(sigma)?;
    check_nmc(n_mc)?;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n_mc {
        let z = scale(&gaussian_vec(x.len(), rng), sigma);
        let v = oracle.peek_value(&add(x, &z))?;
        s += v;
        s2 += v * v;
    }
    let n = n_mc as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Monte Carlo estimate of the smoothed gradient with per-coordinate standard errors.
pub fn smooth_grad_mc(
    oracle: &NoisyOracle,
    x: &[f64],
    sigma: f64,
    n_mc: usize,
    rng: &mut SimRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_nmc(n_mc)?;
    let sampler = ZerothSampler::new(oracle, x, sigma, None)?;
    let d = x.len();
    let mut s = vec![0.0; d];
    let mut s2 = vec![0.0; d];
    for _ in 0..n_mc {
        let g = sampler.sample(rng)?;
        axpy(&mut s, 1.0, &g);
        for (a, gi) in s2.iter_mut().zip(&g) {
            *a += gi * gi;
        }
    }
    let n = n_mc as f64;
    let mean = scale(&s, 1.0 / n);
    let se = mean
        .iter()
        .zip(&s2)
        .map(|(m, q)| (((q - n * m * m) / (n - 1.0)).max(0.0) / n).sqrt())
        .collect();
    Ok((mean, se))
}

#[cfg(test)]
mod tests {
    /// Measured once on the noisy planted quartic and frozen.
    const CLOSENESS_C: f64 = 0.05;

    use super::*;
    use crate::linalg::dot;
    use crate::objective::{FnObjective, Objective};
    use crate::rng::stream;
    use std::sync::Arc;

    fn oracle(obj: FnObjective) -> NoisyOracle {
        NoisyOracle::exact(Arc::new(obj) as Arc<dyn Objective>)
    }

    fn linear(a: Vec<f64>) -> FnObjective {
        let d = a.len();
        let (a1, a2) = (a.clone(), a);
        FnObjective::new(d, move |x| dot(&a1, x), move |_| a2.clone(), move |_, v| vec![0.0; v.len()])
    }

    fn bowl(d: usize) -> FnObjective {
        FnObjective::new(d, |x| dot(x, x), |x| scale(x, 2.0), |_, v| scale(v, 2.0))
    }

    #[test]
    fn selection_examples() {
        let p = ProblemParams::new(100, 1.0, 1.0, 1.0, 0.01);
        let s = choose_zeroth_smoothing(&p).unwrap();
        assert!((s.sigma - 0.01).abs() < 1e-15);
        assert!((s.eps_prime - 0.01 / 200.0).abs() < 1e-18);
        assert!((choose_first_smoothing(&p).unwrap().sigma - 0.01).abs() < 1e-15);
        let p1 = ProblemParams::new(1, 1.0, 1.0, 4.0, 0.04);
        let s1 = choose_zeroth_smoothing(&p1).unwrap();
        assert!((s1.sigma - 0.1).abs() < 1e-15);
        assert!((s1.eps_prime - 0.002).abs() < 1e-15);
        assert!(s.ell_prime >= p.ell && s.rho_prime >= p.rho && s.eps_prime <= p.eps);
    }

    #[test]
    fn selection_rejects_noise_outside_regime() {
        let mut p = ProblemParams::new(100, 1.0, 1.0, 1.0, 0.01);
        p.nu = 1e-3;
        assert!(matches!(choose_zeroth_smoothing(&p), Err(Error::Regime(_))));
        p.nu = 0.0;
        p.nu_tilde = 0.01;
        assert!(matches!(choose_first_smoothing(&p), Err(Error::Regime(_))));
    }

    #[test]
    fn zeroth_sample_of_constant_is_zero() {
        let mut o = oracle(FnObjective::new(3, |_| 2.5, |_| vec![0.0; 3], |_, _| vec![0.0; 3]));
        let g = zeroth_stoch_grad_sample(&mut o, &[1.0, 2.0, 3.0], 0.3, &mut stream(0, 0, "s")).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        assert_eq!(o.ledger().zeroth, 2);
    }

    #[test]
    fn zeroth_samples_unbiased_for_linear_and_quadratic() {
        let a = vec![1.0, -2.0, 0.5];
        let o = oracle(linear(a.clone()));
        let (g, se) = smooth_grad_mc(&o, &[0.3, 0.1, -0.2], 0.1, 100_000, &mut stream(1, 0, "s")).unwrap();
        for i in 0..3 {
            assert!((g[i] - a[i]).abs() <= 4.0 * se[i], "{i}: {} vs {}", g[i], a[i]);
        }
        let x = [0.5, -0.25];
        let o = oracle(bowl(2));
        let (g, se) = smooth_grad_mc(&o, &x, 0.1, 100_000, &mut stream(2, 0, "s")).unwrap();
        for i in 0..2 {
            assert!((g[i] - 2.0 * x[i]).abs() <= 5.0 * se[i]);
        }
    }

    #[test]
    fn first_sample_mean_on_quadratic() {
        let x = [0.5, -1.0, 0.0];
        let mut o = oracle(bowl(3));
        let mut rng = stream(3, 0, "s");
        let n = 20_000;
        let mut acc = vec![0.0; 3];
        for _ in 0..n {
            axpy(&mut acc, 1.0 / n as f64, &first_stoch_grad_sample(&mut o, &x, 0.2, &mut rng).unwrap());
        }
        for i in 0..3 {
            assert!((acc[i] - 2.0 * x[i]).abs() < 5.0 * 0.4 / (n as f64).sqrt());
        }
        assert_eq!(o.ledger().first, n);
    }

    #[test]
    fn smoothed_value_of_square_norm() {
        let o = oracle(bowl(10));
        let (v, se) = smooth_value_mc(&o, &[0.0; 10], 0.1, 50_000, &mut stream(4, 0, "s")).unwrap();
        assert!((v - 0.1).abs() <= 4.0 * se);
        let c = oracle(FnObjective::new(2, |_| 3.0, |_| vec![0.0; 2], |_, _| vec![0.0; 2]));
        assert_eq!(smooth_value_mc(&c, &[1.0, 1.0], 0.5, 10, &mut stream(0, 0, "s")).unwrap(), (3.0, 0.0));
    }

    #[test]
    fn smoothed_gradient_tracks_true_gradient() {
        use crate::instances::{CosineNoise, PlantedQuartic};
        use crate::linalg::{norm, sub, uniform_ball};
        use crate::oracles::{FirstNoiseModel, ZerothNoiseModel};
        let d = 5;
        let inst = PlantedQuartic::new(d);
        let rho = inst.params(0.01).rho;
        let mut rng = stream(5, 0, "closeness");
        let mut worst: f64 = 0.0;
        for &nu in &[0.0, 1e-3, 1e-2] {
            let noise = Arc::new(CosineNoise::sample(inst, nu, 1.0, &mut rng));
            let o = NoisyOracle::new(
                Arc::new(inst),
                ZerothNoiseModel::InstanceDefined(noise.clone()),
                Some(FirstNoiseModel::InstanceDefined(noise)),
            );
            for &sigma in &[0.05, 0.1, 0.2] {
                let x = uniform_ball(d, 1.0, &mut rng);
                let (g, se) = smooth_grad_mc(&o, &x, sigma, 200_000, &mut rng).unwrap();
                let gap = (norm(&sub(&g, &inst.gradient(&x))) - 4.0 * norm(&se)).max(0.0);
                worst = worst.max(gap / (rho * d as f64 * sigma * sigma + nu / sigma));
            }
        }
        assert!(worst <= CLOSENESS_C, "{worst}");
    }
}
