//! Contract-level simulations of the gradient-estimation and mean-estimation subroutines.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, scale, sub, unit_sphere};
use crate::objective::QueryLedger;
use crate::oracles::NoisyOracle;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JordanMode {
    ContractSim,
    FiniteDiffBaseline,
}

/// Confidence and noise inputs for one-query gradient estimation. The error radius and
/// failure probability are derived on demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JordanConfig {
    omega: f64,
    pub mode: JordanMode,
    pub d: usize,
    pub nu: f64,
    pub ell: f64,
}

impl JordanConfig {
    pub fn new(omega: f64, mode: JordanMode, d: usize, nu: f64, ell: f64) -> Result<Self> {
        if !(omega > 1.0) {
            return Err(Error::Config(format!("omega must exceed 1, got {omega}")));
        }
        if d == 0 || nu < 0.0 || !(ell > 0.0) {
            return Err(Error::Config("jordan config needs d >= 1, nu >= 0, ell > 0".into()));
        }
        Ok(JordanConfig { omega, mode, d, nu, ell })
    }

    /// Pick `omega` so the failure probability equals `delta0`.
    pub fn for_failure_prob(delta0: f64, mode: JordanMode, d: usize, nu: f64, ell: f64) -> Result<Self> {
        if !(delta0 > 0.0) {
            return Err(Error::Config("delta0 must be positive".into()));
        }
        Self::new(1.0 + d as f64 / delta0, mode, d, nu, ell)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn error_bound(&self) -> f64 {
        400.0 * self.omega * self.d as f64 * (self.nu * self.ell).sqrt()
    }

    pub fn failure_prob(&self) -> f64 {
        (self.d as f64 / (self.omega - 1.0)).min(1.0)
    }

    /// Largest noise level for which `error_bound` stays at or below `target`.
    pub fn max_nu_for(target: f64, omega: f64, d: usize, ell: f64) -> f64 {
        (target / (400.0 * omega * d as f64)).powi(2) / ell
    }
}

fn sphere_shell<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    scale(&unit_sphere(d, rng), radius)
}

/// Gradient estimate at `x`, charged to the oracle's ledger.
pub fn jordan_gradient_estimate(
    oracle: &mut NoisyOracle,
    x: &[f64],
    cfg: &JordanConfig,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    match cfg.mode {
        JordanMode::ContractSim => {
            oracle.peek_value(x)?;
            let mut g = oracle.target().gradient(x);
            oracle.charge_zeroth(1);
            let bound = cfg.error_bound();
            if bound == 0.0 {
                return Ok(g);
            }
            let radius = if rng.random::<f64>() < cfg.failure_prob() {
                bound * rng.random_range(1.0..=10.0)
            } else {
                bound * rng.random::<f64>()
            };
            let e = sphere_shell(g.len(), radius, rng);
            axpy(&mut g, 1.0, &e);
            Ok(g)
        }
        JordanMode::FiniteDiffBaseline => {
            let h = if cfg.nu > 0.0 { (cfg.nu / cfg.ell).sqrt() } else { oracle.target().fd_step() };
            let mut p = x.to_vec();
            let mut g = vec![0.0; x.len()];
            for i in 0..x.len() {
                let xi = p[i];
                p[i] = xi + h;
                let fp = oracle.query_value(&p)?;
                p[i] = xi - h;
                let fm = oracle.query_value(&p)?;
                p[i] = xi;
                g[i] = (fp - fm) / (2.0 * h);
            }
            Ok(g)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanEstMode {
    QuantumSim,
    ClassicalBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanEstConfig {
    pub m: u64,
    pub delta: f64,
    pub c_q: f64,
    pub mode: MeanEstMode,
}

impl MeanEstConfig {
    pub fn new(m: u64, delta: f64, mode: MeanEstMode) -> Self {
        MeanEstConfig { m, delta, c_q: 1.0, mode }
    }

    /// Error radius of the quantum contract for a stream with per-coordinate scale `sigma0`.
    pub fn quantum_error(&self, d: usize, sigma0: f64) -> f64 {
        let (m, d) = (self.m as f64, d as f64);
        if m <= d {
            self.c_q * sigma0 * (d / m).sqrt()
        } else {
            self.c_q * d.sqrt() * sigma0 * (d / self.delta).ln() / m
        }
    }
}

/// Source of i.i.d. vector samples. Sampling never touches a ledger; callers charge the
/// estimator's declared cost.
pub trait VectorSampler {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut SimRng) -> Result<Vec<f64>>;

    fn analytic_mean(&self) -> Option<Vec<f64>> {
        None
    }

    /// Per-coordinate scale: the trace of the covariance is `d * sigma0^2`.
    fn sigma0(&self) -> Option<f64> {
        None
    }
}

/// Largest batch simulated sample by sample; larger classical batches use a rescaled pilot.
pub const CLASSICAL_DIRECT_CAP: u64 = 10_000;
const PILOT_SAMPLES: u64 = 1_000;
const REFERENCE_CAP: u64 = 2_000_000;

fn empirical_mean(sampler: &dyn VectorSampler, n: u64, rng: &mut SimRng) -> Result<(Vec<f64>, f64)> {
    let d = sampler.dim();
    let mut mean = vec![0.0; d];
    let mut sq = 0.0;
    for _ in 0..n {
        let s = sampler.sample(rng)?;
        sq += dot(&s, &s);
        axpy(&mut mean, 1.0, &s);
    }
    let mean = scale(&mean, 1.0 / n as f64);
    let trace = (sq / n as f64 - dot(&mean, &mean)).max(0.0);
    Ok((mean, trace))
}

/// Mean estimate of the sampler's distribution under the configured contract.
/// Charges `cfg.m` to `ledger.binary`.
pub fn quantum_mean_estimate(
    sampler: &dyn VectorSampler,
    cfg: &MeanEstConfig,
    ledger: &mut QueryLedger,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let d = sampler.dim();
    if cfg.m == 0 {
        return Err(Error::Config("mean estimation needs m >= 1".into()));
    }
    let out = match cfg.mode {
        MeanEstMode::QuantumSim => {
            if (cfg.m as f64) < (d as f64 / cfg.delta).ln() {
                return Err(Error::Config(format!("m = {} below log(d/delta)", cfg.m)));
            }
            let (reference, sigma0) = match sampler.analytic_mean() {
                Some(mu) => {
                    let s0 = match sampler.sigma0() {
                        Some(s) => s,
                        None => empirical_mean(sampler, PILOT_SAMPLES, rng)?.1.sqrt() / (d as f64).sqrt(),
                    };
                    (mu, s0)
                }
                None => {
                    let n = cfg.m.saturating_mul(100);
                    if n > REFERENCE_CAP {
                        return Err(Error::Budget(format!("reference mean needs {n} samples")));
                    }
                    let (mu, trace) = empirical_mean(sampler, n, rng)?;
                    (mu, sampler.sigma0().unwrap_or((trace / d as f64).sqrt()))
                }
            };
            let e = cfg.quantum_error(d, sigma0);
            let mut est = reference;
            if e > 0.0 {
                let radius = e * rng.random::<f64>();
                axpy(&mut est, 1.0, &sphere_shell(d, radius, rng));
            }
            est
        }
        MeanEstMode::ClassicalBatch => {
            if cfg.m <= CLASSICAL_DIRECT_CAP {
                empirical_mean(sampler, cfg.m, rng)?.0
            } else {
                let mu = sampler.analytic_mean().ok_or_else(|| {
                    Error::Budget(format!("classical batch of {} without an analytic mean", cfg.m))
                })?;
                // Pilot mean fluctuation rescaled to the requested batch size.
                let (pilot, _) = empirical_mean(sampler, PILOT_SAMPLES, rng)?;
                let shrink = (PILOT_SAMPLES as f64 / cfg.m as f64).sqrt();
                let dev = sub(&pilot, &mu);
                let mut est = mu;
                axpy(&mut est, shrink, &dev);
                est
            }
        }
    };
    ledger.binary = ledger.binary.saturating_add(cfg.m as u128);
    ledger.estimator_calls += 1;
    Ok(out)
}

pub fn required_batch_classical(d: usize, sigma0: f64, eps_target: f64, delta: f64) -> u64 {
    let d = d as f64;
    (2.0 * sigma0 * sigma0 * d * (d / delta).ln() / (eps_target * eps_target)).ceil() as u64
}

pub fn required_batch_quantum(d: usize, sigma0: f64, eps_target: f64, delta: f64, c_q: f64) -> u64 {
    let d = d as f64;
    let floor = (d / delta).ln().ceil();
    let m = (c_q * d.sqrt() * sigma0 * (d / delta).ln() / eps_target).ceil();
    m.max(floor) as u64
}

/// Error of an estimate against a reference vector.
pub fn estimate_error(est: &[f64], reference: &[f64]) -> f64 {
    norm(&sub(est, reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_vec;
    use crate::objective::{FnObjective, Objective};
    use crate::oracles::{FirstNoiseModel, ZerothNoiseModel};
    use crate::rng::stream;
    use std::sync::Arc;

    fn bowl(d: usize) -> Arc<dyn Objective> {
        Arc::new(FnObjective::new(d, |x| dot(x, x), |x| scale(x, 2.0), |_, v| scale(v, 2.0)))
    }

    struct Gauss {
        mu: Vec<f64>,
        s: f64,
        declare_mean: bool,
    }
    impl VectorSampler for Gauss {
        fn dim(&self) -> usize {
            self.mu.len()
        }
        fn sample(&self, rng: &mut SimRng) -> Result<Vec<f64>> {
            let mut z = scale(&gaussian_vec(self.mu.len(), rng), self.s);
            axpy(&mut z, 1.0, &self.mu);
            Ok(z)
        }
        fn analytic_mean(&self) -> Option<Vec<f64>> {
            self.declare_mean.then(|| self.mu.clone())
        }
        fn sigma0(&self) -> Option<f64> {
            Some(self.s)
        }
    }

    #[test]
    fn jordan_derived_quantities() {
        let c = JordanConfig::new(400.0, JordanMode::ContractSim, 10, 0.0, 1.0).unwrap();
        assert!((c.failure_prob() - 10.0 / 399.0).abs() < 1e-15);
        let c = JordanConfig::new(4000.0, JordanMode::ContractSim, 100, 1e-12, 1.0).unwrap();
        assert!((c.error_bound() - 160.0).abs() < 1e-9);
        assert!(JordanConfig::new(1.0, JordanMode::ContractSim, 3, 0.0, 1.0).is_err());
        let c = JordanConfig::for_failure_prob(0.05, JordanMode::ContractSim, 10, 0.0, 1.0).unwrap();
        assert!((c.failure_prob() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn jordan_exact_without_noise() {
        let mut o = NoisyOracle::exact(bowl(3));
        let c = JordanConfig::new(10.0, JordanMode::ContractSim, 3, 0.0, 2.0).unwrap();
        let g = jordan_gradient_estimate(&mut o, &[1.0, 2.0, 3.0], &c, &mut stream(0, 0, "j")).unwrap();
        assert_eq!(g, vec![2.0, 4.0, 6.0]);
        assert_eq!(o.ledger().zeroth, 1);
    }

    #[test]
    fn jordan_errors_capped() {
        let mut o = NoisyOracle::exact(bowl(5));
        let c = JordanConfig::new(6.0, JordanMode::ContractSim, 5, 1e-10, 1.0).unwrap();
        let mut rng = stream(3, 0, "j");
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        let truth = scale(&x, 2.0);
        for _ in 0..2000 {
            let g = jordan_gradient_estimate(&mut o, &x, &c, &mut rng).unwrap();
            assert!(estimate_error(&g, &truth) <= 10.0 * c.error_bound() * (1.0 + 1e-12));
        }
        assert_eq!(o.ledger().zeroth, 2000);
    }

    #[test]
    fn finite_difference_baseline_charges_2d() {
        let mut o = NoisyOracle::new(bowl(4), ZerothNoiseModel::None, Some(FirstNoiseModel::None));
        let c = JordanConfig::new(2.0, JordanMode::FiniteDiffBaseline, 4, 0.0, 2.0).unwrap();
        let g = jordan_gradient_estimate(&mut o, &[1.0, 0.0, -1.0, 0.5], &c, &mut stream(0, 0, "j")).unwrap();
        assert!(estimate_error(&g, &[2.0, 0.0, -2.0, 1.0]) < 1e-8);
        assert_eq!(o.ledger().zeroth, 8);
    }

    #[test]
    fn batch_formulas() {
        assert_eq!(required_batch_classical(1, 0.0, 0.1, 0.5), 0);
        let mc = required_batch_classical(100, 1.0, 0.1, 0.01);
        assert_eq!(mc, 184_207);
        let mq = required_batch_quantum(100, 1.0, 0.1, 0.01, 1.0);
        assert_eq!(mq, 922);
        assert_eq!(required_batch_quantum(100, 0.0, 0.1, 0.01, 1.0), 10);
        let a = 2.0 * (200.0f64 / 0.01).ln();
        let b = 2.0 * (100.0f64 / 0.01).ln();
        let m1 = required_batch_classical(100, 1.0, 1.0, 0.01) as f64;
        let m2 = required_batch_classical(200, 1.0, 1.0, 0.01) as f64;
        assert!((m2 / m1 - 2.0 * a / b).abs() < 1e-3);
    }

    #[test]
    fn mean_estimation_contracts() {
        let mut rng = stream(5, 0, "m");
        let mut ledger = QueryLedger::default();
        let g = Gauss { mu: vec![1.0; 10], s: 0.0, declare_mean: false };
        let cfg = MeanEstConfig::new(50, 0.1, MeanEstMode::QuantumSim);
        assert_eq!(quantum_mean_estimate(&g, &cfg, &mut ledger, &mut rng).unwrap(), vec![1.0; 10]);
        assert_eq!(ledger.binary, 50);

        let g = Gauss { mu: vec![0.5; 10], s: 1.0, declare_mean: true };
        let cfg = MeanEstConfig::new(1000, 0.05, MeanEstMode::QuantumSim);
        let cap = cfg.quantum_error(10, 1.0);
        assert!((cap - 10f64.sqrt() * (200.0f64).ln() / 1000.0).abs() < 1e-15);
        for _ in 0..200 {
            let e = quantum_mean_estimate(&g, &cfg, &mut ledger, &mut rng).unwrap();
            assert!(estimate_error(&e, &g.mu) <= cap * (1.0 + 1e-12));
        }
        let small = MeanEstConfig::new(2, 0.5, MeanEstMode::QuantumSim);
        assert!(quantum_mean_estimate(&g, &small, &mut ledger, &mut rng).is_err());
    }

    #[test]
    fn classical_shortcut_matches_batch_spread() {
        let mut rng = stream(6, 0, "m");
        let mut ledger = QueryLedger::default();
        let g = Gauss { mu: vec![0.0; 4], s: 1.0, declare_mean: true };
        let cfg = MeanEstConfig::new(1_000_000, 0.05, MeanEstMode::ClassicalBatch);
        let mut sq = 0.0;
        let n = 200;
        for _ in 0..n {
            let e = quantum_mean_estimate(&g, &cfg, &mut ledger, &mut rng).unwrap();
            sq += dot(&e, &e);
        }
        // E||mean - mu||^2 = d / m
        let ratio = sq / n as f64 / (4.0 / 1e6);
        assert!(ratio > 0.7 && ratio < 1.3, "ratio {ratio}");
        assert_eq!(ledger.binary, 200_000_000);
        let blind = Gauss { mu: vec![0.0; 4], s: 1.0, declare_mean: false };
        assert!(matches!(quantum_mean_estimate(&blind, &cfg, &mut ledger, &mut rng), Err(Error::Budget(_))));
    }
}
