use serde::{Deserialize, Serialize};

use super::pgd::perturbed_descent;
use super::{PgdConfig, PgdOptions, PgdVariant, RunResult};
use crate::error::{Error, Result};
use crate::objective::{ProblemParams, QueryLedger};
use crate::oracles::NoisyOracle;
use crate::qsub::{quantum_mean_estimate, required_batch_classical, required_batch_quantum, MeanEstConfig, MeanEstMode};
use crate::smoothing::{
    choose_first_smoothing_with, choose_zeroth_smoothing_with, FirstSampler, SmoothingOptions, SmoothingParams,
    ZerothSampler,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsgdOptions {
    pub smoothing: SmoothingOptions,
    pub pgd: PgdOptions,
    pub c_q: f64,
}

impl Default for PsgdOptions {
    fn default() -> Self {
        PsgdOptions { smoothing: SmoothingOptions::default(), pgd: PgdOptions::default(), c_q: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsgdConfig {
    pub smoothing: SmoothingParams,
    pub mean_cfg: MeanEstConfig,
    pub pgd: PgdConfig,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl PsgdConfig {
    /// Zeroth-order configuration. A noise level outside the smoothing regime is recorded as a
    /// warning rather than rejected.
    pub fn zeroth(p: &ProblemParams, delta: f64, mode: MeanEstMode, opts: &PsgdOptions) -> Result<Self> {
        Self::build(p, delta, mode, opts, PgdVariant::SmoothedZeroth)
    }

    pub fn first(p: &ProblemParams, delta: f64, mode: MeanEstMode, opts: &PsgdOptions) -> Result<Self> {
        Self::build(p, delta, mode, opts, PgdVariant::SmoothedFirst)
    }

    fn build(p: &ProblemParams, delta: f64, mode: MeanEstMode, opts: &PsgdOptions, variant: PgdVariant) -> Result<Self> {
        let choose = |o: &SmoothingOptions| match variant {
            PgdVariant::SmoothedFirst => choose_first_smoothing_with(p, o),
            _ => choose_zeroth_smoothing_with(p, o),
        };
        let mut warnings = Vec::new();
        let smoothing = match choose(&opts.smoothing) {
            Err(Error::Regime(msg)) => {
                warnings.push(msg);
                choose(&SmoothingOptions { c_regime: f64::INFINITY, ..opts.smoothing })?
            }
            other => other?,
        };
        let pgd = PgdConfig::for_smoothed(p, &smoothing, delta, variant, &opts.pgd)?;
        let target = smoothing.eps_prime / 20.0;
        let m = match mode {
            MeanEstMode::QuantumSim => required_batch_quantum(p.d, smoothing.sigma0, target, pgd.delta0, opts.c_q),
            MeanEstMode::ClassicalBatch => required_batch_classical(p.d, smoothing.sigma0, target, pgd.delta0),
        };
        let mean_cfg = MeanEstConfig { m: m.max(1), delta: pgd.delta0, c_q: opts.c_q, mode };
        Ok(PsgdConfig { smoothing, mean_cfg, pgd, warnings })
    }
}

fn charge(oracle: &mut NoisyOracle, local: QueryLedger) {
    oracle.charge_binary(local.binary);
    for _ in 0..local.estimator_calls {
        oracle.charge_estimator();
    }
}

/// Perturbed descent on the smoothed function with mean-estimated zeroth-order gradients.
pub fn psgd_qme(oracle: &mut NoisyOracle, x0: &[f64], cfg: &PsgdConfig, rng: &mut crate::rng::SimRng) -> Result<RunResult> {
    let (sigma, sigma0) = (cfg.smoothing.sigma, cfg.smoothing.sigma0);
    perturbed_descent(oracle, x0, &cfg.pgd, rng, cfg.warnings.clone(), |o, x, r| {
        let mut local = QueryLedger::default();
        let g = {
            let sampler = ZerothSampler::new(o, x, sigma, Some(sigma0))?;
            quantum_mean_estimate(&sampler, &cfg.mean_cfg, &mut local, r)?
        };
        charge(o, local);
        Ok(g)
    })
}

/// As [`psgd_qme`], sampling gradients of the noisy function at perturbed points.
pub fn fpsgd_qme(oracle: &mut NoisyOracle, x0: &[f64], cfg: &PsgdConfig, rng: &mut crate::rng::SimRng) -> Result<RunResult> {
    if !oracle.has_first_order() {
        return Err(Error::Capability("first-order oracle required".into()));
    }
    let (sigma, sigma0) = (cfg.smoothing.sigma, cfg.smoothing.sigma0);
    perturbed_descent(oracle, x0, &cfg.pgd, rng, cfg.warnings.clone(), |o, x, r| {
        let mut local = QueryLedger::default();
        let g = {
            let sampler = FirstSampler::new(o, x, sigma, Some(sigma0))?;
            quantum_mean_estimate(&sampler, &cfg.mean_cfg, &mut local, r)?
        };
        charge(o, local);
        Ok(g)
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::instances::{PlantedQuartic, Quadratic};
    use crate::rng::stream;

    #[test]
    fn binary_count_is_iterations_times_batch() {
        let d = 10;
        let q = Arc::new(Quadratic::scaled_norm(d, 1.0));
        let p = ProblemParams::new(d, 1.0, 2.0, 1.0, 0.1);
        let cfg = PsgdConfig::zeroth(&p, 0.1, MeanEstMode::QuantumSim, &PsgdOptions::default()).unwrap();
        let mut oracle = NoisyOracle::exact(q);
        let x0 = vec![0.5; d];
        let res = psgd_qme(&mut oracle, &x0, &cfg, &mut stream(1, 0, "psgd")).unwrap();
        assert!(res.verdict.is_sosp);
        assert_eq!(res.ledger.binary, res.iterations as u128 * cfg.mean_cfg.m as u128);
        assert_eq!(res.ledger.estimator_calls, res.iterations as u64);
    }

    #[test]
    fn batch_growth_with_dimension() {
        let m = |d: usize, mode| {
            let p = PlantedQuartic::new(d).params(0.1);
            PsgdConfig::zeroth(&p, 0.1, mode, &PsgdOptions::default()).unwrap().mean_cfg.m as f64
        };
        let q = m(100, MeanEstMode::QuantumSim) / m(25, MeanEstMode::QuantumSim);
        let c = m(100, MeanEstMode::ClassicalBatch) / m(25, MeanEstMode::ClassicalBatch);
        assert!(q > 8.0 * 0.9 && q < 8.0 * 1.6, "{q}");
        assert!(c > 64.0 * 0.9 && c < 64.0 * 2.0, "{c}");
    }

    #[test]
    fn regime_violation_is_a_warning() {
        let mut p = PlantedQuartic::new(4).params(0.1);
        p.nu = 1.0;
        let cfg = PsgdConfig::zeroth(&p, 0.1, MeanEstMode::QuantumSim, &PsgdOptions::default()).unwrap();
        assert_eq!(cfg.warnings.len(), 1);
    }

    #[test]
    fn first_order_variant_escapes() {
        let inst = Arc::new(PlantedQuartic::new(3));
        let p = inst.params(0.05);
        let cfg = PsgdConfig::first(&p, 0.1, MeanEstMode::QuantumSim, &PsgdOptions::default()).unwrap();
        let mut oracle = NoisyOracle::exact(inst);
        let res = fpsgd_qme(&mut oracle, &[0.0; 3], &cfg, &mut stream(4, 0, "fpsgd")).unwrap();
        assert!(res.verdict.is_sosp);
        assert_eq!(res.ledger.first, 0);
        assert_eq!(res.ledger.binary, res.iterations as u128 * cfg.mean_cfg.m as u128);
    }
}
