use serde::{Deserialize, Serialize};

use super::{chi_fixed_point, verified, IterRecord, RunResult, StepEvents};
use crate::error::{Error, Result};
use crate::linalg::{norm, sub, uniform_ball};
use crate::objective::ProblemParams;
use crate::oracles::NoisyOracle;
use crate::qsub::{jordan_gradient_estimate, JordanConfig, JordanMode};
use crate::rng::SimRng;
use crate::smoothing::SmoothingParams;
use crate::sosp::sosp_check;

/// Which parameter block the defaults come from; they differ in the confidence denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PgdVariant {
    QuantumGradient,
    FirstOrder,
    SmoothedZeroth,
    SmoothedFirst,
}

impl PgdVariant {
    fn denominator(self) -> f64 {
        match self {
            PgdVariant::QuantumGradient => 32.0,
            PgdVariant::FirstOrder | PgdVariant::SmoothedFirst => 4.0,
            PgdVariant::SmoothedZeroth => 16.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgdOptions {
    pub c: f64,
    /// Default iteration cap as a multiple of the escape horizon.
    pub iter_factor: f64,
}

impl Default for PgdOptions {
    fn default() -> Self {
        PgdOptions { c: 8.0, iter_factor: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgdConfig {
    pub eta: f64,
    /// Perturbation radius.
    pub r: f64,
    /// Escape horizon; also the spacing of SOSP checkpoints.
    pub t_escape: usize,
    pub f_drop: f64,
    pub delta0: f64,
    pub chi: f64,
    pub c: f64,
    pub max_iters: usize,
    /// Accuracy and Hessian-Lipschitz constant used to verify checkpoints on the exact function.
    pub eps: f64,
    pub rho: f64,
    pub record_log: bool,
}

impl PgdConfig {
    pub fn from_params(p: &ProblemParams, delta: f64, variant: PgdVariant) -> Result<Self> {
        Self::from_params_with(p, delta, variant, &PgdOptions::default())
    }

    pub fn from_params_with(p: &ProblemParams, delta: f64, variant: PgdVariant, opts: &PgdOptions) -> Result<Self> {
        p.validate_for_algorithm()?;
        Self::build(p.d, p.ell, p.rho, p.eps, p.b, delta, variant, opts, p.eps, p.rho)
    }

    /// Parameters for descent on the smoothed surrogate; checkpoints still verify the exact
    /// function at the original accuracy.
    pub fn for_smoothed(
        p: &ProblemParams,
        sm: &SmoothingParams,
        delta: f64,
        variant: PgdVariant,
        opts: &PgdOptions,
    ) -> Result<Self> {
        p.validate()?;
        Self::build(p.d, sm.ell_prime, sm.rho_prime, sm.eps_prime, p.delta_f, delta, variant, opts, p.eps, p.rho)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        d: usize,
        ell: f64,
        rho: f64,
        eps: f64,
        scale: f64,
        delta: f64,
        variant: PgdVariant,
        opts: &PgdOptions,
        check_eps: f64,
        check_rho: f64,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) || !(opts.c > 0.0) || !(opts.iter_factor > 0.0) {
            return Err(Error::Config("need delta in (0, 1), c > 0 and iter_factor > 0".into()));
        }
        let (chi, delta0) = chi_fixed_point(d, ell, rho, eps, scale, delta, variant.denominator());
        let eta = 1.0 / ell;
        let c = opts.c;
        let t_escape = (chi * c / (eta * (rho * eps).sqrt())).ceil() as usize;
        Ok(PgdConfig {
            eta,
            r: eps * chi.powi(-3) * c.powi(-6),
            t_escape,
            f_drop: (eps.powi(3) / rho).sqrt() * chi.powi(-3) * c.powi(-5),
            delta0,
            chi,
            c,
            max_iters: (opts.iter_factor * t_escape as f64).ceil() as usize,
            eps: check_eps,
            rho: check_rho,
            record_log: false,
        })
    }

    /// Gradient-estimation contract whose failure probability matches `delta0`.
    pub fn jordan(&self, mode: JordanMode, d: usize, nu: f64, ell: f64) -> Result<JordanConfig> {
        JordanConfig::for_failure_prob(self.delta0, mode, d, nu, ell)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.eta, self.r, self.delta0, self.chi, self.c, self.eps, self.rho].iter().all(|v| *v > 0.0)
            && self.t_escape > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid descent configuration {self:?}")))
        }
    }
}

/// Perturbed descent driven by an arbitrary gradient source.
pub(super) fn perturbed_descent(
    oracle: &mut NoisyOracle,
    x0: &[f64],
    cfg: &PgdConfig,
    rng: &mut SimRng,
    warnings: Vec<String>,
    mut estimate: impl FnMut(&mut NoisyOracle, &[f64], &mut SimRng) -> Result<Vec<f64>>,
) -> Result<RunResult> {
    cfg.validate()?;
    if x0.len() != oracle.dim() {
        return Err(Error::Config(format!("start point has length {}, oracle dimension {}", x0.len(), oracle.dim())));
    }
    let target = oracle.target_arc();
    let mut x = x0.to_vec();
    let mut log = cfg.record_log.then(Vec::new);
    let mut iterations = cfg.max_iters;
    let mut stopped_early = false;
    for t in 0..cfg.max_iters {
        if t % cfg.t_escape == 0 && verified(target.as_ref(), &x, cfg.eps, cfg.rho)? {
            iterations = t;
            stopped_early = true;
            break;
        }
        let g = estimate(oracle, &x, rng)?;
        let xi = uniform_ball(x.len(), cfg.r, rng);
        let next: Vec<f64> = x.iter().zip(&g).zip(&xi).map(|((a, b), c)| a - cfg.eta * (b + c)).collect();
        if let Some(log) = log.as_mut() {
            let exact = target.gradient(&x);
            log.push(IterRecord {
                t,
                value: target.value(&x),
                grad_norm: norm(&exact),
                est_error: norm(&sub(&g, &exact)),
                est_norm: norm(&g),
                next_value: target.value(&next),
                hamiltonian: None,
                episode_curvature: None,
                events: StepEvents { perturbed: true, ..Default::default() },
            });
        }
        x = next;
    }
    let verdict = sosp_check(target.as_ref(), &x, cfg.eps, cfg.rho)?;
    Ok(RunResult {
        iterations,
        ledger: oracle.ledger(),
        x,
        verdict,
        stopped_early,
        warnings,
        degenerate_episodes: 0,
        log,
    })
}

/// Perturbed gradient descent with one-query gradient estimates.
pub fn pgd_qgc(
    oracle: &mut NoisyOracle,
    x0: &[f64],
    cfg: &PgdConfig,
    jordan: &JordanConfig,
    rng: &mut SimRng,
) -> Result<RunResult> {
    let mut warnings = Vec::new();
    if jordan.error_bound() > cfg.eps / 20.0 {
        warnings.push(format!(
            "gradient estimate radius {} exceeds eps/20 = {}",
            jordan.error_bound(),
            cfg.eps / 20.0
        ));
    }
    perturbed_descent(oracle, x0, cfg, rng, warnings, |o, x, r| jordan_gradient_estimate(o, x, jordan, r))
}

/// Perturbed descent on noisy gradients, one first-order query per iteration.
pub fn first_order_pgd(oracle: &mut NoisyOracle, x0: &[f64], cfg: &PgdConfig, rng: &mut SimRng) -> Result<RunResult> {
    if !oracle.has_first_order() {
        return Err(Error::Capability("first-order descent needs a gradient oracle".into()));
    }
    perturbed_descent(oracle, x0, cfg, rng, Vec::new(), |o, x, _| o.query_gradient(x))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::instances::{PlantedQuartic, Quadratic};
    use crate::rng::stream;

    #[test]
    fn defaults_follow_the_parameter_block() {
        let p = PlantedQuartic::new(2).params(0.01);
        let cfg = PgdConfig::from_params(&p, 0.1, PgdVariant::QuantumGradient).unwrap();
        assert_eq!(cfg.eta, 0.25);
        assert!((cfg.r - 0.01 * cfg.chi.powi(-3) * 8f64.powi(-6)).abs() < 1e-24);
        assert_eq!(cfg.t_escape, (cfg.chi * 8.0 * 4.0 / (0.08f64).sqrt()).ceil() as usize);
        assert_eq!(cfg.max_iters, 20 * cfg.t_escape);
        let first = PgdConfig::from_params(&p, 0.1, PgdVariant::FirstOrder).unwrap();
        assert!(first.delta0 > cfg.delta0);
    }

    #[test]
    fn quadratic_converges_quickly() {
        let d = 4;
        let q = Arc::new(Quadratic::scaled_norm(d, 1.0));
        let mut p = ProblemParams::new(d, 1.0, 2.0, 1.0, 1e-3);
        p.delta_f = 1.0;
        let mut cfg = PgdConfig::from_params(&p, 0.1, PgdVariant::QuantumGradient).unwrap();
        let k = ((1.0f64 / p.eps).ln() / (1.0 / (1.0 - cfg.eta)).ln()).ceil() as usize + 1;
        cfg.max_iters = k;
        let jordan = cfg.jordan(JordanMode::ContractSim, d, 0.0, p.ell).unwrap();
        let mut oracle = NoisyOracle::exact(q);
        let mut x0 = vec![0.0; d];
        x0[0] = 1.0;
        let res = pgd_qgc(&mut oracle, &x0, &cfg, &jordan, &mut stream(1, 0, "q")).unwrap();
        assert!(res.verdict.is_sosp);
        assert_eq!(res.ledger.zeroth as usize, res.iterations);
    }

    #[test]
    fn escapes_planted_saddle() {
        let inst = Arc::new(PlantedQuartic::new(2));
        let p = inst.params(0.01);
        let cfg = PgdConfig::from_params(&p, 0.1, PgdVariant::QuantumGradient).unwrap();
        let jordan = cfg.jordan(JordanMode::ContractSim, 2, 0.0, p.ell).unwrap();
        let mut wins = 0;
        for seed in 0..100 {
            let mut oracle = NoisyOracle::exact(inst.clone());
            let res = pgd_qgc(&mut oracle, &[0.0, 0.0], &cfg, &jordan, &mut stream(seed, 0, "pgd")).unwrap();
            let near = inst.minima().iter().any(|m| norm(&sub(&res.x, m)) < 0.1);
            if res.verdict.is_sosp && near {
                wins += 1;
            }
        }
        assert!(wins >= 95, "{wins}");
    }

    #[test]
    fn large_gradient_steps_descend() {
        let inst = Arc::new(PlantedQuartic::new(3));
        let p = inst.params(0.05);
        let mut cfg = PgdConfig::from_params(&p, 0.1, PgdVariant::FirstOrder).unwrap();
        cfg.record_log = true;
        let mut oracle = NoisyOracle::exact(inst);
        let res = first_order_pgd(&mut oracle, &[0.3, 1.0, -0.8], &cfg, &mut stream(2, 0, "fo")).unwrap();
        assert!(res.verdict.is_sosp);
        let log = res.log.unwrap();
        let checked = log
            .iter()
            .filter(|r| r.grad_norm >= p.eps && r.est_error <= p.eps / 20.0)
            .inspect(|r| assert!(r.next_value - r.value <= -cfg.eta * p.eps * p.eps / 4.0 + 1e-12))
            .count();
        assert!(checked > 0);
        assert_eq!(res.ledger.first as usize, res.iterations);
    }
}
