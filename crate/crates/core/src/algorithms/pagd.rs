use serde::{Deserialize, Serialize};

use super::{chi_fixed_point, hamiltonian, verified, IterRecord, RunResult, StepEvents};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, scale, sub, uniform_ball, unit_sphere};
use crate::objective::ProblemParams;
use crate::oracles::NoisyOracle;
use crate::qsub::{jordan_gradient_estimate, JordanConfig, JordanMode};
use crate::rng::SimRng;
use crate::sosp::sosp_check;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PagdOptions {
    pub c: f64,
    pub c_delta: f64,
    /// Constant in the perturbation radius.
    pub radius_scale: f64,
    /// Constant in the escape horizon.
    pub t_escape_scale: f64,
}

impl Default for PagdOptions {
    fn default() -> Self {
        PagdOptions { c: 8.0, c_delta: 8.0, radius_scale: 8.0, t_escape_scale: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PagdConfig {
    pub eta: f64,
    pub theta: f64,
    pub gamma: f64,
    /// Step length of the negative-curvature exploitation.
    pub s: f64,
    pub r: f64,
    pub t_escape: usize,
    pub t_inner: usize,
    pub f_drop: f64,
    pub delta0: f64,
    pub kappa: f64,
    pub chi: f64,
    pub c: f64,
    pub radius_scale: f64,
    pub t_escape_scale: f64,
    pub c_delta: f64,
    pub max_iters: usize,
    pub eps: f64,
    pub rho: f64,
    pub record_log: bool,
}

impl PagdConfig {
    pub fn from_params(p: &ProblemParams, delta: f64) -> Result<Self> {
        Self::from_params_with(p, delta, &PagdOptions::default())
    }

    pub fn from_params_with(p: &ProblemParams, delta: f64, o: &PagdOptions) -> Result<Self> {
        p.validate_for_algorithm()?;
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config("delta must lie in (0, 1)".into()));
        }
        let (d, ell, rho, eps, b) = (p.d as f64, p.ell, p.rho, p.eps, p.b);
        let eta = 1.0 / (4.0 * ell);
        let kappa = ell / (rho * eps).sqrt();
        let theta = 1.0 / (4.0 * kappa.sqrt());
        let gamma = theta * theta / eta;
        let delta0 = delta * eps.powf(1.75) / (o.c_delta * ell * b) * d.ln().max(1.0);
        let r = delta0 * eps / o.radius_scale * (std::f64::consts::PI / (rho * d)).sqrt();
        let t_escape = (o.t_escape_scale * kappa.sqrt() * (ell * d.sqrt() / (delta0 * (rho * eps).sqrt())).ln())
            .ceil()
            .max(1.0);
        let (chi, _) = chi_fixed_point(p.d, ell, rho, eps, b, delta, 1.0);
        let chi = chi.max((d * ell * b / (rho * eps * delta0)).ln()).max(1.0);
        let t_inner = (kappa.sqrt() * chi * o.c).ceil();
        let f_drop = (eps.powi(3) / rho).sqrt() * o.c.powi(-7);
        let cap = 3.0 * (2.0 * b * t_inner / f_drop).max(768.0 * b * t_escape * (rho / eps.powi(3)).sqrt());
        Ok(PagdConfig {
            eta,
            theta,
            gamma,
            s: gamma / (4.0 * rho),
            r,
            t_escape: t_escape as usize,
            t_inner: t_inner as usize,
            f_drop,
            delta0,
            kappa,
            chi,
            c: o.c,
            radius_scale: o.radius_scale,
            t_escape_scale: o.t_escape_scale,
            c_delta: o.c_delta,
            max_iters: cap.min(usize::MAX as f64 / 2.0) as usize,
            eps,
            rho,
            record_log: false,
        })
    }

    pub fn jordan(&self, mode: JordanMode, d: usize, nu: f64, ell: f64) -> Result<JordanConfig> {
        JordanConfig::for_failure_prob(self.delta0, mode, d, nu, ell)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.eta, self.theta, self.gamma, self.s, self.r, self.eps, self.rho].iter().all(|v| *v > 0.0);
        if !positive || self.t_escape == 0 {
            return Err(Error::Config(format!("invalid accelerated configuration {self:?}")));
        }
        if self.theta < 2.0 * self.eta * self.gamma - 1e-15 || self.theta > 0.5 {
            return Err(Error::Config(format!("theta = {} outside [2 eta gamma, 1/2]", self.theta)));
        }
        Ok(())
    }
}

/// Negative-curvature exploitation. Returns the new point and a zero velocity.
pub fn nce(oracle: &mut NoisyOracle, x: &[f64], v: &[f64], s: f64, rng: &mut SimRng) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(s > 0.0) {
        return Err(Error::Config(format!("step length must be positive, got {s}")));
    }
    let zero = vec![0.0; x.len()];
    let nv = norm(v);
    if nv >= s {
        return Ok((x.to_vec(), zero));
    }
    let step = if nv > 0.0 { scale(v, s / nv) } else { scale(&unit_sphere(x.len(), rng), s) };
    let plus: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
    let minus: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a - b).collect();
    let (fp, fm) = (oracle.query_value(&plus)?, oracle.query_value(&minus)?);
    Ok((if fm < fp { minus } else { plus }, zero))
}

/// Most recent gradient estimate, reused when the same point is queried again.
struct EstimateCache {
    last: Option<(Vec<f64>, Vec<f64>)>,
}

impl EstimateCache {
    fn get(
        &mut self,
        oracle: &mut NoisyOracle,
        x: &[f64],
        jordan: &JordanConfig,
        rng: &mut SimRng,
    ) -> Result<Vec<f64>> {
        if let Some((p, g)) = &self.last {
            if p.as_slice() == x {
                return Ok(g.clone());
            }
        }
        let g = jordan_gradient_estimate(oracle, x, jordan, rng)?;
        self.last = Some((x.to_vec(), g.clone()));
        Ok(g)
    }
}

fn renormalize(p: &[f64], center: &[f64], r: f64) -> Vec<f64> {
    let diff = sub(p, center);
    let n = norm(&diff);
    if n == 0.0 {
        return p.to_vec();
    }
    center.iter().zip(&diff).map(|(c, d)| c + r * d / n).collect()
}

/// Perturbed accelerated gradient descent with negative-curvature finding episodes.
pub fn pagd_ancf(
    oracle: &mut NoisyOracle,
    x0: &[f64],
    cfg: &PagdConfig,
    jordan: &JordanConfig,
    rng: &mut SimRng,
) -> Result<RunResult> {
    cfg.validate()?;
    let d = oracle.dim();
    if x0.len() != d {
        return Err(Error::Config(format!("start point has length {}, oracle dimension {d}", x0.len())));
    }
    let mut warnings = Vec::new();
    if jordan.error_bound() > cfg.eps / 20.0 {
        warnings.push(format!("gradient estimate radius {} exceeds eps/20", jordan.error_bound()));
    }
    let target = oracle.target_arc();
    let mut cache = EstimateCache { last: None };
    let mut x = x0.to_vec();
    let mut v = vec![0.0; d];
    let mut y = x.clone();
    let mut anchor = x.clone();
    let mut iota = vec![0.0; d];
    let mut episode_start: Option<usize> = None;
    let mut degenerate = 0;
    let mut log = cfg.record_log.then(Vec::new);
    let mut iterations = cfg.max_iters;
    let mut stopped_early = false;
    let curvature_len = 0.25 * (cfg.eps / cfg.rho).sqrt();
    let mut episode_curvature = None;

    for t in 0..cfg.max_iters {
        if t % cfg.t_escape == 0 && verified(target.as_ref(), &x, cfg.eps, cfg.rho)? {
            iterations = t;
            stopped_early = true;
            break;
        }
        let mut ev = StepEvents::default();
        let record_base = log.as_ref().map(|_| {
            let gy = target.gradient(&y);
            let diff = sub(&x, &y);
            ev.nce_trigger_pre = target.value(&x)
                <= target.value(&y) + dot(&gy, &diff) - cfg.gamma / 2.0 * dot(&diff, &diff);
            (target.value(&x), norm(&target.gradient(&x)), hamiltonian(target.value(&x), &v, cfg.eta))
        });

        let gx = cache.get(oracle, &x, jordan, rng)?;
        let since = episode_start.map(|s| t - s);
        if norm(&gx) <= 0.75 * cfg.eps && since.is_none_or(|k| k > cfg.t_escape) {
            anchor = x.clone();
            let xi = uniform_ball(d, cfg.r, rng);
            x = anchor.iter().zip(&xi).map(|(a, b)| a + b).collect();
            y = x.clone();
            iota = gx;
            episode_start = Some(t);
            ev.perturbed = true;
        }
        if episode_start.is_some_and(|s| t - s == cfg.t_escape) {
            let diff = sub(&x, &anchor);
            let n = norm(&diff);
            if n == 0.0 {
                degenerate += 1;
                episode_start = None;
            } else {
                let plus: Vec<f64> = anchor.iter().zip(&diff).map(|(a, b)| a + curvature_len * b / n).collect();
                let minus: Vec<f64> = anchor.iter().zip(&diff).map(|(a, b)| a - curvature_len * b / n).collect();
                if log.is_some() {
                    let e: Vec<f64> = diff.iter().map(|v| v / n).collect();
                    episode_curvature = Some(dot(&e, &target.hessian_vector(&anchor, &e)));
                }
                let (fp, fm) = (oracle.query_value(&plus)?, oracle.query_value(&minus)?);
                x = if fm < fp { minus } else { plus };
                y = x.clone();
                iota = vec![0.0; d];
                ev.curvature_step = true;
            }
        }

        let gy = cache.get(oracle, &y, jordan, rng)?;
        let mut x_next: Vec<f64> =
            y.iter().zip(&gy).zip(&iota).map(|((yi, gi), ii)| yi - cfg.eta * (gi - ii)).collect();
        let mut v_next = sub(&x_next, &x);
        let mut y_next: Vec<f64> = x_next.iter().zip(&v_next).map(|(a, b)| a + (1.0 - cfg.theta) * b).collect();
        if episode_start.is_some_and(|s| t - s < cfg.t_escape) {
            y_next = renormalize(&y_next, &anchor, cfg.r);
            x_next = renormalize(&x_next, &anchor, cfg.r);
            v_next = sub(&x_next, &x);
            ev.renormalized = true;
        } else {
            let g_next = cache.get(oracle, &y_next, jordan, rng)?;
            let diff = sub(&x_next, &y_next);
            let (fx, fy) = (oracle.query_value(&x_next)?, oracle.query_value(&y_next)?);
            if fx <= fy + dot(&g_next, &diff) - cfg.gamma / 2.0 * dot(&diff, &diff) {
                let (xn, vn) = nce(oracle, &x_next, &v_next, cfg.s, rng)?;
                x_next = xn;
                v_next = vn;
                y_next = x_next.iter().zip(&v_next).map(|(a, b)| a + (1.0 - cfg.theta) * b).collect();
                ev.nce_called = true;
            }
        }

        if let (Some(log), Some((value, grad_norm, e))) = (log.as_mut(), record_base) {
            let exact = target.gradient(&y);
            log.push(IterRecord {
                t,
                value,
                grad_norm,
                est_error: norm(&sub(&gy, &exact)),
                est_norm: norm(&gy),
                next_value: target.value(&x_next),
                hamiltonian: Some(e),
                episode_curvature: episode_curvature.take(),
                events: ev,
            });
        }
        x = x_next;
        v = v_next;
        y = y_next;
    }
    let verdict = sosp_check(target.as_ref(), &x, cfg.eps, cfg.rho)?;
    Ok(RunResult {
        iterations,
        ledger: oracle.ledger(),
        x,
        verdict,
        stopped_early,
        warnings,
        degenerate_episodes: degenerate,
        log,
    })
}
