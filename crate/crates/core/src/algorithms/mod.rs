//! Saddle-escaping optimizers over noisy oracles.

mod pagd;
mod pgd;
mod psgd;

use serde::Serialize;

use crate::error::Result;
use crate::objective::{Objective, QueryLedger, SospVerdict};
use crate::sosp::sosp_check;

pub use pagd::{nce, pagd_ancf, PagdConfig, PagdOptions};
pub use pgd::{first_order_pgd, pgd_qgc, PgdConfig, PgdOptions, PgdVariant};
pub use psgd::{fpsgd_qme, psgd_qme, PsgdConfig, PsgdOptions};

/// `F + ||v||^2 / (2 eta)`.
pub fn hamiltonian(f_value: f64, v: &[f64], eta: f64) -> f64 {
    f_value + v.iter().map(|t| t * t).sum::<f64>() / (2.0 * eta)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StepEvents {
    pub perturbed: bool,
    pub curvature_step: bool,
    pub renormalized: bool,
    /// Negative-curvature trigger evaluated on the exact function at `(x_t, y_t)`.
    pub nce_trigger_pre: bool,
    pub nce_called: bool,
}

impl StepEvents {
    pub fn any(&self) -> bool {
        self.perturbed || self.curvature_step || self.renormalized || self.nce_trigger_pre || self.nce_called
    }
}

/// Exact-function diagnostics for one iteration, recorded only when logging is enabled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterRecord {
    pub t: usize,
    /// `F(x_t)`.
    pub value: f64,
    pub grad_norm: f64,
    /// Distance between the gradient estimate used this step and the exact gradient at the same point.
    pub est_error: f64,
    pub est_norm: f64,
    /// `F(x_{t+1})`.
    pub next_value: f64,
    pub hamiltonian: Option<f64>,
    /// `e^T H e` at the episode anchor for the unit direction found by the episode ending here.
    pub episode_curvature: Option<f64>,
    pub events: StepEvents,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub iterations: usize,
    pub ledger: QueryLedger,
    pub x: Vec<f64>,
    /// Recomputed on the exact function at the final point.
    pub verdict: SospVerdict,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
    pub degenerate_episodes: usize,
    pub log: Option<Vec<IterRecord>>,
}

/// Checkpoint test: is `x` a verified SOSP of the exact function?
fn verified(target: &dyn Objective, x: &[f64], eps: f64, rho: f64) -> Result<bool> {
    Ok(sosp_check(target, x, eps, rho)?.is_sosp)
}

/// Solve the mutual dependence of the confidence level and the log factor by fixed-point iteration.
/// Returns `(chi, delta0)` with `delta0 = delta * eps^2 / (k * ell * scale) * chi^-4` and
/// `chi = max(1, ln(d * ell * scale / (rho * eps * delta0)))`.
fn chi_fixed_point(d: usize, ell: f64, rho: f64, eps: f64, scale: f64, delta: f64, k: f64) -> (f64, f64) {
    let delta0_of = |chi: f64| delta * eps * eps / (k * ell * scale) * chi.powi(-4);
    let chi_of = |delta0: f64| (d as f64 * ell * scale / (rho * eps * delta0)).ln().max(1.0);
    let mut chi = 1.0;
    for it in 0..200 {
        let next = chi_of(delta0_of(chi));
        if (next - chi).abs() <= 1e-12 * chi {
            log::debug!("chi fixed point converged after {} passes: chi = {next}", it + 1);
            chi = next;
            break;
        }
        chi = next;
    }
    (chi, delta0_of(chi))
}
