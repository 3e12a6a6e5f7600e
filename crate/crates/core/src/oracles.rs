//! Noise-wrapped oracle access to a target objective, with query counting.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{first_non_finite, norm_inf, uniform_ball};
use crate::objective::{Objective, QueryLedger};
use crate::rng::{hash_to_sym_unit, point_hash, splitmix64, SimRng};

/// The instance's own noisy function `f`, used by `InstanceDefined` models.
pub trait NoisyFunction: Send + Sync {
    fn noisy_value(&self, x: &[f64]) -> f64;

    fn noisy_gradient(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Capability("instance exposes zeroth-order access only".into()))
    }

    fn has_gradient(&self) -> bool {
        false
    }

    /// Gradient of `E[f(x + z)]` when known in closed form.
    fn noisy_smoothed_gradient(&self, _x: &[f64], _sigma: f64) -> Option<Vec<f64>> {
        None
    }

    /// Declared bound on `|f - F|`.
    fn nu(&self) -> f64;

    /// Declared bound on `||grad f - grad F||_inf`.
    fn nu_tilde(&self) -> f64 {
        f64::INFINITY
    }
}

#[derive(Clone)]
pub enum ZerothNoiseModel {
    None,
    BoundedRandom { nu: f64, stream: u64 },
    InstanceDefined(Arc<dyn NoisyFunction>),
}

#[derive(Clone)]
pub enum FirstNoiseModel {
    None,
    BoundedRandom { nu_tilde: f64, stream: u64 },
    InstanceDefined(Arc<dyn NoisyFunction>),
}

impl std::fmt::Debug for ZerothNoiseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ZerothNoiseModel::None => write!(f, "None"),
            ZerothNoiseModel::BoundedRandom { nu, stream } => write!(f, "BoundedRandom(nu={nu}, stream={stream})"),
            ZerothNoiseModel::InstanceDefined(n) => write!(f, "InstanceDefined(nu={})", n.nu()),
        }
    }
}

pub type DomainSampler = Arc<dyn Fn(&mut SimRng) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct NoisyOracle {
    target: Arc<dyn Objective>,
    zeroth: ZerothNoiseModel,
    first: Option<FirstNoiseModel>,
    ledger: QueryLedger,
    domain: Option<DomainSampler>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    pub samples: usize,
    pub max_value_dev: f64,
    pub max_grad_dev: Option<f64>,
    pub nu: f64,
    pub nu_tilde: Option<f64>,
    pub value_violation: bool,
    pub grad_violation: bool,
}

fn check_finite(x: &[f64]) -> Result<()> {
    match first_non_finite(x) {
        Some(coord) => Err(Error::Evaluation { coord }),
        None => Ok(()),
    }
}

impl NoisyOracle {
    pub fn new(target: Arc<dyn Objective>, zeroth: ZerothNoiseModel, first: Option<FirstNoiseModel>) -> Self {
        NoisyOracle { target, zeroth, first, ledger: QueryLedger::default(), domain: None }
    }

    /// Noise-free zeroth- and first-order access.
    pub fn exact(target: Arc<dyn Objective>) -> Self {
        Self::new(target, ZerothNoiseModel::None, Some(FirstNoiseModel::None))
    }

    pub fn with_domain(mut self, domain: DomainSampler) -> Self {
        self.domain = Some(domain);
        self
    }

    /// Same target and models with a fresh ledger.
    pub fn fresh(&self) -> Self {
        NoisyOracle { ledger: QueryLedger::default(), ..self.clone() }
    }

    pub fn target(&self) -> &dyn Objective {
        self.target.as_ref()
    }

    pub fn target_arc(&self) -> Arc<dyn Objective> {
        self.target.clone()
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn ledger(&self) -> QueryLedger {
        self.ledger
    }

    pub fn zeroth_model(&self) -> &ZerothNoiseModel {
        &self.zeroth
    }

    pub fn has_first_order(&self) -> bool {
        match &self.first {
            None => false,
            Some(FirstNoiseModel::InstanceDefined(n)) => n.has_gradient(),
            Some(_) => true,
        }
    }

    /// Declared zeroth-order noise bound.
    pub fn nu(&self) -> f64 {
        match &self.zeroth {
            ZerothNoiseModel::None => 0.0,
            ZerothNoiseModel::BoundedRandom { nu, .. } => *nu,
            ZerothNoiseModel::InstanceDefined(n) => n.nu(),
        }
    }

    /// Declared first-order noise bound, if first-order access exists.
    pub fn nu_tilde(&self) -> Option<f64> {
        match &self.first {
            None => None,
            Some(FirstNoiseModel::None) => Some(0.0),
            Some(FirstNoiseModel::BoundedRandom { nu_tilde, .. }) => Some(*nu_tilde),
            Some(FirstNoiseModel::InstanceDefined(n)) => Some(n.nu_tilde()),
        }
    }

    /// `f(x)` without touching the ledger.
    pub fn peek_value(&self, x: &[f64]) -> Result<f64> {
        check_finite(x)?;
        let v = match &self.zeroth {
            ZerothNoiseModel::None => self.target.value(x),
            ZerothNoiseModel::BoundedRandom { nu, stream } => {
                self.target.value(x) + nu * hash_to_sym_unit(point_hash(*stream, x))
            }
            ZerothNoiseModel::InstanceDefined(n) => n.noisy_value(x),
        };
        if !v.is_finite() {
            return Err(Error::Evaluation { coord: 0 });
        }
        Ok(v)
    }

    /// `grad f(x)` without touching the ledger.
    pub fn peek_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_finite(x)?;
        let g = match &self.first {
            None => return Err(Error::Capability("oracle has no first-order access".into())),
            Some(FirstNoiseModel::None) => self.target.gradient(x),
            Some(FirstNoiseModel::BoundedRandom { nu_tilde, stream }) => {
                let h = point_hash(*stream, x);
                let mut g = self.target.gradient(x);
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += nu_tilde * hash_to_sym_unit(splitmix64(h ^ (i as u64)));
                }
                g
            }
            Some(FirstNoiseModel::InstanceDefined(n)) => n.noisy_gradient(x)?,
        };
        check_finite(&g)?;
        Ok(g)
    }

    pub fn query_value(&mut self, x: &[f64]) -> Result<f64> {
        let v = self.peek_value(x)?;
        self.ledger.zeroth += 1;
        Ok(v)
    }

    pub fn query_gradient(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.peek_gradient(x)?;
        self.ledger.first += 1;
        Ok(g)
    }

    /// Charge zeroth-order queries made by a simulated subroutine.
    pub fn charge_zeroth(&mut self, n: u64) {
        self.ledger.zeroth = self.ledger.zeroth.saturating_add(n);
    }

    pub fn charge_binary(&mut self, n: u128) {
        self.ledger.binary = self.ledger.binary.saturating_add(n);
    }

    pub fn charge_estimator(&mut self) {
        self.ledger.estimator_calls += 1;
    }

    /// Closed-form `grad E[f(x+z)]` for the zeroth-order noisy function, when available.
    pub fn smoothed_gradient(&self, x: &[f64], sigma: f64) -> Option<Vec<f64>> {
        match &self.zeroth {
            ZerothNoiseModel::None => self.target.smoothed_gradient(x, sigma),
            ZerothNoiseModel::BoundedRandom { .. } => None,
            ZerothNoiseModel::InstanceDefined(n) => n.noisy_smoothed_gradient(x, sigma),
        }
    }

    /// Closed-form `E[grad f(x+z)]` for the first-order noisy gradient, when available.
    pub fn smoothed_first_gradient(&self, x: &[f64], sigma: f64) -> Option<Vec<f64>> {
        match &self.first {
            Some(FirstNoiseModel::None) => self.target.smoothed_gradient(x, sigma),
            Some(FirstNoiseModel::InstanceDefined(n)) => n.noisy_smoothed_gradient(x, sigma),
            _ => None,
        }
    }

    pub fn sample_domain(&self, rng: &mut SimRng) -> Vec<f64> {
        match &self.domain {
            Some(s) => s(rng),
            None => uniform_ball(self.dim(), 1.0, rng),
        }
    }
}

/// Sample the oracle's domain and measure the realized noise against the declared bounds.
pub fn assert_noise_bound(oracle: &NoisyOracle, sample_count: usize, rng: &mut SimRng) -> Result<NoiseReport> {
    if sample_count == 0 {
        return Err(Error::Config("sample_count must be at least 1".into()));
    }
    let nu = oracle.nu();
    let nu_tilde = oracle.nu_tilde().filter(|v| v.is_finite());
    let mut max_value_dev: f64 = 0.0;
    let mut max_grad_dev: Option<f64> = oracle.has_first_order().then_some(0.0);
    for _ in 0..sample_count {
        let x = oracle.sample_domain(rng);
        let dev = (oracle.peek_value(&x)? - oracle.target().value(&x)).abs();
        max_value_dev = max_value_dev.max(dev);
        if let Some(m) = max_grad_dev.as_mut() {
            let g = oracle.peek_gradient(&x)?;
            let t = oracle.target().gradient(&x);
            let diff: Vec<f64> = g.iter().zip(&t).map(|(a, b)| a - b).collect();
            *m = m.max(norm_inf(&diff));
        }
    }
    Ok(NoiseReport {
        samples: sample_count,
        max_value_dev,
        max_grad_dev,
        nu,
        nu_tilde,
        value_violation: max_value_dev > nu,
        grad_violation: matches!((max_grad_dev, nu_tilde), (Some(m), Some(b)) if m > b),
    })
}

/// Convenience: a uniform-in-box domain sampler.
pub fn box_domain(d: usize, half_width: f64) -> DomainSampler {
    Arc::new(move |rng: &mut SimRng| (0..d).map(|_| rng.random_range(-half_width..=half_width)).collect())
}
