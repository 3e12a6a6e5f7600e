//! Chain instances: the scalar potential, the chain kernel, its rotated embedding and the
//! periodic extension, each with a clean and a progress-truncated form.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_vec, norm};
use crate::objective::Objective;
use crate::oracles::NoisyFunction;
use crate::rng::{stream, SimRng};

use super::{sample_orthonormal_columns, EvalPair};

const GAMMA_SCALE: f64 = 120.0;

fn gamma_antiderivative(t: f64) -> f64 {
    t * t / 2.0 - (1.0 + t * t).ln() / 2.0 - t + t.atan()
}

/// Scalar potential, zero at its minimizer `1`.
pub fn chain_gamma(x: f64) -> f64 {
    GAMMA_SCALE * (gamma_antiderivative(x) - gamma_antiderivative(1.0))
}

pub fn chain_gamma_prime(x: f64) -> f64 {
    GAMMA_SCALE * x * x * (x - 1.0) / (1.0 + x * x)
}

pub fn chain_gamma_second(x: f64) -> f64 {
    let q = 1.0 + x * x;
    GAMMA_SCALE * (x.powi(4) + 3.0 * x * x - 2.0 * x) / (q * q)
}

/// The potential by numerical integration of its derivative from `1`.
pub fn chain_gamma_quadrature(x: f64) -> f64 {
    if x == 1.0 {
        return 0.0;
    }
    let (lo, hi, sign) = if x > 1.0 { (1.0, x, 1.0) } else { (x, 1.0, -1.0) };
    sign * quadrature::integrate(chain_gamma_prime, lo, hi, 1e-13).integral
}

/// Chain kernel on `T + 1` coordinates with coupling weight `mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainKernel {
    t: usize,
    mu: f64,
}

impl ChainKernel {
    pub fn new(t: usize, mu: f64) -> Result<Self> {
        if t == 0 || !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::Config(format!("chain kernel needs T >= 1 and mu in (0, 1], got T={t}, mu={mu}")));
        }
        Ok(ChainKernel { t, mu })
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    fn eval_value(&self, x: &[f64]) -> f64 {
        let links: f64 = x.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        let wells: f64 = x[..self.t].iter().map(|&xi| chain_gamma(xi)).sum();
        self.mu.sqrt() / 2.0 * (x[0] - 1.0).powi(2) + links / 2.0 + self.mu * wells
    }

    fn eval_gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.t + 1;
        let mut g = vec![0.0; n];
        g[0] = self.mu.sqrt() * (x[0] - 1.0);
        for j in 0..n {
            if j > 0 {
                g[j] += x[j] - x[j - 1];
            }
            if j < self.t {
                g[j] += -(x[j + 1] - x[j]) + self.mu * chain_gamma_prime(x[j]);
            }
        }
        g
    }

    fn eval_hvp(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let n = self.t + 1;
        let mut h = vec![0.0; n];
        h[0] = self.mu.sqrt() * w[0];
        for j in 0..n {
            if j > 0 {
                h[j] += w[j] - w[j - 1];
            }
            if j < self.t {
                h[j] += -(w[j + 1] - w[j]) + self.mu * chain_gamma_second(x[j]) * w[j];
            }
        }
        h
    }
}

impl Objective for ChainKernel {
    fn dim(&self) -> usize {
        self.t + 1
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.eval_value(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.eval_gradient(x)
    }
    fn hessian_vector(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        self.eval_hvp(x, w)
    }
}

/// Quadratic toy chain `(x_1 - 1)^2 / 2 + sum (x_i - x_{i+1})^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NesterovChain {
    pub t: usize,
}

impl Objective for NesterovChain {
    fn dim(&self) -> usize {
        self.t
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * (x[0] - 1.0).powi(2) + 0.5 * x.windows(2).map(|w| (w[0] - w[1]).powi(2)).sum::<f64>()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        g[0] = x[0] - 1.0;
        for i in 0..x.len().saturating_sub(1) {
            let diff = x[i] - x[i + 1];
            g[i] += diff;
            g[i + 1] -= diff;
        }
        g
    }
    fn hessian_vector(&self, _x: &[f64], w: &[f64]) -> Vec<f64> {
        self.gradient(w).iter().zip(w).enumerate().map(|(i, (g, _))| if i == 0 { g + 1.0 } else { *g }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroChainReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest gradient magnitude found beyond the allowed support.
    pub max_leak: f64,
}

/// Check that a gradient extends the support of prefix-supported points by at most one index.
pub fn zero_chain_check(
    grad_fn: impl Fn(&[f64]) -> Vec<f64>,
    dim: usize,
    n_trials: usize,
    rng: &mut SimRng,
) -> ZeroChainReport {
    let mut violations = 0;
    let mut max_leak: f64 = 0.0;
    for _ in 0..n_trials {
        let prefix = rng.random_range(0..dim);
        let mut x = vec![0.0; dim];
        for xi in &mut x[..prefix] {
            *xi = rng.random_range(-2.0..2.0);
        }
        let g = grad_fn(&x);
        let leak = g[prefix + 1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if leak > 1e-12 {
            violations += 1;
        }
        max_leak = max_leak.max(leak);
    }
    ZeroChainReport { trials: n_trials, violations, max_leak }
}

/// Cubic clamp `(1 - s/a)^3 z` for `s = ||z|| < a`, zero beyond.
pub fn gamma_alpha(alpha: f64, t: usize, z: &[f64]) -> Vec<f64> {
    let phi = Clamp::new(alpha * (t as f64).sqrt(), norm(z)).phi;
    z.iter().map(|zi| phi * zi).collect()
}

/// Radial profile of the clamp and its first two derivatives at radius `s`.
struct Clamp {
    s: f64,
    phi: f64,
    d1: f64,
    d2: f64,
}

impl Clamp {
    fn new(a: f64, s: f64) -> Self {
        if s >= a {
            return Clamp { s, phi: 0.0, d1: 0.0, d2: 0.0 };
        }
        let q = 1.0 - s / a;
        Clamp { s, phi: q.powi(3), d1: -3.0 / a * q * q, d2: 6.0 / (a * a) * q }
    }

    /// Jacobian (symmetric) applied to `g`.
    fn jac(&self, z: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        if self.s == 0.0 {
            return g * self.phi;
        }
        g * self.phi + z * (self.d1 / self.s * z.dot(g))
    }

    /// Directional derivative of `z -> J(z) g` along `w`, with `g` held fixed.
    fn jac_derivative(&self, z: &DVector<f64>, g: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        if self.s == 0.0 {
            return DVector::zeros(z.len());
        }
        let s = self.s;
        let zw = z.dot(w) / s;
        let zg = z.dot(g);
        g * (self.d1 * zw) + z * ((self.d2 / s - self.d1 / (s * s)) * zw * zg + self.d1 / s * g.dot(w))
            + w * (self.d1 / s * zg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainForm {
    /// Rotated kernel on the ball of radius `2 sigma sqrt(T)`.
    Bounded,
    /// Clamped kernel plus a periodic sine term, defined on all of R^d.
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainInstanceParams {
    pub d: usize,
    pub t: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub mu_c: f64,
    /// Overlap threshold (in units of `sigma`) below which a chain direction stays hidden.
    pub r0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub zeta_cube: f64,
    pub form: ChainForm,
    pub seed: u64,
}

impl ChainInstanceParams {
    pub fn new(d: usize, t: usize, seed: u64) -> Self {
        ChainInstanceParams {
            d,
            t,
            lambda: 1.0,
            sigma: 1.0,
            mu_c: 1.0,
            r0: 0.01,
            alpha: 1.0,
            beta: 1.0,
            zeta_cube: 2.0,
            form: ChainForm::Bounded,
            seed,
        }
    }

    /// Hypercube half-scale `zeta * alpha * sqrt(T)`.
    pub fn l_cube(&self) -> f64 {
        self.zeta_cube * self.alpha * (self.t as f64).sqrt()
    }

    /// Period of the extension along every axis.
    pub fn period(&self) -> f64 {
        std::f64::consts::PI * self.sigma * self.l_cube()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.t >= 1
            && self.t < self.d
            && self.mu_c > 0.0
            && self.mu_c <= 1.0
            && self.lambda > 0.0
            && self.sigma > 0.0
            && self.r0 > 0.0
            && self.r0 < self.sigma
            && self.alpha > 0.0
            && self.beta > 0.0
            && self.zeta_cube > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid chain parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainInstance {
    p: ChainInstanceParams,
    kernel: ChainKernel,
    u: DMatrix<f64>,
}

impl ChainInstance {
    pub fn new(p: ChainInstanceParams) -> Result<Self> {
        p.validate()?;
        let u = sample_orthonormal_columns(p.d, p.t + 1, &mut stream(p.seed, 0, "chain-rotation"));
        Ok(ChainInstance { kernel: ChainKernel::new(p.t, p.mu_c)?, p, u })
    }

    pub fn params(&self) -> &ChainInstanceParams {
        &self.p
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn kernel(&self) -> &ChainKernel {
        &self.kernel
    }

    /// Declared bound on the value gap between the clean and truncated forms.
    pub fn value_gap_bound(&self) -> f64 {
        let (t, r0) = (self.p.t as f64, self.p.r0);
        self.p.lambda * self.p.sigma.powi(2) * (50.0 * r0 * r0 * t + 2.0 * self.p.alpha * r0 * t.sqrt())
    }

    /// Declared bound on the gradient gap between the clean and truncated forms.
    pub fn gradient_gap_bound(&self) -> f64 {
        6.0 * self.p.lambda * self.p.sigma * self.p.r0 * (self.p.t as f64).sqrt()
    }

    fn reduce(&self, x: &[f64]) -> Vec<f64> {
        match self.p.form {
            ChainForm::Bounded => x.to_vec(),
            ChainForm::Unbounded => {
                let per = self.p.period();
                x.iter().map(|xi| xi - per * (xi / per).round()).collect()
            }
        }
    }

    /// Chain coordinates `U^T x / sigma` of an already reduced point.
    fn coords(&self, xr: &[f64]) -> DVector<f64> {
        self.u.tr_mul(&DVector::from_column_slice(xr)) / self.p.sigma
    }

    /// Largest chain index (1-based, at most `T`) whose coordinate reaches `r0`; 0 if none.
    pub fn progress(&self, x: &[f64]) -> usize {
        let z = self.coords(&self.reduce(x));
        prog_of(&z, self.p.t, self.p.r0)
    }

    fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.p.d {
            return Err(Error::Config(format!("expected dimension {}, got {}", self.p.d, x.len())));
        }
        if self.p.form == ChainForm::Bounded {
            let limit = 2.0 * self.p.sigma * (self.p.t as f64).sqrt();
            if norm(x) > limit {
                return Err(Error::Domain(format!("point norm {} exceeds {limit}", norm(x))));
            }
        }
        Ok(())
    }

    fn sine_parts(&self, xr: &[f64]) -> (f64, Vec<f64>) {
        let l = self.p.l_cube();
        let k = self.p.sigma * l;
        let value = self.p.beta * l * l * xr.iter().map(|xi| (xi / k).sin().powi(2)).sum::<f64>();
        let grad = xr.iter().map(|xi| self.p.beta * l * (2.0 * xi / k).sin()).collect();
        (value, grad)
    }

    /// Value and gradient of the clean (`noisy = false`) or truncated form, with domain checks.
    pub fn eval(&self, x: &[f64], noisy: bool) -> Result<EvalPair> {
        self.check_domain(x)?;
        Ok(self.eval_unchecked(x, noisy))
    }

    fn eval_unchecked(&self, x: &[f64], noisy: bool) -> EvalPair {
        let (lam, sig) = (self.p.lambda, self.p.sigma);
        let xr = self.reduce(x);
        let z = self.coords(&xr);
        let prog = noisy.then(|| prog_of(&z, self.p.t, self.p.r0));
        match self.p.form {
            ChainForm::Bounded => {
                let y = truncate(z, prog);
                let value = lam * sig * sig * self.kernel.eval_value(y.as_slice());
                let g = DVector::from_vec(self.kernel.eval_gradient(y.as_slice()));
                let gradient = (&self.u * g * (lam * sig)).data.into();
                EvalPair { value, gradient }
            }
            ChainForm::Unbounded => {
                let clamp = Clamp::new(self.p.alpha * (self.p.t as f64).sqrt(), z.norm());
                let y = truncate(&z * clamp.phi, prog);
                let g = DVector::from_vec(self.kernel.eval_gradient(y.as_slice()));
                let chain_grad = &self.u * clamp.jac(&z, &g);
                let (sine_value, sine_grad) = self.sine_parts(&xr);
                let value = lam * sig * sig * (self.kernel.eval_value(y.as_slice()) + sine_value);
                let gradient =
                    chain_grad.iter().zip(&sine_grad).map(|(c, s)| lam * sig * (c + s)).collect();
                EvalPair { value, gradient }
            }
        }
    }

    /// Points `sigma (U t + n)` whose chain coordinates are a random-length prefix of order-one
    /// entries followed by entries strictly below `r0`, plus a component orthogonal to `U`.
    pub fn sample_prefix_point(&self, rng: &mut SimRng) -> Vec<f64> {
        let (t, r0, sig) = (self.p.t, self.p.r0, self.p.sigma);
        let limit = 2.0 * sig * (t as f64).sqrt();
        loop {
            let k = rng.random_range(0..=t);
            let coeffs: Vec<f64> = (0..=t)
                .map(|j| if j < k { rng.random_range(-1.5..=1.5) } else { rng.random_range(-r0..r0) * 0.999 })
                .collect();
            let c = DVector::from_vec(coeffs);
            let g = DVector::from_vec(gaussian_vec(self.p.d, rng));
            let mut orth = &g - &self.u * self.u.tr_mul(&g);
            let scale = rng.random_range(0.0..=0.5) * (t as f64).sqrt() / orth.norm().max(1e-300);
            orth *= scale;
            let x = (&self.u * c + orth) * sig;
            if self.p.form == ChainForm::Unbounded || x.norm() <= limit {
                return x.data.into();
            }
        }
    }
}

fn prog_of(z: &DVector<f64>, t: usize, r0: f64) -> usize {
    (1..=t).rev().find(|&j| z[j - 1].abs() >= r0).unwrap_or(0)
}

/// Keep chain coordinates `1..=prog+1` when truncating.
fn truncate(mut y: DVector<f64>, prog: Option<usize>) -> DVector<f64> {
    if let Some(p) = prog {
        for v in y.iter_mut().skip(p + 1) {
            *v = 0.0;
        }
    }
    y
}

impl Objective for ChainInstance {
    fn dim(&self) -> usize {
        self.p.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval_unchecked(x, false).value
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.eval_unchecked(x, false).gradient
    }

    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let lam = self.p.lambda;
        let xr = self.reduce(x);
        let z = self.coords(&xr);
        let w = self.u.tr_mul(&DVector::from_column_slice(v));
        match self.p.form {
            ChainForm::Bounded => {
                let hw = DVector::from_vec(self.kernel.eval_hvp(z.as_slice(), w.as_slice()));
                (&self.u * hw * lam).data.into()
            }
            ChainForm::Unbounded => {
                let clamp = Clamp::new(self.p.alpha * (self.p.t as f64).sqrt(), z.norm());
                let y = &z * clamp.phi;
                let g = DVector::from_vec(self.kernel.eval_gradient(y.as_slice()));
                let jw = clamp.jac(&z, &w);
                let hjw = DVector::from_vec(self.kernel.eval_hvp(y.as_slice(), jw.as_slice()));
                let inner = clamp.jac(&z, &hjw) + clamp.jac_derivative(&z, &g, &w);
                let chain = &self.u * inner;
                let k = self.p.sigma * self.p.l_cube();
                chain
                    .iter()
                    .zip(&xr)
                    .zip(v)
                    .map(|((c, xi), vi)| lam * (c + 2.0 * self.p.beta * (2.0 * xi / k).cos() * vi))
                    .collect()
            }
        }
    }

    fn fd_step(&self) -> f64 {
        1e-6 * self.p.sigma
    }
}

impl NoisyFunction for ChainInstance {
    fn noisy_value(&self, x: &[f64]) -> f64 {
        self.eval_unchecked(x, true).value
    }

    fn noisy_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_unchecked(x, true).gradient)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn nu(&self) -> f64 {
        self.value_gap_bound()
    }

    fn nu_tilde(&self) -> f64 {
        self.gradient_gap_bound()
    }
}
