//! Band instance: a planted direction hidden inside a flat region of `||sin x||^2`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, gaussian_vec, norm, scale, uniform_ball};
use crate::objective::Objective;
use crate::oracles::{DomainSampler, NoisyFunction};
use crate::rng::{stream, SimRng};
use crate::sosp::sosp_check;

use super::sample_unit_vector;

/// Maximum of the bump `g1` on `[0, 1]`, attained at `0.4`.
pub const G1_MAX: f64 = 0.55296;

pub fn g1(u: f64) -> f64 {
    let a = u.abs();
    if a < 1.0 {
        16.0 * u * u * (1.0 - a).powi(3)
    } else {
        0.0
    }
}

pub fn g1_prime(u: f64) -> f64 {
    let a = u.abs();
    if a < 1.0 {
        16.0 * u * (1.0 - a).powi(2) * (2.0 - 5.0 * a)
    } else {
        0.0
    }
}

pub fn g1_second(u: f64) -> f64 {
    let a = u.abs();
    if a < 1.0 {
        16.0 * (1.0 - a) * (2.0 - 16.0 * a + 20.0 * a * a)
    } else {
        0.0
    }
}

/// Radial well: `-1` at the origin, flat and zero at `|u| = 1`.
pub fn g2(u: f64) -> f64 {
    let a = u.abs();
    if a < 1.0 {
        3.0 * a.powi(4) - 8.0 * a.powi(3) + 6.0 * a * a - 1.0
    } else {
        0.0
    }
}

/// `g2'(u) / u`, finite at the origin.
pub fn g2_slope(u: f64) -> f64 {
    let a = u.abs();
    if a < 1.0 {
        12.0 * (1.0 - a).powi(2)
    } else {
        0.0
    }
}

fn g2_slope_prime(u: f64) -> f64 {
    let a = u.abs();
    if a < 1.0 {
        -24.0 * (1.0 - a) * u.signum()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandVariant {
    ZerothBand,
    FirstBand,
    NonInformative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandInstanceParams {
    pub d: usize,
    pub mu: f64,
    /// Band half-width in unscaled coordinates.
    pub w: f64,
    pub eps: f64,
    pub rho: f64,
    pub variant: BandVariant,
    pub seed: u64,
}

impl BandInstanceParams {
    /// Scale-free instance (`eps = rho = 1`) with `mu = 300` and the default width.
    pub fn new(d: usize, variant: BandVariant, seed: u64) -> Self {
        BandInstanceParams { d, mu: 300.0, w: Self::default_width(d), eps: 1.0, rho: 1.0, variant, seed }
    }

    pub fn default_width(d: usize) -> f64 {
        (d as f64).ln() / (d as f64).sqrt()
    }

    /// Length scale `sqrt(eps / rho)` of the rescaled instance.
    pub fn scale(&self) -> f64 {
        (self.eps / self.rho).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || !(self.mu > 0.0) || !(self.w > 0.0) || !(self.eps > 0.0) || !(self.rho > 0.0) {
            return Err(Error::Config(format!("invalid band parameters {self:?}")));
        }
        Ok(())
    }

    /// Threshold on `<sin x, v>` below which `f` carries no information about `v`.
    pub fn flat_width(&self) -> f64 {
        match self.variant {
            BandVariant::FirstBand => 0.9 * self.w,
            _ => self.w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    BallMinusBand,
    Band,
    InnerBand,
    Padding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandInstance {
    p: BandInstanceParams,
    v: Vec<f64>,
}

/// Pieces of `h(y) = g1(mu a) g2(mu rho)` with `a = <v, y>` and `rho = ||y - a v||`.
struct HParts {
    p: Vec<f64>,
    ga: f64,
    gb: f64,
    da: f64,
    dda: f64,
    qb: f64,
    dqb: f64,
}

impl HParts {
    fn new(v: &[f64], y: &[f64], mu: f64) -> Self {
        let a = dot(v, y);
        let p: Vec<f64> = y.iter().zip(v).map(|(yi, vi)| yi - a * vi).collect();
        let rho = norm(&p);
        let dqb = if rho > 0.0 { mu.powi(3) * g2_slope_prime(mu * rho) / rho } else { 0.0 };
        HParts {
            ga: g1(mu * a),
            gb: g2(mu * rho),
            da: mu * g1_prime(mu * a),
            dda: mu * mu * g1_second(mu * a),
            qb: mu * mu * g2_slope(mu * rho),
            dqb,
            p,
        }
    }

    fn grad(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.p).map(|(vi, pi)| self.gb * self.da * vi + self.ga * self.qb * pi).collect()
    }

    fn hvp(&self, v: &[f64], w: &[f64]) -> Vec<f64> {
        let vw = dot(v, w);
        let pw = dot(&self.p, w);
        let cv = self.gb * self.dda * vw - self.ga * self.qb * vw + self.da * self.qb * pw;
        let cp = self.ga * self.dqb * pw + self.qb * self.da * vw;
        w.iter()
            .zip(v)
            .zip(&self.p)
            .map(|((wi, vi), pi)| self.ga * self.qb * wi + cv * vi + cp * pi)
            .collect()
    }
}

/// Single-pass summary of an unscaled point.
struct Scan {
    a: f64,
    sin_sq: f64,
    u_sq: f64,
}

impl BandInstance {
    pub fn new(p: BandInstanceParams) -> Result<Self> {
        p.validate()?;
        let v = sample_unit_vector(p.d, &mut stream(p.seed, 0, "band-direction"));
        Ok(BandInstance { p, v })
    }

    pub fn with_direction(p: BandInstanceParams, v: Vec<f64>) -> Result<Self> {
        p.validate()?;
        if v.len() != p.d || (norm(&v) - 1.0).abs() > 1e-9 {
            return Err(Error::Config("band direction must be a unit vector of length d".into()));
        }
        Ok(BandInstance { p, v })
    }

    pub fn params(&self) -> &BandInstanceParams {
        &self.p
    }

    pub fn direction(&self) -> &[f64] {
        &self.v
    }

    fn unscaled(&self, x: &[f64]) -> Vec<f64> {
        scale(x, 1.0 / self.p.scale())
    }

    fn scan(&self, x: &[f64]) -> Scan {
        let r = self.p.scale();
        let (mut a, mut sin_sq, mut u_sq) = (0.0, 0.0, 0.0);
        for (xi, vi) in x.iter().zip(&self.v) {
            let u = xi / r;
            let s = u.sin();
            a += s * vi;
            sin_sq += s * s;
            u_sq += u * u;
        }
        Scan { a, sin_sq, u_sq }
    }

    fn region_of(&self, s: &Scan) -> Region {
        if s.u_sq.sqrt() > 3.0 / self.p.mu {
            Region::Padding
        } else if s.a > self.p.w {
            Region::BallMinusBand
        } else if self.p.variant == BandVariant::FirstBand && s.a <= 0.9 * self.p.w {
            Region::InnerBand
        } else {
            Region::Band
        }
    }

    pub fn region(&self, x: &[f64]) -> Region {
        self.region_of(&self.scan(x))
    }

    /// `h(sin(x / r))` computed in one pass.
    fn h_of(&self, s: &Scan) -> f64 {
        let rho = (s.sin_sq - s.a * s.a).max(0.0).sqrt();
        g1(self.p.mu * s.a) * g2(self.p.mu * rho)
    }

    /// `|f - F|` at `x`, values only.
    pub fn noise_gap(&self, x: &[f64]) -> f64 {
        (self.noisy_value(x) - self.value(x)).abs()
    }

    fn amp(&self) -> f64 {
        self.p.eps * self.p.scale()
    }

    pub fn noisy_value(&self, x: &[f64]) -> f64 {
        let s = self.scan(x);
        let flat = self.amp() * s.sin_sq;
        match (self.p.variant, self.region_of(&s)) {
            (BandVariant::NonInformative, _) => flat,
            (BandVariant::ZerothBand, Region::Band) => flat,
            (BandVariant::FirstBand, Region::InnerBand) => flat,
            (BandVariant::FirstBand, Region::Band) => {
                let u = self.unscaled(x);
                let y: Vec<f64> = u.iter().map(|t| t.sin()).collect();
                let hp = HParts::new(&self.v, &y, self.p.mu);
                flat + self.amp() * self.shifted_bump(&u).0 * hp.gb
            }
            _ => self.amp() * (self.h_of(&s) + s.sin_sq),
        }
    }

    /// `g1(mu <v, sin(10u - 4.5 w v)>)` and its gradient in `u`.
    fn shifted_bump(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let shift = 4.5 * self.p.w;
        let z: Vec<f64> = u.iter().zip(&self.v).map(|(ui, vi)| 10.0 * ui - shift * vi).collect();
        let b: f64 = z.iter().zip(&self.v).map(|(zi, vi)| zi.sin() * vi).sum();
        let mu = self.p.mu;
        let coef = mu * g1_prime(mu * b) * 10.0;
        let grad = z.iter().zip(&self.v).map(|(zi, vi)| coef * zi.cos() * vi).collect();
        (g1(mu * b), grad)
    }

    pub fn noisy_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let flat = |u: &[f64]| -> Vec<f64> { u.iter().map(|t| self.p.eps * (2.0 * t).sin()).collect() };
        let s = self.scan(x);
        match (self.p.variant, self.region_of(&s)) {
            (BandVariant::ZerothBand, _) => {
                Err(Error::Capability("zeroth-order band instance has no gradient oracle".into()))
            }
            (BandVariant::NonInformative, _) | (BandVariant::FirstBand, Region::InnerBand) => {
                Ok(flat(&self.unscaled(x)))
            }
            (BandVariant::FirstBand, Region::Band) => {
                let u = self.unscaled(x);
                let y: Vec<f64> = u.iter().map(|t| t.sin()).collect();
                let hp = HParts::new(&self.v, &y, self.p.mu);
                let (h3, dh3) = self.shifted_bump(&u);
                let mut g = flat(&u);
                for i in 0..g.len() {
                    g[i] += self.p.eps * (hp.gb * dh3[i] + h3 * hp.qb * u[i].cos() * hp.p[i]);
                }
                Ok(g)
            }
            _ => Ok(self.gradient(x)),
        }
    }

    /// Whether `x` lies where `f` equals `||sin||^2` scaled, i.e. carries no trace of the direction.
    pub fn in_flat_band(&self, x: &[f64]) -> bool {
        let s = self.scan(x);
        s.u_sq.sqrt() <= 3.0 / self.p.mu && s.a <= self.p.flat_width()
    }

    /// Uniform point of the flat band: rejection from the ball of radius `3r/mu`.
    pub fn sample_band_point(&self, rng: &mut SimRng) -> Result<Vec<f64>> {
        let radius = 3.0 * self.p.scale() / self.p.mu;
        for _ in 0..10_000 {
            let x = uniform_ball(self.p.d, radius, rng);
            if self.in_flat_band(&x) {
                return Ok(x);
            }
        }
        Err(Error::Domain("band region has negligible volume for these parameters".into()))
    }

    /// Domain sampler for noise-bound checks: uniform in the ball of radius `3r/mu`.
    pub fn ball_domain(&self) -> DomainSampler {
        let (d, radius) = (self.p.d, 3.0 * self.p.scale() / self.p.mu);
        Arc::new(move |rng: &mut SimRng| uniform_ball(d, radius, rng))
    }
}

impl Objective for BandInstance {
    fn dim(&self) -> usize {
        self.p.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        let s = self.scan(x);
        self.amp() * (self.h_of(&s) + s.sin_sq)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let u = self.unscaled(x);
        let y: Vec<f64> = u.iter().map(|t| t.sin()).collect();
        let gh = HParts::new(&self.v, &y, self.p.mu).grad(&self.v);
        u.iter()
            .zip(&y)
            .zip(&gh)
            .map(|((ui, yi), hi)| self.p.eps * ui.cos() * (hi + 2.0 * yi))
            .collect()
    }

    fn hessian_vector(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let u = self.unscaled(x);
        let y: Vec<f64> = u.iter().map(|t| t.sin()).collect();
        let c: Vec<f64> = u.iter().map(|t| t.cos()).collect();
        let hp = HParts::new(&self.v, &y, self.p.mu);
        let gh = hp.grad(&self.v);
        let cw: Vec<f64> = c.iter().zip(w).map(|(a, b)| a * b).collect();
        let hw = hp.hvp(&self.v, &cw);
        let k = self.p.eps / self.p.scale();
        (0..u.len())
            .map(|i| k * (c[i] * hw[i] - y[i] * (gh[i] + 2.0 * y[i]) * w[i] + 2.0 * c[i] * c[i] * w[i]))
            .collect()
    }

    fn fd_step(&self) -> f64 {
        1e-5 * self.p.scale().min(1.0)
    }
}

/// The instance's own noisy function.
#[derive(Debug, Clone)]
pub struct BandNoise(pub Arc<BandInstance>);

impl NoisyFunction for BandNoise {
    fn noisy_value(&self, x: &[f64]) -> f64 {
        self.0.noisy_value(x)
    }

    fn noisy_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0.noisy_gradient(x)
    }

    fn has_gradient(&self) -> bool {
        self.0.p.variant != BandVariant::ZerothBand
    }

    fn nu(&self) -> f64 {
        self.0.amp() * G1_MAX
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandScanReport {
    pub samples: usize,
    pub violations: usize,
    /// Smallest `max(||grad F|| / eps, -lambda_min / sqrt(rho eps))` over the samples.
    pub min_score: f64,
}

/// Sample the flat band and check each point against the SOSP conditions.
pub fn band_sosp_scan(inst: &BandInstance, n_samples: usize, rng: &mut SimRng) -> Result<BandScanReport> {
    let p = inst.params();
    let mut violations = 0;
    let mut min_score = f64::INFINITY;
    for _ in 0..n_samples {
        let x = inst.sample_band_point(rng)?;
        let v = sosp_check(inst, &x, p.eps, p.rho)?;
        if !v.is_sosp {
            violations += 1;
        }
        min_score = min_score.min((v.grad_norm / p.eps).max(-v.min_eig / (p.rho * p.eps).sqrt()));
    }
    Ok(BandScanReport { samples: n_samples, violations, min_score })
}

/// Points of the flat band concentrated where the bump can be active: `x = r (t v + s u)` with
/// `u` orthogonal to `v` drawn from a small fixed pool.
pub struct BandPlaneSampler {
    pool: Vec<Vec<f64>>,
}

impl BandPlaneSampler {
    pub fn new(inst: &BandInstance, pool_size: usize, rng: &mut SimRng) -> Self {
        let v = inst.direction();
        let pool = (0..pool_size.max(1))
            .map(|_| {
                let mut g = gaussian_vec(v.len(), rng);
                let a = dot(&g, v);
                g.iter_mut().zip(v).for_each(|(gi, vi)| *gi -= a * vi);
                let n = norm(&g);
                scale(&g, 1.0 / n)
            })
            .collect();
        BandPlaneSampler { pool }
    }

    pub fn sample(&self, inst: &BandInstance, rng: &mut SimRng) -> Vec<f64> {
        let p = inst.params();
        let (mu, r) = (p.mu, p.scale());
        loop {
            let t = rng.random_range(-3.0 / mu..=p.flat_width().min(3.0 / mu));
            let s = rng.random_range(0.0..=1.0 / mu);
            if t * t + s * s > 9.0 / (mu * mu) {
                continue;
            }
            let u = &self.pool[rng.random_range(0..self.pool.len())];
            let x: Vec<f64> = inst.direction().iter().zip(u).map(|(vi, ui)| r * (t * vi + s * ui)).collect();
            if inst.in_flat_band(&x) {
                return x;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sosp::{fd_gradient, fd_hessian_vector, min_hessian_eig};

    fn unit(d: usize, variant: BandVariant, mu: f64) -> BandInstance {
        let mut p = BandInstanceParams::new(d, variant, 7);
        p.mu = mu;
        BandInstance::new(p).unwrap()
    }

    #[test]
    fn kernel_shapes() {
        let best = (0..=100_000).map(|i| g1(i as f64 / 100_000.0)).fold(0.0, f64::max);
        assert!((best - G1_MAX).abs() < 1e-9);
        assert!((g1(0.4) - G1_MAX).abs() < 1e-12);
        assert_eq!(g1_prime(0.4), 0.0);
        assert_eq!(g2(0.0), -1.0);
        for s in [-1.0f64, 1.0] {
            let below = s * (1.0 - 1e-7);
            assert!(g2(below).abs() < 1e-12 && g1(below).abs() < 1e-12);
            assert!((g2_slope(below) * below).abs() < 1e-9);
        }
        for u in [-0.7, -0.2, 0.1, 0.55] {
            let h = 1e-6;
            assert!(((g1(u + h) - g1(u - h)) / (2.0 * h) - g1_prime(u)).abs() < 1e-6);
            assert!(((g1_prime(u + h) - g1_prime(u - h)) / (2.0 * h) - g1_second(u)).abs() < 1e-5);
            assert!(((g2(u + h) - g2(u - h)) / (2.0 * h) - g2_slope(u) * u).abs() < 1e-6);
        }
    }

    #[test]
    fn origin_and_padding_values() {
        let inst = unit(4, BandVariant::ZerothBand, 300.0);
        assert_eq!(inst.value(&[0.0; 4]), 0.0);
        assert_eq!(inst.region(&[0.0; 4]), Region::Band);
        let x = [std::f64::consts::FRAC_PI_2; 4];
        assert_eq!(inst.region(&x), Region::Padding);
        assert!((inst.value(&x) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn saddle_at_quarter_points() {
        let inst = unit(4, BandVariant::ZerothBand, 300.0);
        let x = [std::f64::consts::FRAC_PI_2; 4];
        let v = sosp_check(&inst, &x, 1.0, 1.0).unwrap();
        assert!(v.grad_norm < 1e-12);
        assert!((v.min_eig + 2.0).abs() < 1e-9);
        assert!(!v.is_sosp);
    }

    #[test]
    fn curvature_at_origin() {
        let mu = 4.0;
        let inst = unit(6, BandVariant::ZerothBand, mu);
        let lam = min_hessian_eig(&inst, &[0.0; 6]).unwrap();
        assert!((lam - (2.0 - 32.0 * mu * mu)).abs() < 1e-9);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = stream(3, 0, "band");
        for (mu, eps, rho) in [(4.0, 1.0, 1.0), (10.0, 0.04, 2.0)] {
            let mut p = BandInstanceParams::new(8, BandVariant::ZerothBand, 11);
            p.mu = mu;
            p.eps = eps;
            p.rho = rho;
            let inst = BandInstance::new(p).unwrap();
            for _ in 0..30 {
                let x = uniform_ball(8, 2.5 * p.scale() / mu, &mut rng);
                let g = inst.gradient(&x);
                let fd = fd_gradient(|y| inst.value(y), &x, inst.fd_step()).unwrap();
                let err = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-5 * eps.max(1.0) * 10.0, "grad err {err}");
                let w = gaussian_vec(8, &mut rng);
                let hv = inst.hessian_vector(&x, &w);
                let fh = fd_hessian_vector(&inst, &x, &w, 1e-6 * p.scale());
                let herr = hv.iter().zip(&fh).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(herr < 1e-3 * (1.0 + hv.iter().map(|t| t.abs()).fold(0.0, f64::max)), "hvp err {herr}");
            }
        }
    }

    #[test]
    fn noisy_function_cases() {
        let inst = unit(6, BandVariant::ZerothBand, 4.0);
        let x = scale(inst.direction(), 0.0);
        assert_eq!(inst.noisy_value(&x), 0.0);
        let mut rng = stream(1, 0, "nv");
        let y = inst.sample_band_point(&mut rng).unwrap();
        let flat: f64 = y.iter().map(|t| t.sin().powi(2)).sum();
        assert_eq!(inst.noisy_value(&y), flat);
        assert!(matches!(inst.noisy_gradient(&y), Err(Error::Capability(_))));

        let p = *inst.params();
        let other = BandInstance::new(BandInstanceParams { seed: 99, variant: BandVariant::NonInformative, ..p }).unwrap();
        let same = BandInstance::new(BandInstanceParams { seed: 5, variant: BandVariant::NonInformative, ..p }).unwrap();
        assert_eq!(other.noisy_value(&y), same.noisy_value(&y));
    }

    #[test]
    fn first_band_gradients() {
        let mut p = BandInstanceParams::new(5, BandVariant::FirstBand, 2);
        p.mu = 4.0;
        p.w = 0.3;
        let inst = BandInstance::new(p).unwrap();
        let mut rng = stream(9, 0, "fb");
        let (mut inner, mut outer) = (0, 0);
        for _ in 0..4000 {
            let x = uniform_ball(5, 3.0 / p.mu, &mut rng);
            let region = inst.region(&x);
            let g = inst.noisy_gradient(&x).unwrap();
            match region {
                Region::InnerBand => {
                    inner += 1;
                    let expect: Vec<f64> = x.iter().map(|t| (2.0 * t).sin()).collect();
                    assert_eq!(g, expect);
                }
                Region::Band => {
                    let h = 1e-7;
                    let near_edge = (0..5).any(|i| {
                        [h, -h].iter().any(|dh| {
                            let mut z = x.clone();
                            z[i] += dh;
                            inst.region(&z) != Region::Band
                        })
                    });
                    if !near_edge {
                        outer += 1;
                        let fd = fd_gradient(|y| inst.noisy_value(y), &x, h).unwrap();
                        let err = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                        assert!(err < 1e-5, "err {err}");
                    }
                }
                _ => {}
            }
        }
        assert!(inner > 0 && outer > 0, "{inner} {outer}");
    }

    #[test]
    fn region_membership() {
        let mut p = BandInstanceParams::new(10, BandVariant::ZerothBand, 1);
        p.mu = 10.0;
        p.w = 0.1;
        let inst = BandInstance::new(p).unwrap();
        let x = scale(inst.direction(), 1.5 / p.mu);
        assert_eq!(inst.region(&x), Region::BallMinusBand);
        let far = vec![std::f64::consts::FRAC_PI_2; 10];
        assert_eq!(inst.region(&far), Region::Padding);
    }

    #[test]
    fn scan_reports_violations() {
        let d = 64;
        let mut p = BandInstanceParams::new(d, BandVariant::ZerothBand, 4);
        p.mu = 2.0 / p.w;
        let inst = BandInstance::new(p).unwrap();
        let rep = band_sosp_scan(&inst, 20, &mut stream(2, 0, "scan")).unwrap();
        assert_eq!(rep.violations, 20);
        assert!(rep.min_score > 1.0);
    }
}
