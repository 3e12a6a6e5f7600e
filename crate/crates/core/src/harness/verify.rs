//! Property suites for the instance families, used by the command-line front end.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::instances::chain::{chain_gamma, chain_gamma_prime, chain_gamma_quadrature, zero_chain_check, ChainForm};
use crate::instances::{
    BandInstance, BandInstanceParams, BandVariant, ChainInstance, ChainInstanceParams, ChainKernel, PlantedQuartic,
    Region,
};
use crate::linalg::{gaussian_vec, norm, uniform_ball};
use crate::objective::Objective;
use crate::rng::{stream, SimRng};
use crate::sosp::{fd_gradient, fd_hessian_vector};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: impl Into<String>) -> CheckResult {
    CheckResult { name: name.into(), passed, detail: detail.into() }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst gradient and Hessian-vector disagreement with finite differences over sampled points.
pub fn derivative_errors(
    obj: &dyn Objective,
    n: usize,
    mut sample: impl FnMut(&mut SimRng) -> Vec<f64>,
    rng: &mut SimRng,
) -> Result<(f64, f64)> {
    let (mut grad_err, mut hvp_err) = (0.0f64, 0.0f64);
    let h = obj.fd_step();
    for _ in 0..n {
        let x = sample(rng);
        let g = obj.gradient(&x);
        let fd = fd_gradient(|y| obj.value(y), &x, h)?;
        grad_err = grad_err.max(max_abs_diff(&g, &fd) / (1.0 + norm(&g)));
        let w = gaussian_vec(x.len(), rng);
        let hv = obj.hessian_vector(&x, &w);
        let fh = fd_hessian_vector(obj, &x, &w, h);
        hvp_err = hvp_err.max(max_abs_diff(&hv, &fh) / (1.0 + norm(&hv)));
    }
    Ok((grad_err, hvp_err))
}

pub fn verify_band(d: usize, mu: Option<f64>, seed: u64) -> Result<Vec<CheckResult>> {
    let mut p = BandInstanceParams::new(d, BandVariant::ZerothBand, seed);
    if let Some(mu) = mu {
        p.mu = mu;
    }
    let inst = BandInstance::new(p)?;
    let mut rng = stream(seed, 0, "verify-band");
    let mut out = Vec::new();
    let zero = vec![0.0; d];
    out.push(check("value at origin", inst.value(&zero) == 0.0, format!("F(0) = {}", inst.value(&zero))));
    out.push(check("origin in band", inst.region(&zero) == Region::Band, format!("{:?}", inst.region(&zero))));
    let far = vec![std::f64::consts::FRAC_PI_2; d];
    out.push(check("padding region", inst.region(&far) == Region::Padding, format!("{:?}", inst.region(&far))));
    let radius = 3.0 * p.scale() / p.mu;
    let (ge, he) = derivative_errors(&inst, 20, |r| uniform_ball(d, radius, r), &mut rng)?;
    out.push(check("gradient vs finite differences", ge <= 1e-5, format!("max rel err {ge:.2e}")));
    out.push(check("hessian-vector vs finite differences", he <= 1e-4, format!("max rel err {he:.2e}")));
    let lam = crate::sosp::min_hessian_eig(&inst, &zero)?;
    let floor = -(p.rho * p.eps).sqrt();
    out.push(check("negative curvature at origin", lam <= floor, format!("lambda_min = {lam:.3}")));
    let x = inst.sample_band_point(&mut rng)?;
    let flat = p.eps * p.scale() * x.iter().map(|t| (t / p.scale()).sin().powi(2)).sum::<f64>();
    out.push(check("noisy value is flat in band", inst.noisy_value(&x) == flat, format!("f = {}", inst.noisy_value(&x))));
    let other = BandInstance::new(BandInstanceParams { variant: BandVariant::NonInformative, seed: seed ^ 1, ..p })?;
    let same = BandInstance::new(BandInstanceParams { variant: BandVariant::NonInformative, ..p })?;
    out.push(check(
        "non-informative value independent of direction",
        other.noisy_value(&x) == same.noisy_value(&x),
        "",
    ));
    Ok(out)
}

pub fn verify_chain(t: usize, d: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut rng = stream(seed, 0, "verify-chain");
    out.push(check("potential minimum", chain_gamma(1.0) == 0.0, ""));
    out.push(check(
        "potential derivative zeros",
        chain_gamma_prime(0.0) == 0.0 && chain_gamma_prime(1.0) == 0.0,
        "",
    ));
    let worst = (0..=100)
        .map(|i| -2.0 + 0.04 * i as f64)
        .map(|x| (chain_gamma(x) - chain_gamma_quadrature(x)).abs())
        .fold(0.0, f64::max);
    out.push(check("potential vs quadrature", worst <= 1e-9, format!("max delta {worst:.2e}")));
    let kernel = ChainKernel::new(t, 0.5)?;
    let zc = zero_chain_check(|x| kernel.gradient(x), t + 1, 500, &mut rng);
    out.push(check("zero-chain", zc.violations == 0, format!("max leak {:.2e}", zc.max_leak)));
    for form in [ChainForm::Bounded, ChainForm::Unbounded] {
        let mut p = ChainInstanceParams::new(d, t, seed);
        p.form = form;
        let inst = ChainInstance::new(p)?;
        let gram = inst.rotation().tr_mul(inst.rotation());
        let dev = (gram - nalgebra::DMatrix::<f64>::identity(t + 1, t + 1)).abs().max();
        out.push(check(&format!("{form:?} rotation orthonormal"), dev <= 1e-12, format!("{dev:.2e}")));
        let (ge, he) = derivative_errors(&inst, 20, |r| inst.sample_prefix_point(r), &mut rng)?;
        out.push(check(&format!("{form:?} gradient vs finite differences"), ge <= 1e-5, format!("{ge:.2e}")));
        out.push(check(&format!("{form:?} hessian-vector vs finite differences"), he <= 1e-4, format!("{he:.2e}")));
        if form == ChainForm::Unbounded {
            let x = inst.sample_prefix_point(&mut rng);
            let mut y = x.clone();
            let i = rng.random_range(0..d);
            y[i] += p.period();
            let (a, b) = (inst.value(&x), inst.value(&y));
            out.push(check("periodicity", (a - b).abs() <= 1e-12 * a.abs().max(1.0), format!("{a} vs {b}")));
        }
    }
    Ok(out)
}

pub fn verify_planted(d: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let inst = PlantedQuartic::new(d);
    let mut rng = stream(seed, 0, "verify-planted");
    let (ge, he) = derivative_errors(&inst, 20, |r| uniform_ball(d, 1.3, r), &mut rng)?;
    let saddle = crate::sosp::min_hessian_eig(&inst, &vec![0.0; d])?;
    Ok(vec![
        check("gradient vs finite differences", ge <= 1e-5, format!("{ge:.2e}")),
        check("hessian-vector vs finite differences", he <= 1e-4, format!("{he:.2e}")),
        check("strict saddle at origin", (saddle + 1.0).abs() < 1e-9, format!("lambda_min = {saddle}")),
        check("minima", inst.minima().iter().all(|m| inst.value(m) == 0.0), ""),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaRow {
    pub x: f64,
    pub closed_form: f64,
    pub quadrature: f64,
    pub delta: f64,
}

/// The chain potential on an even grid of `n` points over `[lo, hi]`.
pub fn gamma_table(n: usize, lo: f64, hi: f64) -> Vec<GammaRow> {
    (0..n)
        .map(|i| {
            let x = if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
            let (closed_form, quadrature) = (chain_gamma(x), chain_gamma_quadrature(x));
            GammaRow { x, closed_form, quadrature, delta: (closed_form - quadrature).abs() }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_pass(v: &[CheckResult]) {
        for c in v {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn suites_pass() {
        all_pass(&verify_band(16, Some(8.0), 1).unwrap());
        all_pass(&verify_chain(6, 20, 2).unwrap());
        all_pass(&verify_planted(5, 3).unwrap());
    }

    #[test]
    fn gamma_grid() {
        let t = gamma_table(101, -2.0, 2.0);
        assert_eq!(t.len(), 101);
        assert!(t.iter().all(|r| r.delta <= 1e-9));
        assert_eq!(t[75].x, 1.0);
        assert_eq!(t[75].closed_form, 0.0);
    }
}
