//! Second-order stationarity verification and finite-difference references.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, first_non_finite, norm, scale, unit_sphere};
use crate::objective::{Objective, SospVerdict, DENSE_EIG_THRESHOLD};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub power_iters: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { max_iter: 200, tol: 1e-6, power_iters: 60 }
    }
}

/// Central differences, one coordinate at a time.
pub fn fd_gradient(value_fn: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("fd step must be positive, got {h}")));
    }
    let mut xp = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let xi = xp[i];
        xp[i] = xi + h;
        let fp = value_fn(&xp);
        xp[i] = xi - h;
        let fm = value_fn(&xp);
        xp[i] = xi;
        let gi = (fp - fm) / (2.0 * h);
        if !gi.is_finite() {
            return Err(Error::Evaluation { coord: i });
        }
        g.push(gi);
    }
    Ok(g)
}

/// Central differences of the gradient along `v`: approximates `H v`.
pub fn fd_hessian_vector(obj: &dyn Objective, x: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    axpy(&mut xp, h, v);
    let gp = obj.gradient(&xp);
    let mut xm = x.to_vec();
    axpy(&mut xm, -h, v);
    let gm = obj.gradient(&xm);
    gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

pub fn sosp_check(obj: &dyn Objective, x: &[f64], eps: f64, rho: f64) -> Result<SospVerdict> {
    if !(eps > 0.0 && rho > 0.0) {
        return Err(Error::Config("eps and rho must be positive".into()));
    }
    if let Some(coord) = first_non_finite(x) {
        return Err(Error::Evaluation { coord });
    }
    let g = obj.gradient(x);
    if let Some(coord) = first_non_finite(&g) {
        return Err(Error::Evaluation { coord });
    }
    let min_eig = min_hessian_eig(obj, x)?;
    Ok(SospVerdict::new(norm(&g), min_eig, eps, rho))
}

pub fn min_hessian_eig(obj: &dyn Objective, x: &[f64]) -> Result<f64> {
    if let Some(coord) = first_non_finite(x) {
        return Err(Error::Evaluation { coord });
    }
    if obj.dim() <= DENSE_EIG_THRESHOLD {
        if let Some(h) = obj.dense_hessian(x) {
            return dense_min_eig(h);
        }
    }
    lanczos_min_eig(obj, x, LanczosOptions::default())
}

pub fn dense_min_eig(h: DMatrix<f64>) -> Result<f64> {
    for (k, v) in h.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Evaluation { coord: k % h.nrows() });
        }
    }
    let eig = SymmetricEigen::new(h);
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

fn power_norm(obj: &dyn Objective, x: &[f64], iters: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut q = unit_sphere(obj.dim(), rng);
    let mut est = 0.0;
    for _ in 0..iters {
        let w = obj.hessian_vector(x, &q);
        let n = norm(&w);
        if n == 0.0 {
            return 0.0;
        }
        est = n;
        q = scale(&w, 1.0 / n);
    }
    est
}

fn tridiag_min(alpha: &[f64], beta: &[f64]) -> (f64, f64, f64) {
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (idx, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty tridiagonal");
    let last = eig.eigenvectors[(k - 1, idx)];
    let spread = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (theta, last, spread)
}

/// Smallest eigenvalue by Lanczos with full reorthogonalization.
pub fn lanczos_min_eig(obj: &dyn Objective, x: &[f64], opts: LanczosOptions) -> Result<f64> {
    let d = obj.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a9c_2b0d);
    let h_norm = power_norm(obj, x, opts.power_iters, &mut rng);
    let mut basis: Vec<Vec<f64>> = vec![unit_sphere(d, &mut rng)];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut best = f64::INFINITY;
    let steps = opts.max_iter.min(d);
    for k in 0..steps {
        let q = &basis[k];
        let mut w = obj.hessian_vector(x, q);
        if let Some(coord) = first_non_finite(&w) {
            return Err(Error::Evaluation { coord });
        }
        let a = dot(q, &w);
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                axpy(&mut w, -c, b);
            }
        }
        let bk = norm(&w);
        let check = k + 1 == steps || bk == 0.0 || k % 5 == 4;
        if check {
            let (theta, last, spread) = tridiag_min(&alpha, &beta);
            best = theta;
            let scale_h = h_norm.max(spread).max(f64::MIN_POSITIVE);
            if bk * last.abs() <= opts.tol * scale_h || bk <= 1e-14 * scale_h {
                return Ok(theta);
            }
        }
        if k + 1 == steps {
            break;
        }
        beta.push(bk);
        basis.push(scale(&w, 1.0 / bk));
    }
    if steps == d {
        // a full Krylov space is exact
        return Ok(best);
    }
    Err(Error::Convergence { iterations: steps, best_ritz: best })
}
