//! Small dense-vector helpers on `&[f64]`.

use rand::Rng;
use rand_distr::StandardNormal;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `y += a * x`
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn gaussian_vec<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Uniform direction on the unit sphere.
pub fn unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g = gaussian_vec(d, rng);
        let n = norm(&g);
        if n > 0.0 {
            return scale(&g, 1.0 / n);
        }
    }
}

/// Uniform point in the ball of radius `r`.
pub fn uniform_ball<R: Rng + ?Sized>(d: usize, r: f64, rng: &mut R) -> Vec<f64> {
    let u: f64 = rng.random();
    let rad = r * u.powf(1.0 / d as f64);
    scale(&unit_sphere(d, rng), rad)
}

pub fn first_non_finite(a: &[f64]) -> Option<usize> {
    a.iter().position(|x| !x.is_finite())
}
