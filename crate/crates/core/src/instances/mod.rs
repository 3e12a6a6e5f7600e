//! Test and hard-instance families with analytic derivatives.

pub mod band;
pub mod chain;
pub mod planted;

use nalgebra::DMatrix;
use rand::Rng;

use crate::linalg::unit_sphere;

pub use band::{BandInstance, BandInstanceParams, BandNoise, BandVariant, Region};
pub use chain::{ChainInstance, ChainInstanceParams, ChainKernel, NesterovChain};
pub use planted::{CosineNoise, PlantedQuartic, Quadratic};

/// Value and gradient at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub value: f64,
    pub gradient: Vec<f64>,
}

pub fn sample_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    unit_sphere(d, rng)
}

/// Haar-distributed `d x k` matrix with orthonormal columns (`k <= d`).
pub fn sample_orthonormal_columns<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(k <= d, "need k <= d");
    let g = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
