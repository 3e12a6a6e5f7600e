#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod algorithms;
pub mod instances;
pub mod linalg;
pub mod objective;
pub mod oracles;
pub mod qsub;
pub mod rng;
pub mod smoothing;
pub mod sosp;

pub use error::{Error, Result};
pub use objective::{FnObjective, Objective, ProblemParams, QueryLedger, SospVerdict};
pub use oracles::{FirstNoiseModel, NoisyFunction, NoisyOracle, ZerothNoiseModel};
pub use sosp::sosp_check;
