use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{apply_overrides, AlgorithmId, ExperimentConfig, InstanceKind, NoiseKind};
use super::report::ReportRow;
use crate::algorithms::{
    first_order_pgd, fpsgd_qme, pagd_ancf, pgd_qgc, psgd_qme, PagdConfig, PgdConfig, PgdVariant, PsgdConfig,
    PsgdOptions, RunResult,
};
use crate::error::{Error, Result};
use crate::instances::{CosineNoise, PlantedQuartic, Quadratic};
use crate::linalg::norm_inf;
use crate::objective::{Objective, ProblemParams};
use crate::oracles::{FirstNoiseModel, NoisyOracle, ZerothNoiseModel};
use crate::qsub::JordanConfig;
use crate::rng::{splitmix64, stream, SimRng};

/// Environment variable read for the default worker count.
pub const PARALLELISM_ENV: &str = "SOSP_PARALLELISM";

pub fn default_parallelism() -> usize {
    std::env::var(PARALLELISM_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|n: &usize| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// One grid cell paired with one seed.
#[derive(Debug, Clone, Copy)]
struct Task {
    cell: usize,
    d: usize,
    eps: f64,
    seed: u64,
}

/// Run every (dimension, accuracy) cell for every seed. Rows come back sorted by (cell, seed).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let mut tasks = Vec::new();
    for (i, &d) in cfg.dims.iter().enumerate() {
        for (j, &eps) in cfg.eps.iter().enumerate() {
            let cell = i * cfg.eps.len() + j;
            tasks.extend(cfg.seeds.iter().map(|&seed| Task { cell, d, eps, seed }));
        }
    }
    let threads = cfg.parallelism.unwrap_or_else(default_parallelism);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut rows = pool.install(|| tasks.par_iter().map(|t| run_cell(cfg, t)).collect::<Result<Vec<_>>>())?;
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.seed.cmp(&b.1.seed)));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

struct Setup {
    target: Arc<dyn Objective>,
    params: ProblemParams,
    x0: Vec<f64>,
}

fn setup(kind: InstanceKind, d: usize, eps: f64) -> Setup {
    match kind {
        InstanceKind::PlantedQuartic => {
            let inst = PlantedQuartic::new(d);
            Setup { params: inst.params(eps), target: Arc::new(inst), x0: vec![0.0; d] }
        }
        InstanceKind::Bowl => {
            let mut params = ProblemParams::new(d, 1.0, 1.0, 1.0, eps);
            params.delta_f = 0.5;
            let mut x0 = vec![0.0; d];
            x0[0] = 1.0;
            Setup { params, target: Arc::new(Quadratic::scaled_norm(d, 0.5)), x0 }
        }
    }
}

/// Admissible noise level for the algorithm: the zeroth-order bound, or the gradient bound for
/// first-order methods.
fn regime_bound(id: AlgorithmId, p: &ProblemParams, delta0: Option<f64>) -> f64 {
    let (d, eps) = (p.d as f64, p.eps);
    match id {
        AlgorithmId::PgdQgc | AlgorithmId::PagdAncf => {
            let omega = 1.0 + d / delta0.unwrap_or(1.0);
            JordanConfig::max_nu_for(eps / 20.0, omega, p.d, p.ell)
        }
        AlgorithmId::PsgdQme => (eps.powi(3) / p.rho).sqrt() / d,
        AlgorithmId::FpsgdQme => eps / d.sqrt(),
        AlgorithmId::FirstOrderPgd => eps / 20.0,
    }
}

fn build_oracle(
    cfg: &ExperimentConfig,
    s: &Setup,
    level: f64,
    rng: &mut SimRng,
) -> (NoisyOracle, ProblemParams) {
    let mut p = s.params;
    let first = cfg.algorithm.id.first_order();
    match cfg.noise.model {
        NoiseKind::None => (NoisyOracle::exact(s.target.clone()), p),
        NoiseKind::BoundedRandom => {
            let tag = rand::Rng::random::<u64>(rng);
            if first {
                p.nu_tilde = level;
                let model = FirstNoiseModel::BoundedRandom { nu_tilde: level, stream: tag };
                (NoisyOracle::new(s.target.clone(), ZerothNoiseModel::None, Some(model)), p)
            } else {
                p.nu = level;
                let model = ZerothNoiseModel::BoundedRandom { nu: level, stream: tag };
                (NoisyOracle::new(s.target.clone(), model, None), p)
            }
        }
        NoiseKind::Cosine => {
            let mut noise = CosineNoise::sample(PlantedQuartic::new(p.d), 1.0, cfg.noise.freq, rng);
            noise.nu = if first { level / norm_inf(&noise.a).max(f64::MIN_POSITIVE) } else { level };
            p.nu = noise.nu;
            p.nu_tilde = noise.nu * norm_inf(&noise.a);
            let noise = Arc::new(noise);
            let oracle = NoisyOracle::new(
                s.target.clone(),
                ZerothNoiseModel::InstanceDefined(noise.clone()),
                Some(FirstNoiseModel::InstanceDefined(noise)),
            );
            (oracle, p)
        }
    }
}

fn run_cell(cfg: &ExperimentConfig, task: &Task) -> Result<(usize, ReportRow)> {
    let started = Instant::now();
    let run_seed = splitmix64(cfg.master_seed ^ splitmix64(task.seed));
    let mut noise_rng = stream(run_seed, task.cell as u64, "noise");
    let mut rng = stream(run_seed, task.cell as u64, "run");
    let s = setup(cfg.instance, task.d, task.eps);
    let alg = &cfg.algorithm;
    let delta0 = match alg.id {
        AlgorithmId::PgdQgc => Some(PgdConfig::from_params(&s.params, cfg.delta, PgdVariant::QuantumGradient)?.delta0),
        AlgorithmId::PagdAncf => Some(PagdConfig::from_params(&s.params, cfg.delta)?.delta0),
        _ => None,
    };
    let level = match (cfg.noise.nu, cfg.noise.regime_fraction) {
        (Some(nu), _) => nu,
        (None, Some(f)) => f * regime_bound(alg.id, &s.params, delta0),
        (None, None) => 0.0,
    };
    let (mut oracle, p) = build_oracle(cfg, &s, level, &mut noise_rng);
    let res: RunResult = match alg.id {
        AlgorithmId::PgdQgc => {
            let c = apply_overrides(&PgdConfig::from_params(&p, cfg.delta, PgdVariant::QuantumGradient)?, &alg.overrides)?;
            let jordan = c.jordan(alg.jordan_mode, p.d, p.nu, p.ell)?;
            pgd_qgc(&mut oracle, &s.x0, &c, &jordan, &mut rng)?
        }
        AlgorithmId::PagdAncf => {
            let c = apply_overrides(&PagdConfig::from_params(&p, cfg.delta)?, &alg.overrides)?;
            let jordan = c.jordan(alg.jordan_mode, p.d, p.nu, p.ell)?;
            pagd_ancf(&mut oracle, &s.x0, &c, &jordan, &mut rng)?
        }
        AlgorithmId::PsgdQme | AlgorithmId::FpsgdQme => {
            let opts = PsgdOptions::default();
            let base = if alg.id == AlgorithmId::PsgdQme {
                PsgdConfig::zeroth(&p, cfg.delta, alg.mean_mode, &opts)?
            } else {
                PsgdConfig::first(&p, cfg.delta, alg.mean_mode, &opts)?
            };
            let mut c = apply_overrides(&base, &alg.overrides)?;
            c.warnings = base.warnings;
            if alg.id == AlgorithmId::PsgdQme {
                psgd_qme(&mut oracle, &s.x0, &c, &mut rng)?
            } else {
                fpsgd_qme(&mut oracle, &s.x0, &c, &mut rng)?
            }
        }
        AlgorithmId::FirstOrderPgd => {
            let c = apply_overrides(&PgdConfig::from_params(&p, cfg.delta, PgdVariant::FirstOrder)?, &alg.overrides)?;
            first_order_pgd(&mut oracle, &s.x0, &c, &mut rng)?
        }
    };
    for w in &res.warnings {
        log::warn!("cell {} seed {}: {w}", task.cell, task.seed);
    }
    let row = ReportRow {
        run_id: format!("{:03}-{}", task.cell, task.seed),
        algorithm: alg.id.name().into(),
        instance: cfg.instance.name().into(),
        d: task.d,
        eps: task.eps,
        nu: if alg.id.first_order() { p.nu_tilde } else { p.nu },
        seed: task.seed,
        iterations: res.iterations,
        zeroth_queries: res.ledger.zeroth,
        first_queries: res.ledger.first,
        binary_queries: res.ledger.binary,
        success: res.verdict.is_sosp,
        grad_norm_final: res.verdict.grad_norm,
        min_eig_final: res.verdict.min_eig,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    Ok((task.cell, row))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> ExperimentConfig {
        let text = format!(
            "instance = \"bowl\"\ndims = [3]\neps = [0.01]\nseeds = [5]\nparallelism = 1\n{extra}\n[algorithm]\nid = \"pgd_qgc\"\n"
        );
        ExperimentConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn one_cell_one_row() {
        let rows = run_experiment(&config("")).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].success);
        assert_eq!(rows[0].zeroth_queries as usize, rows[0].iterations);
    }

    #[test]
    fn grid_rows_are_unique_and_deterministic() {
        let mut cfg = config("");
        cfg.dims = vec![2, 4];
        cfg.seeds = vec![1, 2, 3];
        cfg.instance = InstanceKind::PlantedQuartic;
        cfg.parallelism = Some(2);
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 6);
        let mut ids: Vec<_> = rows.iter().map(|r| r.run_id.clone()).collect();
        ids.dedup();
        assert_eq!(ids.len(), 6);
        let again = run_experiment(&cfg).unwrap();
        let strip = |v: Vec<ReportRow>| v.into_iter().map(|r| ReportRow { wall_ms: 0, ..r }).collect::<Vec<_>>();
        assert_eq!(strip(rows), strip(again));
    }

    #[test]
    fn regime_fraction_sets_noise() {
        let mut cfg = config("");
        cfg.instance = InstanceKind::PlantedQuartic;
        cfg.noise = crate::harness::NoiseSpec {
            model: NoiseKind::Cosine,
            nu: None,
            regime_fraction: Some(0.5),
            freq: 1.0,
        };
        let rows = run_experiment(&cfg).unwrap();
        assert!(rows[0].nu > 0.0);
    }
}
