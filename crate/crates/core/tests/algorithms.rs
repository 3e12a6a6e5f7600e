use std::sync::Arc;

use sosp_core::algorithms::{pagd_ancf, pgd_qgc, PagdConfig, PgdConfig, PgdVariant};
use sosp_core::instances::PlantedQuartic;
use sosp_core::linalg::norm;
use sosp_core::qsub::JordanMode;
use sosp_core::rng::stream;
use sosp_core::sosp::{fd_gradient, min_hessian_eig};
use sosp_core::{NoisyOracle, Objective, SospVerdict};

const EPISODES: u64 = 200;
/// Measured once over 200 seeded episodes and frozen.
const MIN_CURVED_FRACTION: f64 = 1.0;

#[test]
fn episodes_find_negative_curvature() {
    let d = 10;
    let inst = Arc::new(PlantedQuartic::new(d));
    let p = inst.params(0.01);
    let mut cfg = PagdConfig::from_params(&p, 0.1).unwrap();
    cfg.record_log = true;
    cfg.max_iters = cfg.t_escape + 2;
    let jordan = cfg.jordan(JordanMode::ContractSim, d, 0.0, p.ell).unwrap();
    let bound = -(p.rho * p.eps).sqrt() / 4.0;
    let mut curved = 0;
    for seed in 0..EPISODES {
        let mut oracle = NoisyOracle::exact(inst.clone());
        let res = pagd_ancf(&mut oracle, &vec![0.0; d], &cfg, &jordan, &mut stream(seed, 0, "episode")).unwrap();
        let found = res.log.unwrap().iter().find_map(|r| r.episode_curvature).expect("episode completed");
        curved += (found <= bound) as usize;
    }
    let fraction = curved as f64 / EPISODES as f64;
    assert!(fraction >= MIN_CURVED_FRACTION, "{fraction}");
}

#[test]
fn identical_seed_gives_identical_result() {
    let d = 8;
    let inst = Arc::new(PlantedQuartic::new(d));
    let p = inst.params(0.05);
    let cfg = PagdConfig::from_params(&p, 0.1).unwrap();
    let jordan = cfg.jordan(JordanMode::ContractSim, d, 0.0, p.ell).unwrap();
    let run = || {
        let mut oracle = NoisyOracle::exact(inst.clone());
        pagd_ancf(&mut oracle, &vec![0.0; d], &cfg, &jordan, &mut stream(42, 0, "det")).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn reported_success_survives_tighter_recheck() {
    let d = 6;
    let inst = Arc::new(PlantedQuartic::new(d));
    let p = inst.params(0.05);
    let cfg = PgdConfig::from_params(&p, 0.1, PgdVariant::QuantumGradient).unwrap();
    let jordan = cfg.jordan(JordanMode::ContractSim, d, 0.0, p.ell).unwrap();
    let mut successes = 0;
    for seed in 0..10 {
        let mut oracle = NoisyOracle::exact(inst.clone());
        let res = pgd_qgc(&mut oracle, &vec![0.0; d], &cfg, &jordan, &mut stream(seed, 0, "recheck")).unwrap();
        if !res.verdict.is_sosp {
            continue;
        }
        successes += 1;
        let g = fd_gradient(|x| inst.value(x), &res.x, inst.fd_step() / 2.0).unwrap();
        let lam = min_hessian_eig(inst.as_ref(), &res.x).unwrap();
        assert!(SospVerdict::new(norm(&g), lam, p.eps, p.rho).is_sosp, "seed {seed}");
    }
    assert!(successes > 0);
}
