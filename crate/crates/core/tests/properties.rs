use proptest::prelude::*;

use sosp_core::algorithms::{hamiltonian, PgdConfig, PgdVariant};
use sosp_core::harness::{apply_overrides, fit_power_law, read_csv, write_csv, ReportRow};
use sosp_core::instances::chain::{chain_gamma, chain_gamma_prime, gamma_alpha, zero_chain_check, ChainForm};
use sosp_core::instances::{ChainInstance, ChainInstanceParams, ChainKernel, PlantedQuartic};
use sosp_core::linalg::norm;
use sosp_core::qsub::{required_batch_classical, required_batch_quantum, JordanConfig, JordanMode};
use sosp_core::rng::stream;

fn small_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_is_nonnegative_with_minimum_at_one(x in -5.0f64..5.0) {
        prop_assert!(chain_gamma(x) >= -1e-12);
        prop_assert!(chain_gamma(x) >= chain_gamma(1.0));
        prop_assert_eq!(chain_gamma_prime(x) > 0.0, x > 1.0);
    }

    #[test]
    fn clamp_shrinks_and_vanishes_outside(z in small_vec(6), alpha in 0.1f64..2.0) {
        let out = gamma_alpha(alpha, 5, &z);
        prop_assert!(norm(&out) <= norm(&z) + 1e-15);
        if norm(&z) >= alpha * 5f64.sqrt() {
            prop_assert!(out.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn kernel_is_zero_chain(t in 1usize..12, mu in 0.05f64..1.0, seed in any::<u64>()) {
        let kernel = ChainKernel::new(t, mu).unwrap();
        let report = zero_chain_check(|x| sosp_core::Objective::gradient(&kernel, x), t + 1, 20, &mut stream(seed, 0, "prop"));
        prop_assert_eq!(report.violations, 0);
    }

    #[test]
    fn periodic_chain_repeats(seed in 0u64..1000, axis in 0usize..30, shift in -2i32..=2) {
        let mut p = ChainInstanceParams::new(30, 4, seed);
        p.form = ChainForm::Unbounded;
        let inst = ChainInstance::new(p).unwrap();
        let x = inst.sample_prefix_point(&mut stream(seed, 1, "prop"));
        let mut y = x.clone();
        y[axis] += shift as f64 * p.period();
        let (a, b) = (sosp_core::Objective::value(&inst, &x), sosp_core::Objective::value(&inst, &y));
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn hamiltonian_dominates_value(f in -10.0f64..10.0, v in small_vec(4), eta in 1e-3f64..1.0) {
        let e = hamiltonian(f, &v, eta);
        prop_assert!(e >= f);
        prop_assert_eq!(hamiltonian(f, &[0.0; 4], eta), f);
    }

    #[test]
    fn jordan_radius_inverts(target in 1e-4f64..1.0, omega in 2.0f64..1e4, d in 1usize..200, ell in 0.1f64..10.0) {
        let nu = JordanConfig::max_nu_for(target, omega, d, ell);
        let cfg = JordanConfig::new(omega, JordanMode::ContractSim, d, nu, ell).unwrap();
        prop_assert!((cfg.error_bound() - target).abs() <= 1e-9 * target);
        prop_assert!((0.0..=1.0).contains(&cfg.failure_prob()));
    }

    #[test]
    fn quantum_batch_never_exceeds_classical_beyond_dimension(d in 10usize..5000, target in 1e-3f64..0.1) {
        let q = required_batch_quantum(d, 1.0, target, 0.01, 1.0);
        let c = required_batch_classical(d, 1.0, target, 0.01);
        prop_assert!(q <= c);
    }

    #[test]
    fn power_law_fit_recovers_exponent(k in -3.0f64..3.0, a in 0.1f64..10.0) {
        let xs = [2.0f64, 5.0, 11.0, 40.0];
        let ys: Vec<f64> = xs.iter().map(|x| a * x.powf(k)).collect();
        let fit = fit_power_law(&xs, &ys).unwrap();
        prop_assert!((fit.exponent - k).abs() < 1e-9);
        prop_assert!(fit.residuals.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn overrides_replace_only_named_fields(eta in 1e-3f64..1.0) {
        let p = PlantedQuartic::new(3).params(0.05);
        let base = PgdConfig::from_params(&p, 0.1, PgdVariant::QuantumGradient).unwrap();
        let mut table = toml::Table::new();
        table.insert("eta".into(), toml::Value::Float(eta));
        let out = apply_overrides(&base, &table).unwrap();
        prop_assert_eq!(out.eta, eta);
        prop_assert_eq!(PgdConfig { eta: base.eta, ..out }, base);
        table.insert("no_such_field".into(), toml::Value::Integer(1));
        prop_assert!(apply_overrides(&base, &table).is_err());
    }

    #[test]
    fn report_rows_survive_csv(seed in any::<u64>(), binary in any::<u128>(), nu in 0.0f64..1.0, ok in any::<bool>()) {
        let row = ReportRow {
            run_id: format!("000-{seed}"),
            algorithm: "pgd_qgc".into(),
            instance: "bowl".into(),
            d: 7,
            eps: 0.01,
            nu,
            seed,
            iterations: 3,
            zeroth_queries: 3,
            first_queries: 0,
            binary_queries: binary,
            success: ok,
            grad_norm_final: 1e-4,
            min_eig_final: 1.0,
            wall_ms: 2,
        };
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&row), &mut buf).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), vec![row]);
    }
}
