use proptest::prelude::*;
use transport_tmle_core::dgp::{transport_missing, transport_survival};
use transport_tmle_core::survival::{estimate_survival, SurvivalConfig};
use transport_tmle_core::tmle::{estimate, FluctuationMode, TargetingScheme, TmleConfig};
use transport_tmle_core::{EstimateReport, MissingDataset, SurvivalDataset};

fn scheme() -> impl Strategy<Value = TargetingScheme> {
    prop_oneof![Just(TargetingScheme::SeparateArms), Just(TargetingScheme::JointAte)]
}

fn mode() -> impl Strategy<Value = FluctuationMode> {
    prop_oneof![
        Just(FluctuationMode::Covariate),
        Just(FluctuationMode::Weight),
        Just(FluctuationMode::Linear)
    ]
}

fn check_report(r: &EstimateReport) {
    assert!((0.0..=1.0).contains(&r.psi0) && (0.0..=1.0).contains(&r.psi1));
    assert_eq!(r.ate, r.psi1 - r.psi0);
    let half = 1.96 * r.sigma_n / (r.n as f64).sqrt();
    assert!((r.ci_lo - (r.ate - half)).abs() < 1e-12);
    assert!((r.ci_hi - (r.ate + half)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 24,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn missing_estimates_are_bounded_and_solve_the_score(
        seed in 0u64..1_000_000, n in 400usize..1500, scheme in scheme(), mode in mode()
    ) {
        let dgp = transport_missing();
        let data = dgp.generate(n, seed).unwrap();
        let cfg = TmleConfig { targeting: scheme, fluctuation: mode, ..TmleConfig::new(dgp.correct_spec()) };
        let r = estimate(&data, &cfg).unwrap();
        check_report(&r);
        prop_assert!(!r.converged || r.score_solved(scheme));
    }

    #[test]
    fn missing_estimates_ignore_unit_order(seed in 0u64..1_000_000, shift in 1usize..400) {
        let dgp = transport_missing();
        let data = dgp.generate(600, seed).unwrap();
        let mut records = data.records().to_vec();
        records.rotate_left(shift);
        records.reverse();
        let shuffled = MissingDataset::new(records, data.schema().clone()).unwrap();
        let cfg = TmleConfig::new(dgp.correct_spec());
        let (a, b) = (estimate(&data, &cfg).unwrap(), estimate(&shuffled, &cfg).unwrap());
        prop_assert!((a.ate - b.ate).abs() < 1e-9);
        prop_assert!((a.sigma_n - b.sigma_n).abs() < 1e-9);
    }

    #[test]
    fn survival_estimates_are_bounded_and_ignore_unit_order(
        seed in 0u64..1_000_000, n in 400usize..1500, shift in 1usize..400
    ) {
        let dgp = transport_survival();
        let data = dgp.generate(n, seed).unwrap();
        let cfg = SurvivalConfig::new(dgp.correct_spec());
        let r = estimate_survival(&data, &cfg).unwrap();
        check_report(&r);
        prop_assert!(!r.converged || r.eic_mean.abs() <= (r.sigma_n / ((n as f64).sqrt() * (n as f64).ln())).max(1e-8));

        let mut records = data.records().to_vec();
        records.rotate_left(shift);
        let shuffled = SurvivalDataset::new(records, data.w_columns().to_vec(), data.t0(), data.tau()).unwrap();
        let b = estimate_survival(&shuffled, &cfg).unwrap();
        prop_assert!((r.ate - b.ate).abs() < 1e-9);
    }
}
