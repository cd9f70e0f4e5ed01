//! Estimators checked against independently computed answers: brute-force
//! plug-ins over the empirical distribution, life tables, closed forms and
//! one-dimensional likelihood maximization by bisection.

mod common;

use approx::assert_abs_diff_eq;
use common::*;
use transport_tmle_core::dgp::{transport_missing, transport_survival};
use transport_tmle_core::federated::fit_less_aggressive;
use transport_tmle_core::glm::fit_logistic;
use transport_tmle_core::linalg::Matrix;
use transport_tmle_core::nuisance::{HazardSpec, NuisanceSpec};
use transport_tmle_core::survival::{estimate_survival, fit_survival, SurvivalConfig};
use transport_tmle_core::tmle::{estimate, fit, target_reduced_regression, FluctuationMode, TmleConfig};
use transport_tmle_core::{DesignSpec, Link, ObservedRecord, Schema};

#[test]
fn saturated_missing_tmle_equals_npmle_plug_in() {
    let dgp = transport_missing();
    let data = dgp.generate(6000, 3).unwrap();
    let oracle = missing_plug_in(&data);
    let mut cfg = TmleConfig::new(NuisanceSpec::saturated(&dgp.w_columns(), &dgp.v_columns));
    let full = estimate(&data, &cfg).unwrap();
    let la = fit_less_aggressive(&data, &cfg).unwrap().report;
    for r in [&full, &la] {
        assert_abs_diff_eq!(r.psi0, oracle[0], epsilon = 1e-6);
        assert_abs_diff_eq!(r.psi1, oracle[1], epsilon = 1e-6);
    }
    cfg.fluctuation = FluctuationMode::Linear;
    let linear = estimate(&data, &cfg).unwrap();
    assert_abs_diff_eq!(linear.ate, oracle[1] - oracle[0], epsilon = 1e-6);
}

#[test]
fn saturated_survival_tmle_equals_life_table_plug_in() {
    let dgp = transport_survival();
    let data = dgp.generate(8000, 5).unwrap();
    let oracle = survival_plug_in(&data);
    let cfg = SurvivalConfig::new(HazardSpec::saturated(&dgp.w_columns));
    let full = estimate_survival(&data, &cfg).unwrap();
    let la = transport_tmle_core::federated::fit_less_aggressive_survival(&data, &cfg)
        .unwrap()
        .report;
    for r in [&full, &la] {
        assert_abs_diff_eq!(r.psi0, oracle[0], epsilon = 1e-6);
        assert_abs_diff_eq!(r.psi1, oracle[1], epsilon = 1e-6);
    }
}

/// Root of the offset-logistic score `Σ c (y − expit(off + ε c))` by
/// bisection.
fn bisect_epsilon(c: &[f64], y: &[f64], off: &[f64]) -> f64 {
    let score = |e: f64| -> f64 {
        c.iter()
            .zip(y)
            .zip(off)
            .map(|((c, y), o)| c * (y - 1.0 / (1.0 + (-(o + e * c)).exp())))
            .sum()
    };
    let (mut lo, mut hi) = (-20.0, 20.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn one_dimensional_fluctuation_matches_bisection() {
    let c: Vec<f64> = (0..40).map(|i| 0.5 + (i % 7) as f64 * 0.3).collect();
    let y: Vec<f64> = (0..40).map(|i| f64::from((i * 5 % 3 == 0) as u8)).collect();
    let off: Vec<f64> = (0..40).map(|i| -0.8 + (i % 5) as f64 * 0.35).collect();
    let x = Matrix::from_vec(40, 1, c.clone());
    let fit = fit_logistic(&x, &y, None, Some(&off)).unwrap();
    assert_abs_diff_eq!(fit.coefficients[0], bisect_epsilon(&c, &y, &off), epsilon = 1e-9);

    // a constant covariate is an intercept update
    let ones = vec![1.0; 40];
    let fit = fit_logistic(&Matrix::from_vec(40, 1, ones.clone()), &y, None, Some(&off)).unwrap();
    assert_abs_diff_eq!(fit.coefficients[0], bisect_epsilon(&ones, &y, &off), epsilon = 1e-9);
}

#[test]
fn reduced_fluctuation_is_the_closed_form_ratio() {
    let schema = Schema::missing_outcome(&["w1", "w2"], &["w1"]);
    let v_index = schema.v_index();
    let mut records = Vec::new();
    let mut q = Vec::new();
    let mut c = Vec::new();
    for i in 0..60u32 {
        let w = vec![f64::from(i % 2), f64::from(i % 3 == 0)];
        records.push(ObservedRecord::source(w, &v_index, i % 4 == 0, Some(1.0)));
        q.push(0.1 + f64::from(i % 5) * 0.15);
        c.push(1.0 + f64::from(i % 4) * 0.5);
    }
    records.push(ObservedRecord::target(vec![1.0]));
    q.push(f64::NAN);
    c.push(0.0);
    let design = DesignSpec::main_effects(&["w1"], Link::Identity);
    let fit = target_reduced_regression(&records, &schema, &q, &c, &design).unwrap();
    // closed form from the least-squares fit: Σ C r / Σ C²
    let model = fit.model.as_ref().unwrap().bind(&schema.v_columns).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, r) in records.iter().enumerate().filter(|(_, r)| r.s) {
        let resid = q[i] - model.predict(&r.v, None);
        num += c[i] * resid;
        den += c[i] * c[i];
    }
    assert_abs_diff_eq!(fit.epsilon, num / den, epsilon = 1e-12);
    // the targeted fit solves the linear score
    let score: f64 = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.s)
        .map(|(i, _)| c[i] * (q[i] - fit.values[i]))
        .sum();
    assert!(score.abs() < 1e-10);
}


#[test]
fn v_equal_to_w_collapses_second_stage() {
    let data = v_equals_w_dgp().generate(1500, 9).unwrap();
    let f = fit(&data, &TmleConfig::main_effects(data.schema())).unwrap();
    assert!(f.report.reduced_epsilon.unwrap().iter().all(|e| e.abs() <= 1e-10));
    assert!(f.eic.iter().flatten().all(|e| e.d_wv.abs() <= 1e-10));
}

#[test]
fn survival_at_a_single_period_is_the_missing_outcome_problem() {
    let (sdata, scfg, mdata, mcfg) = single_period_pair();
    let s = estimate_survival(&sdata, &scfg).unwrap();
    let m = estimate(&mdata, &mcfg).unwrap();
    for (a, b) in [(s.psi0, m.psi0), (s.psi1, m.psi1), (s.sigma_n, m.sigma_n)] {
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }
}

#[test]
fn ipctw_without_censoring_is_the_empirical_survival_fraction() {
    let (data, cfg) = uncensored_fixture();
    let ipctw = fit_survival(&data, &cfg).unwrap().report.ipctw.unwrap();
    let expected = empirical_survival_fraction(&data);
    for k in 0..2 {
        assert_abs_diff_eq!(ipctw[k], expected[k], epsilon = 1e-12);
    }
}

#[test]
fn ipctw_is_unbiased_under_true_nuisances() {
    let (est, se, truth) = ipctw_under_truth(40_000, 17);
    for k in 0..2 {
        assert!((est[k] - truth[k]).abs() <= 3.0 * se[k], "arm {k}: {} vs {}", est[k], truth[k]);
    }
}
