mod common;

use approx::assert_abs_diff_eq;
use common::v_equals_w_dgp;
use transport_tmle_core::dgp::{transport_missing, transport_survival};
use transport_tmle_core::federated::{
    apply_export, export_missing, export_survival, fit_less_aggressive, fit_less_aggressive_survival,
    TargetData, FORMAT_VERSION,
};
use transport_tmle_core::nuisance::DensityRatio;
use transport_tmle_core::survival::{fit_survival, SurvivalConfig};
use transport_tmle_core::tmle::{estimate, fit, TargetingScheme, TmleConfig};
use transport_tmle_core::{Error, EstimateReport, MissingDataset, Strata, SurvivalDataset};

fn split_missing(data: &MissingDataset) -> (MissingDataset, MissingDataset) {
    let (s, t): (Vec<_>, Vec<_>) = data.records().iter().cloned().partition(|r| r.s);
    (
        MissingDataset::with_strata(s, data.schema().clone(), Strata::Source).unwrap(),
        MissingDataset::with_strata(t, data.schema().clone(), Strata::Target).unwrap(),
    )
}

fn split_survival(data: &SurvivalDataset) -> (SurvivalDataset, SurvivalDataset) {
    let (s, t): (Vec<_>, Vec<_>) = data.records().iter().cloned().partition(|r| r.s);
    let make = |recs, strata| {
        SurvivalDataset::with_strata(recs, data.w_columns().to_vec(), data.t0(), data.tau(), strata).unwrap()
    };
    (make(s, Strata::Source), make(t, Strata::Target))
}

fn assert_reports_match(a: &EstimateReport, b: &EstimateReport, tol: f64) {
    assert_eq!(a.n, b.n);
    for (x, y) in [
        (a.psi0, b.psi0),
        (a.psi1, b.psi1),
        (a.ate, b.ate),
        (a.sigma_n, b.sigma_n),
        (a.ci_lo, b.ci_lo),
        (a.ci_hi, b.ci_hi),
        (a.eic_mean, b.eic_mean),
    ] {
        assert_abs_diff_eq!(x, y, epsilon = tol);
    }
}

#[test]
fn forcing_unit_ratio_is_the_less_aggressive_fit() {
    let dgp = transport_missing();
    let data = dgp.generate(1500, 1).unwrap();
    let cfg = TmleConfig::new(dgp.correct_spec());
    let forced = estimate(
        &data,
        &TmleConfig {
            density_ratio: DensityRatio::Unit,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_eq!(forced, fit_less_aggressive(&data, &cfg).unwrap().report);

    let sdgp = transport_survival();
    let sdata = sdgp.generate(1500, 1).unwrap();
    let scfg = SurvivalConfig::new(sdgp.correct_spec());
    let forced = fit_survival(
        &sdata,
        &SurvivalConfig {
            density_ratio: DensityRatio::Unit,
            ..scfg.clone()
        },
    )
    .unwrap()
    .report;
    assert_eq!(forced, fit_less_aggressive_survival(&sdata, &scfg).unwrap().report);
}

#[test]
fn split_missing_workflow_matches_pooled_fit() {
    for (dgp, scheme) in [
        (transport_missing(), TargetingScheme::SeparateArms),
        (transport_missing(), TargetingScheme::JointAte),
        (v_equals_w_dgp(), TargetingScheme::SeparateArms),
    ] {
        let data = dgp.generate(2000, 4).unwrap();
        let cfg = TmleConfig {
            targeting: scheme,
            ..TmleConfig::new(dgp.correct_spec())
        };
        let pooled = fit_less_aggressive(&data, &cfg).unwrap().report;
        let (source, target) = split_missing(&data);
        let export = export_missing(&source, &cfg, target.len()).unwrap();
        assert_eq!(export.format_version, FORMAT_VERSION);
        let split = apply_export(&export, TargetData::Missing(&target)).unwrap();
        assert_reports_match(&pooled, &split, 1e-12);
        assert!(split.warnings.iter().all(|w| !w.contains("assumed")));
    }
}

#[test]
fn split_survival_workflow_matches_pooled_fit() {
    let dgp = transport_survival();
    let data = dgp.generate(2000, 4).unwrap();
    let cfg = SurvivalConfig::new(dgp.correct_spec());
    let pooled = fit_less_aggressive_survival(&data, &cfg).unwrap().report;
    let (source, target) = split_survival(&data);
    let export = export_survival(&source, &cfg, target.len()).unwrap();
    let split = apply_export(&export, TargetData::Survival(&target)).unwrap();
    assert_reports_match(&pooled, &split, 1e-12);
    let (a, b) = (pooled.ipctw.unwrap(), split.ipctw.unwrap());
    assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-12);
    assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-12);
}

#[test]
fn wrong_target_size_is_flagged() {
    let dgp = transport_missing();
    let data = dgp.generate(1000, 2).unwrap();
    let cfg = TmleConfig::new(dgp.correct_spec());
    let (source, target) = split_missing(&data);
    let export = export_missing(&source, &cfg, target.len() + 50).unwrap();
    let r = apply_export(&export, TargetData::Missing(&target)).unwrap();
    assert!(r.warnings.iter().any(|w| w.contains("assumed")));
    assert_eq!(r.n, data.len());
}

#[test]
fn problem_and_strata_mismatches_are_rejected() {
    let dgp = transport_missing();
    let data = dgp.generate(600, 2).unwrap();
    let cfg = TmleConfig::new(dgp.correct_spec());
    let (source, target) = split_missing(&data);
    assert!(export_missing(&data, &cfg, 10).is_err());
    assert!(export_missing(&source, &cfg, 0).is_err());
    assert!(fit(&source, &cfg).is_err());
    let export = export_missing(&source, &cfg, target.len()).unwrap();
    assert!(apply_export(&export, TargetData::Missing(&source)).is_err());
    let sdata = transport_survival().generate(300, 2).unwrap();
    let (_, starget) = split_survival(&sdata);
    assert!(matches!(
        apply_export(&export, TargetData::Survival(&starget)),
        Err(Error::SchemaMismatch(_))
    ));
    let mut old = export.clone();
    old.format_version = 0;
    assert!(matches!(
        apply_export(&old, TargetData::Missing(&target)),
        Err(Error::UnsupportedVersion { found: 0, .. })
    ));
}

#[test]
fn constant_export_predicts_its_constant() {
    use transport_tmle_core::federated::{ExportedModel, MissingTargetModel};
    use transport_tmle_core::NuisanceModel;

    let dgp = transport_missing();
    let data = dgp.generate(800, 6).unwrap();
    let (source, target) = split_missing(&data);
    let mut export = export_missing(&source, &TmleConfig::new(dgp.correct_spec()), target.len()).unwrap();
    let ExportedModel::Missing(m) = &mut export.model else { unreachable!() };
    m.target_model = MissingTargetModel::Reduced {
        models: [NuisanceModel::constant(0.3), NuisanceModel::constant(0.6)],
        epsilon: [0.0, 0.0],
    };
    let r = apply_export(&export, TargetData::Missing(&target)).unwrap();
    assert_abs_diff_eq!(r.psi0, 0.3, epsilon = 1e-12);
    assert_abs_diff_eq!(r.psi1, 0.6, epsilon = 1e-12);

    // the target side contributes exact zeros to the pooled EIC
    let mut d: Vec<f64> = export.source_eic.iter().map(|e| e[1] - e[0]).collect();
    d.resize(data.len(), 0.0);
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
    assert_abs_diff_eq!(r.sigma_n, sd, epsilon = 1e-12);
}
