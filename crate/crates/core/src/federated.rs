//! Two-site workflow for the less-aggressive estimator, which sets the
//! density ratio to one so that every targeting step uses source data only.
//!
//! The source site fits and targets its models and exports them together
//! with its EIC contributions; the target site evaluates the exported models
//! on its covariates and pools the EIC. The result equals the in-memory
//! less-aggressive estimate on the pooled data when the target sample size
//! assumed at export matches the target data.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{MissingDataset, Schema, Strata, SurvivalDataset};
use crate::error::{Error, Result};
use crate::model::{NuisanceModel, Truncation};
use crate::nuisance::{
    fit_source_hazards, fit_source_nuisances, outcome_bounds, DensityRatio, HazardFits,
    PositivityReport,
};
use crate::survival::{
    apply_hazard_update, fit_survival, fit_survival_targeted, ipctw_estimate, BoundHazards,
    HazardFluctuation, HazardUpdate, SurvivalConfig, SurvivalFit,
};
use crate::tmle::{
    fit, fit_targeted, fluctuate_outcome, prepare, EstimateReport, FluctuationMode,
    FluctuationResult, MissingFit, OutcomeUpdate, TargetingScheme, TmleConfig,
};

/// Version written by this build; other versions are rejected.
pub const FORMAT_VERSION: u32 = 1;

/// Targeted source models and source EIC contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetedModelExport {
    pub format_version: u32,
    pub model: ExportedModel,
    pub n_source: usize,
    /// Target sample size assumed when `P(S = 1)` was formed.
    pub n_target_assumed: usize,
    /// `P(S = 1)` used by the source fit.
    pub p_s1: f64,
    /// Per source unit, the EIC of `[Ψ_0, Ψ_1]` (its source components).
    pub source_eic: Vec<[f64; 2]>,
    pub source_fit: SourceFitSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFitSummary {
    pub fluctuations: Vec<FluctuationResult>,
    pub iterations: usize,
    pub converged: bool,
    pub positivity: PositivityReport,
    #[serde(default)]
    pub reduced_epsilon: Option<[f64; 2]>,
    /// `Σ` of the IPCTW terms per arm (survival only).
    #[serde(default)]
    pub ipctw_sum: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "kebab-case")]
pub enum ExportedModel {
    Missing(MissingExport),
    Survival(SurvivalExport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingExport {
    pub schema: Schema,
    pub target_model: MissingTargetModel,
}

/// What the target site evaluates on its `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MissingTargetModel {
    /// `Q̄ʳ*(a, V) = fit_a(V) + ε_a / P(S=1)`.
    Reduced {
        models: [NuisanceModel; 2],
        epsilon: [f64; 2],
    },
    /// `V = W`: the initial outcome regression and the mechanisms entering
    /// its clever covariate, followed by the fluctuation passes in order.
    Outcome {
        q_bar: [NuisanceModel; 2],
        g_a: NuisanceModel,
        p_delta: NuisanceModel,
        y_bounds: (f64, f64),
        truncation: Truncation,
        fluctuation: FluctuationMode,
        targeting: TargetingScheme,
        updates: Vec<OutcomeUpdate>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalExport {
    pub w_columns: Vec<String>,
    pub t0: u32,
    /// Initial fits; `p_s_given_w` is not used.
    pub fits: HazardFits,
    pub fluctuation: HazardFluctuation,
    pub updates: Vec<HazardUpdate>,
}

impl TargetedModelExport {
    pub fn check_version(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: self.format_version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(())
    }

    /// Schema of the data the target site must supply.
    pub fn target_schema(&self) -> Schema {
        match &self.model {
            ExportedModel::Missing(m) => m.schema.clone(),
            ExportedModel::Survival(s) => Schema::survival(&s.w_columns, s.t0, s.fits.tau),
        }
    }
}

fn less_aggressive(config: &TmleConfig) -> TmleConfig {
    TmleConfig {
        density_ratio: DensityRatio::Unit,
        ..config.clone()
    }
}

fn less_aggressive_survival(config: &SurvivalConfig) -> SurvivalConfig {
    SurvivalConfig {
        density_ratio: DensityRatio::Unit,
        ..config.clone()
    }
}

/// The estimator with the density ratio fixed at one, on pooled data.
pub fn fit_less_aggressive(data: &MissingDataset, config: &TmleConfig) -> Result<MissingFit> {
    fit(data, &less_aggressive(config))
}

pub fn fit_less_aggressive_survival(data: &SurvivalDataset, config: &SurvivalConfig) -> Result<SurvivalFit> {
    fit_survival(data, &less_aggressive_survival(config))
}

fn p_s1_for(n_source: usize, n_target: usize, supplied: Option<f64>) -> Result<f64> {
    if n_target == 0 {
        return Err(Error::invalid("the target sample size must be positive"));
    }
    Ok(supplied.unwrap_or(n_source as f64 / (n_source + n_target) as f64))
}

fn require_source(strata: Strata) -> Result<()> {
    if strata != Strata::Source {
        return Err(Error::invalid("export needs source-only data"));
    }
    Ok(())
}

/// Fits and targets the less-aggressive estimator on source-only data,
/// assuming `n_target` target units.
pub fn export_missing(source: &MissingDataset, config: &TmleConfig, n_target: usize) -> Result<TargetedModelExport> {
    require_source(source.strata())?;
    let config = less_aggressive(config);
    let n_source = source.len();
    let p_s1 = p_s1_for(n_source, n_target, config.nuisance.p_s1)?;
    let bounds = outcome_bounds(source, config.y_bounds)?;
    let schema = source.schema();
    let fits = fit_source_nuisances(
        source.records(),
        &schema.w_columns,
        &config.nuisance,
        config.truncation,
        bounds,
        p_s1,
    )?;
    let f = fit_targeted(source, &config, fits, n_source + n_target)?;
    let target_model = if schema.v_equals_w() {
        MissingTargetModel::Outcome {
            q_bar: f.fits.q_bar.clone(),
            g_a: f.fits.g_a.clone(),
            p_delta: f.fits.p_delta.clone(),
            y_bounds: f.fits.y_bounds,
            truncation: f.fits.truncation,
            fluctuation: config.fluctuation,
            targeting: config.targeting,
            updates: f.updates.clone(),
        }
    } else {
        let [r0, r1] = &f.reduced;
        match (&r0.model, &r1.model) {
            (Some(m0), Some(m1)) => MissingTargetModel::Reduced {
                models: [m0.clone(), m1.clone()],
                epsilon: [r0.epsilon, r1.epsilon],
            },
            _ => return Err(Error::Numerical("reduced regression was not fitted".into())),
        }
    };
    Ok(TargetedModelExport {
        format_version: FORMAT_VERSION,
        model: ExportedModel::Missing(MissingExport {
            schema: schema.clone(),
            target_model,
        }),
        n_source,
        n_target_assumed: n_target,
        p_s1,
        source_eic: f.eic.iter().map(|e| [e[0].total, e[1].total]).collect(),
        source_fit: SourceFitSummary {
            fluctuations: f.report.fluctuations.clone(),
            iterations: f.report.iterations,
            converged: f.report.converged,
            positivity: f.report.positivity,
            reduced_epsilon: f.report.reduced_epsilon,
            ipctw_sum: None,
        },
    })
}

/// Survival analogue of [`export_missing`].
pub fn export_survival(
    source: &SurvivalDataset,
    config: &SurvivalConfig,
    n_target: usize,
) -> Result<TargetedModelExport> {
    require_source(source.strata())?;
    let config = less_aggressive_survival(config);
    config.truncation.validate()?;
    let n_source = source.len();
    let p_s1 = p_s1_for(n_source, n_target, config.nuisance.p_s1)?;
    let fits = fit_source_hazards(
        source.records(),
        source.w_columns(),
        source.tau(),
        &config.nuisance,
        config.truncation,
        p_s1,
    )?;
    // IPCTW is computed from the initial fits, before targeting
    let bound = BoundHazards::new(&fits, source.w_columns(), DensityRatio::Unit)?;
    let mut pos = PositivityReport::default();
    let units = source
        .records()
        .iter()
        .map(|r| bound.unit(&r.w, true, &mut pos))
        .collect::<Result<Vec<_>>>()?;
    let ipctw = ipctw_estimate(source.records(), &units, source.t0(), p_s1).map(|m| m * n_source as f64);
    let f = fit_survival_targeted(source, &config, fits, n_source + n_target)?;
    Ok(TargetedModelExport {
        format_version: FORMAT_VERSION,
        model: ExportedModel::Survival(SurvivalExport {
            w_columns: source.w_columns().to_vec(),
            t0: source.t0(),
            fits: f.fits.clone(),
            fluctuation: config.fluctuation,
            updates: f.targeting.updates.clone(),
        }),
        n_source,
        n_target_assumed: n_target,
        p_s1,
        source_eic: f.eic.iter().map(|e| [e[0].total, e[1].total]).collect(),
        source_fit: SourceFitSummary {
            fluctuations: f.report.fluctuations.clone(),
            iterations: f.report.iterations,
            converged: f.report.converged,
            positivity: f.report.positivity,
            reduced_epsilon: None,
            ipctw_sum: Some(ipctw),
        },
    })
}

/// Target-site data matching an export.
#[derive(Debug, Clone, Copy)]
pub enum TargetData<'a> {
    Missing(&'a MissingDataset),
    Survival(&'a SurvivalDataset),
}

/// Evaluates the exported models on target-only data and pools the EIC.
pub fn apply_export(export: &TargetedModelExport, target: TargetData<'_>) -> Result<EstimateReport> {
    export.check_version()?;
    if export.source_eic.len() != export.n_source || export.n_source == 0 {
        return Err(Error::invalid("export carries inconsistent source contributions"));
    }
    let predictions = match (&export.model, target) {
        (ExportedModel::Missing(m), TargetData::Missing(d)) => predict_missing(export, m, d)?,
        (ExportedModel::Survival(s), TargetData::Survival(d)) => predict_survival(export, s, d)?,
        _ => return Err(Error::SchemaMismatch("export and target data are of different problems".into())),
    };
    let n_target = predictions.len();
    let n = export.n_source + n_target;
    let p_hat = export.n_source as f64 / n as f64;
    let psi = [0, 1].map(|k| predictions.iter().map(|p| p[k]).sum::<f64>() / n_target as f64);
    // source contributions scale with 1 / P(S=1)
    let rescale = export.p_s1 / p_hat;
    let mut totals: Vec<[f64; 2]> = export
        .source_eic
        .iter()
        .map(|e| [e[0] * rescale, e[1] * rescale])
        .collect();
    totals.extend(
        predictions
            .iter()
            .map(|p| [0, 1].map(|k| (p[k] - psi[k]) / (1.0 - p_hat))),
    );
    let mut report = EstimateReport::from_eic(psi, &totals);
    let s = &export.source_fit;
    report.fluctuations = s.fluctuations.clone();
    report.iterations = s.iterations;
    report.converged = s.converged;
    report.positivity = s.positivity;
    report.reduced_epsilon = s.reduced_epsilon;
    report.ipctw = s.ipctw_sum.map(|sum| sum.map(|x| x * rescale / n as f64));
    if n_target != export.n_target_assumed {
        report.warnings.push(format!(
            "export assumed {} target units but {} were supplied; source contributions were rescaled",
            export.n_target_assumed, n_target
        ));
    }
    if !s.converged {
        report.warnings.push("source targeting did not solve its score equation".into());
    }
    Ok(report)
}

fn require_target(strata: Strata) -> Result<()> {
    if strata != Strata::Target {
        return Err(Error::invalid("apply needs target-only data"));
    }
    Ok(())
}

fn predict_missing(
    export: &TargetedModelExport,
    m: &MissingExport,
    data: &MissingDataset,
) -> Result<Vec<[f64; 2]>> {
    require_target(data.strata())?;
    if data.schema().v_columns != m.schema.v_columns || data.schema().w_columns != m.schema.w_columns {
        return Err(Error::SchemaMismatch(format!(
            "export expects V = {:?}, W = {:?}",
            m.schema.v_columns, m.schema.w_columns
        )));
    }
    match &m.target_model {
        MissingTargetModel::Reduced { models, epsilon } => {
            let v = &m.schema.v_columns;
            let bound = [models[0].bind(v)?, models[1].bind(v)?];
            let c = 1.0 / export.p_s1;
            Ok(data
                .records()
                .iter()
                .map(|r| [0, 1].map(|k| bound[k].predict(&r.v, None) + epsilon[k] * c))
                .collect())
        }
        MissingTargetModel::Outcome {
            q_bar,
            g_a,
            p_delta,
            y_bounds,
            truncation,
            fluctuation,
            targeting,
            updates,
        } => {
            let fits = crate::nuisance::NuisanceFits {
                g_a: g_a.clone(),
                p_delta: p_delta.clone(),
                p_s_given_v: None,
                q_bar: q_bar.clone(),
                y_bounds: *y_bounds,
                p_s1: export.p_s1,
                truncation: *truncation,
            };
            let prep = prepare(data.records(), &m.schema, &fits, DensityRatio::Unit)?;
            let mut q = prep.q.clone();
            for upd in updates {
                for arm in [false, true] {
                    let k = usize::from(arm);
                    for (qi, &h) in q[k].iter_mut().zip(&prep.h[k]) {
                        *qi = fluctuate_outcome(*qi, h, arm, upd.epsilon[k], *fluctuation, *targeting);
                    }
                }
            }
            let (lo, hi) = *y_bounds;
            Ok((0..data.len())
                .map(|i| [0, 1].map(|k| lo + (hi - lo) * q[k][i]))
                .collect())
        }
    }
}

fn predict_survival(
    export: &TargetedModelExport,
    s: &SurvivalExport,
    data: &SurvivalDataset,
) -> Result<Vec<[f64; 2]>> {
    require_target(data.strata())?;
    if data.w_columns() != s.w_columns.as_slice() || data.t0() != s.t0 || data.tau() != s.fits.tau {
        return Err(Error::SchemaMismatch(format!(
            "export expects W = {:?}, t0 = {}, tau = {}",
            s.w_columns, s.t0, s.fits.tau
        )));
    }
    let bound = BoundHazards::new(&s.fits, &s.w_columns, DensityRatio::Unit)?;
    let mut pos = PositivityReport::default();
    data.records()
        .iter()
        .map(|r| {
            let mut u = bound.unit(&r.w, false, &mut pos)?;
            for upd in &s.updates {
                apply_hazard_update(&mut u, upd, s.t0, export.p_s1, s.fluctuation);
            }
            Ok([false, true].map(|arm| u.curves(arm).survival(s.t0)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ObservedRecord;

    #[test]
    fn version_mismatch_is_rejected() {
        let schema = Schema::missing_outcome(&["w"], &["w"]);
        let e = TargetedModelExport {
            format_version: FORMAT_VERSION + 1,
            model: ExportedModel::Missing(MissingExport {
                schema: schema.clone(),
                target_model: MissingTargetModel::Reduced {
                    models: [NuisanceModel::constant(0.0), NuisanceModel::constant(0.0)],
                    epsilon: [0.0; 2],
                },
            }),
            n_source: 1,
            n_target_assumed: 1,
            p_s1: 0.5,
            source_eic: alloc::vec![[0.0; 2]],
            source_fit: SourceFitSummary {
                fluctuations: Vec::new(),
                iterations: 1,
                converged: true,
                positivity: PositivityReport::default(),
                reduced_epsilon: None,
                ipctw_sum: None,
            },
        };
        let target = MissingDataset::with_strata(
            alloc::vec![ObservedRecord::target(alloc::vec![1.0])],
            schema,
            Strata::Target,
        )
        .unwrap();
        assert!(matches!(
            apply_export(&e, TargetData::Missing(&target)),
            Err(Error::UnsupportedVersion { .. })
        ));
    }
}
