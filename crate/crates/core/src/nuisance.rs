//! Estimation of the nuisance functions: treatment, missingness, selection,
//! outcome regressions and discrete-time event and censoring hazards.
//!
//! Every nuisance is either fitted from a [`DesignSpec`] or injected as a
//! fixed [`NuisanceModel`] (for example the true mechanism of a simulation).

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{MissingDataset, ObservedRecord, SurvivalDataset};
use crate::design::{DesignSpec, Link, TimeEncoding};
use crate::error::{Error, Result};
use crate::model::{fit_model, BoundModel, FitRow, NuisanceModel, Truncation};

/// Name of the treatment feature appended to `W` in outcome and hazard
/// layouts.
pub const TREATMENT: &str = "a";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceSource {
    Fit(DesignSpec),
    Fixed(NuisanceModel),
}

impl NuisanceSource {
    fn resolve<'a>(
        &self,
        name: &'static str,
        features: &[String],
        tau: Option<u32>,
        rows: impl IntoIterator<Item = FitRow<'a>>,
        response_scale: Option<(f64, f64)>,
    ) -> Result<NuisanceModel> {
        let model = match self {
            NuisanceSource::Fit(spec) => fit_model(spec, features, tau, rows, response_scale),
            NuisanceSource::Fixed(m) => Ok(m.clone()),
        }
        .map_err(|e| e.in_nuisance(name))?;
        // surfaces layout problems of injected models before they are used
        model.bind(features).map_err(|e| e.in_nuisance(name))?;
        Ok(model)
    }
}

/// `W ++ [a]`.
pub fn treatment_layout(w_columns: &[String]) -> Vec<String> {
    let mut f = w_columns.to_vec();
    f.push(TREATMENT.to_string());
    f
}

/// Writes `w ++ [a]` into `buf`.
#[inline]
pub fn with_treatment<'b>(buf: &'b mut Vec<f64>, w: &[f64], a: bool) -> &'b [f64] {
    buf.clear();
    buf.extend_from_slice(w);
    buf.push(f64::from(u8::from(a)));
    buf
}

/// Nuisance configuration for the missing-outcome problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSpec {
    /// `P(A = 1 | W, S = 1)` over `W`.
    pub g_a: NuisanceSource,
    /// `P(Δ = 1 | W, A, S = 1)` over `W ++ [a]`.
    pub p_delta: NuisanceSource,
    /// `P(S = 1 | V)` over `V`.
    pub p_s_given_v: NuisanceSource,
    /// `E(Y | A, W, Δ = 1, S = 1)` over `W ++ [a]`.
    pub q_bar: NuisanceSource,
    /// Fit the outcome regression separately within each arm.
    #[serde(default)]
    pub q_bar_per_arm: bool,
    /// Design over `V` for the reduced regression of the targeted outcome
    /// regression; the link is always identity.
    pub reduced: DesignSpec,
    /// Overrides the empirical `P(S = 1)`.
    #[serde(default)]
    pub p_s1: Option<f64>,
}

impl NuisanceSpec {
    /// Main-effect logistic designs for every mechanism.
    pub fn main_effects(w_columns: &[String], v_columns: &[String]) -> Self {
        let wa = treatment_layout(w_columns);
        NuisanceSpec {
            g_a: NuisanceSource::Fit(DesignSpec::main_effects(w_columns, Link::Logit)),
            p_delta: NuisanceSource::Fit(DesignSpec::main_effects(&wa, Link::Logit)),
            p_s_given_v: NuisanceSource::Fit(DesignSpec::main_effects(v_columns, Link::Logit)),
            q_bar: NuisanceSource::Fit(DesignSpec::main_effects(&wa, Link::Logit)),
            q_bar_per_arm: false,
            reduced: DesignSpec::main_effects(v_columns, Link::Identity),
            p_s1: None,
        }
    }

    /// Fully saturated designs; nonparametric on discrete covariates.
    pub fn saturated(w_columns: &[String], v_columns: &[String]) -> Self {
        let wa = treatment_layout(w_columns);
        NuisanceSpec {
            g_a: NuisanceSource::Fit(DesignSpec::saturated(w_columns, Link::Logit)),
            p_delta: NuisanceSource::Fit(DesignSpec::saturated(&wa, Link::Logit)),
            p_s_given_v: NuisanceSource::Fit(DesignSpec::saturated(v_columns, Link::Logit)),
            q_bar: NuisanceSource::Fit(DesignSpec::saturated(w_columns, Link::Logit)),
            q_bar_per_arm: true,
            reduced: DesignSpec::saturated(v_columns, Link::Identity),
            p_s1: None,
        }
    }
}

/// Fitted missing-outcome nuisances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFits {
    pub g_a: NuisanceModel,
    pub p_delta: NuisanceModel,
    /// Absent when the density ratio is not used.
    pub p_s_given_v: Option<NuisanceModel>,
    /// Outcome regression used for arm `0` and arm `1`.
    pub q_bar: [NuisanceModel; 2],
    /// Outcome models live on `[lo, hi]`; predictions are mapped to the unit
    /// interval by `(q - lo) / (hi - lo)` for fluctuation.
    pub y_bounds: (f64, f64),
    pub p_s1: f64,
    pub truncation: Truncation,
}

/// Outcome bounds: the supplied ones, `(0, 1)` for binary outcomes, or the
/// observed range.
pub fn outcome_bounds(data: &MissingDataset, supplied: Option<(f64, f64)>) -> Result<(f64, f64)> {
    let (lo, hi) = match supplied {
        Some(b) => b,
        None if data.binary_outcome() => (0.0, 1.0),
        None => data.outcome_range(),
    };
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::invalid("no observed outcomes"));
    }
    if hi <= lo {
        return Ok((lo, lo + 1.0));
    }
    let (min, max) = data.outcome_range();
    if min < lo || max > hi {
        return Err(Error::invalid(alloc::format!(
            "observed outcomes [{min}, {max}] fall outside the bounds [{lo}, {hi}]"
        )));
    }
    Ok((lo, hi))
}

fn source(records: &[ObservedRecord]) -> impl Iterator<Item = &ObservedRecord> {
    records.iter().filter(|r| r.s)
}

/// Fits every missing-outcome nuisance. `with_selection` controls whether
/// `P(S = 1 | V)` is estimated.
pub fn fit_nuisances(
    data: &MissingDataset,
    spec: &NuisanceSpec,
    truncation: Truncation,
    y_bounds: (f64, f64),
    with_selection: bool,
) -> Result<NuisanceFits> {
    truncation.validate()?;
    let records = data.records();
    let p_s1 = spec
        .p_s1
        .unwrap_or(data.n_source() as f64 / data.len() as f64);
    let mut fits = fit_source_nuisances(records, &data.schema().w_columns, spec, truncation, y_bounds, p_s1)?;
    if with_selection {
        let v_cols = &data.schema().v_columns;
        let model = spec.p_s_given_v.resolve(
            "p_s_given_v",
            v_cols,
            None,
            records.iter().map(|r| FitRow {
                x: &r.v,
                t: None,
                y: f64::from(u8::from(r.s)),
                weight: 1.0,
            }),
            None,
        )?;
        fits.p_s_given_v = Some(model);
    }
    Ok(fits)
}

/// Fits the nuisances identified from the source sample alone.
pub fn fit_source_nuisances(
    records: &[ObservedRecord],
    w_columns: &[String],
    spec: &NuisanceSpec,
    truncation: Truncation,
    y_bounds: (f64, f64),
    p_s1: f64,
) -> Result<NuisanceFits> {
    if !(p_s1 > 0.0 && p_s1 < 1.0) {
        return Err(Error::invalid("P(S=1) must lie strictly inside (0, 1)"));
    }
    let wa = treatment_layout(w_columns);

    let g_a = spec.g_a.resolve(
        "g_a",
        w_columns,
        None,
        source(records).map(|r| FitRow {
            x: r.w(),
            t: None,
            y: f64::from(u8::from(r.a == Some(true))),
            weight: 1.0,
        }),
        None,
    )?;

    let xa: Vec<(Vec<f64>, &ObservedRecord)> = source(records)
        .map(|r| {
            let mut x = r.w().to_vec();
            x.push(f64::from(u8::from(r.a == Some(true))));
            (x, r)
        })
        .collect();

    let p_delta = spec.p_delta.resolve(
        "p_delta",
        &wa,
        None,
        xa.iter().map(|(x, r)| FitRow {
            x,
            t: None,
            y: f64::from(u8::from(r.observed())),
            weight: 1.0,
        }),
        None,
    )?;

    let (lo, hi) = y_bounds;
    let q_rows = |arm: Option<bool>| {
        xa.iter()
            .filter(move |(_, r)| r.observed() && arm.is_none_or(|a| r.a == Some(a)))
            .map(|(x, r)| FitRow {
                x,
                t: None,
                y: r.y.expect("observed outcome"),
                weight: 1.0,
            })
    };
    let scale = Some((lo, hi)).filter(|b| *b != (0.0, 1.0));
    let q_bar = if spec.q_bar_per_arm && matches!(spec.q_bar, NuisanceSource::Fit(_)) {
        [
            spec.q_bar.resolve("q_bar", &wa, None, q_rows(Some(false)), scale)?,
            spec.q_bar.resolve("q_bar", &wa, None, q_rows(Some(true)), scale)?,
        ]
    } else {
        let m = spec.q_bar.resolve("q_bar", &wa, None, q_rows(None), scale)?;
        [m.clone(), m]
    };

    Ok(NuisanceFits {
        g_a,
        p_delta,
        p_s_given_v: None,
        q_bar,
        y_bounds,
        p_s1,
        truncation,
    })
}

/// Least-squares regression of `values` (one per source record, in order)
/// on `V` among source records.
pub fn fit_reduced_regression(
    records: &[ObservedRecord],
    values: &[f64],
    v_columns: &[String],
    design: &DesignSpec,
) -> Result<NuisanceModel> {
    let mut design = design.clone();
    design.link = Link::Identity;
    let rows = source(records).zip(values).map(|(r, &y)| FitRow {
        x: &r.v,
        t: None,
        y,
        weight: 1.0,
    });
    fit_model(&design, v_columns, None, rows, None).map_err(|e| e.in_nuisance("q_bar_r"))
}

/// Nuisance configuration for the survival problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardSpec {
    /// Event hazard over `W ++ [a]` and time.
    pub lambda: NuisanceSource,
    /// Censoring hazard over `W ++ [a]` and time.
    pub alpha: NuisanceSource,
    pub g_a: NuisanceSource,
    /// `P(S = 1 | W)` over `W`.
    pub p_s_given_w: NuisanceSource,
    #[serde(default)]
    pub p_s1: Option<f64>,
}

impl HazardSpec {
    /// Pooled logistic hazards with period indicators and main effects.
    pub fn main_effects(w_columns: &[String]) -> Self {
        let wa = treatment_layout(w_columns);
        let hazard = DesignSpec::main_effects(&wa, Link::Logit).with_time(TimeEncoding::Indicators);
        HazardSpec {
            lambda: NuisanceSource::Fit(hazard.clone()),
            alpha: NuisanceSource::Fit(hazard),
            g_a: NuisanceSource::Fit(DesignSpec::main_effects(w_columns, Link::Logit)),
            p_s_given_w: NuisanceSource::Fit(DesignSpec::main_effects(w_columns, Link::Logit)),
            p_s1: None,
        }
    }

    /// Hazards crossed with period indicators over saturated covariate
    /// designs.
    pub fn saturated(w_columns: &[String]) -> Self {
        let wa = treatment_layout(w_columns);
        let hazard = DesignSpec::saturated(&wa, Link::Logit).with_time(TimeEncoding::Crossed);
        HazardSpec {
            lambda: NuisanceSource::Fit(hazard.clone()),
            alpha: NuisanceSource::Fit(hazard),
            g_a: NuisanceSource::Fit(DesignSpec::saturated(w_columns, Link::Logit)),
            p_s_given_w: NuisanceSource::Fit(DesignSpec::saturated(w_columns, Link::Logit)),
            p_s1: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardFits {
    pub lambda: NuisanceModel,
    pub alpha: NuisanceModel,
    pub g_a: NuisanceModel,
    /// Absent when the density ratio is not used.
    pub p_s_given_w: Option<NuisanceModel>,
    pub p_s1: f64,
    pub truncation: Truncation,
    pub tau: u32,
}

/// Fits the survival nuisances. `alpha` is fit on the at-risk rows that did
/// not fail, excluding period `tau` where every survivor is administratively
/// censored.
pub fn fit_hazards(
    data: &SurvivalDataset,
    spec: &HazardSpec,
    truncation: Truncation,
    with_selection: bool,
) -> Result<HazardFits> {
    let p_s1 = spec.p_s1.unwrap_or(
        data.records().iter().filter(|r| r.s).count() as f64 / data.len() as f64,
    );
    let mut fits = fit_source_hazards(data.records(), data.w_columns(), data.tau(), spec, truncation, p_s1)?;
    if with_selection {
        let records = data.records();
        fits.p_s_given_w = Some(spec.p_s_given_w.resolve(
            "p_s_given_w",
            data.w_columns(),
            None,
            records.iter().map(|r| FitRow {
                x: &r.w,
                t: None,
                y: f64::from(u8::from(r.s)),
                weight: 1.0,
            }),
            None,
        )?);
    }
    Ok(fits)
}

/// Hazard and treatment fits from source records only.
pub fn fit_source_hazards(
    records: &[crate::data::SurvivalRecord],
    w_columns: &[String],
    tau: u32,
    spec: &HazardSpec,
    truncation: Truncation,
    p_s1: f64,
) -> Result<HazardFits> {
    truncation.validate()?;
    if !(p_s1 > 0.0 && p_s1 < 1.0) {
        return Err(Error::invalid("P(S=1) must lie strictly inside (0, 1)"));
    }
    let wa = treatment_layout(w_columns);
    let src: Vec<(Vec<f64>, &crate::data::SurvivalRecord)> = records
        .iter()
        .filter(|r| r.s)
        .map(|r| {
            let mut x = r.w.clone();
            x.push(f64::from(u8::from(r.a == Some(true))));
            (x, r)
        })
        .collect();
    if src.is_empty() {
        return Err(Error::EmptyStratum { stratum: 1 });
    }
    let person_time = || {
        src.iter().flat_map(|(x, r)| {
            let tt = r.t_tilde.expect("validated");
            let event = r.delta_event.expect("validated");
            (1..=tt).map(move |t| (x.as_slice(), t, t == tt && event, t == tt && !event))
        })
    };

    let lambda = spec.lambda.resolve(
        "lambda",
        &wa,
        Some(tau),
        person_time().map(|(x, t, ev, _)| FitRow {
            x,
            t: Some(t),
            y: f64::from(u8::from(ev)),
            weight: 1.0,
        }),
        None,
    )?;

    let censor_rows: Vec<FitRow<'_>> = person_time()
        .filter(|&(_, t, ev, _)| !ev && t < tau)
        .map(|(x, t, _, c)| FitRow {
            x,
            t: Some(t),
            y: f64::from(u8::from(c)),
            weight: 1.0,
        })
        .collect();
    let alpha = if censor_rows.is_empty() && matches!(spec.alpha, NuisanceSource::Fit(_)) {
        // nothing is ever at risk of censoring before tau
        NuisanceModel::constant(0.0)
    } else {
        spec.alpha.resolve("alpha", &wa, Some(tau), censor_rows, None)?
    };

    let g_a = spec.g_a.resolve(
        "g_a",
        w_columns,
        None,
        src.iter().map(|(_, r)| FitRow {
            x: &r.w,
            t: None,
            y: f64::from(u8::from(r.a == Some(true))),
            weight: 1.0,
        }),
        None,
    )?;

    Ok(HazardFits {
        lambda,
        alpha,
        g_a,
        p_s_given_w: None,
        p_s1,
        truncation,
        tau,
    })
}

/// Density-ratio factor `P(V | S = 0) / P(V | S = 1)` for one unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DensityRatio {
    /// Selection odds `P(S=0|·)/P(S=1|·)` times `P(S=1)/P(S=0)`, equal to the
    /// covariate density ratio by Bayes' rule.
    #[default]
    OddsWithMarginal,
    /// Selection odds alone.
    Odds,
    /// Forced to one: the less aggressive estimator.
    Unit,
}

impl DensityRatio {
    pub fn uses_selection(self) -> bool {
        self != DensityRatio::Unit
    }

    /// `p_sel` is the truncated `P(S = 1 | ·)`.
    #[inline]
    pub fn value(self, p_sel: f64, p_s1: f64) -> f64 {
        match self {
            DensityRatio::Unit => 1.0,
            DensityRatio::Odds => (1.0 - p_sel) / p_sel,
            DensityRatio::OddsWithMarginal => (1.0 - p_sel) / p_sel * p_s1 / (1.0 - p_s1),
        }
    }
}

/// Truncated probability of receiving `arm` given `P(A = 1 | ·) = g1`.
#[inline]
pub fn arm_probability(g1: f64, arm: bool, truncation: &Truncation) -> f64 {
    let g1 = truncation.apply(g1);
    if arm {
        g1
    } else {
        1.0 - g1
    }
}

/// Counts of predictions that hit a truncation bound, per mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PositivityReport {
    pub g_a: usize,
    pub p_delta: usize,
    pub selection: usize,
    pub alpha: usize,
}

impl PositivityReport {
    pub fn total(&self) -> usize {
        self.g_a + self.p_delta + self.selection + self.alpha
    }
}

/// Checks a bound model prediction and tags non-finite output.
#[inline]
pub(crate) fn finite_prediction(name: &'static str, m: &BoundModel, x: &[f64], t: Option<u32>) -> Result<f64> {
    let p = m.predict(x, t);
    if p.is_finite() {
        Ok(p)
    } else {
        Err(Error::Numerical(alloc::format!("{name} prediction is not finite")).in_nuisance(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Schema;
    use alloc::vec;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn fixture() -> MissingDataset {
        let schema = Schema::missing_outcome(&["w1", "w2"], &["w1"]);
        let v_index = schema.v_index();
        let mut recs = Vec::new();
        // a deterministic discrete design with every cell populated
        for i in 0..64u32 {
            let w1 = f64::from(i % 2);
            let w2 = f64::from((i / 2) % 2);
            let a = (i / 4) % 3 != 0;
            let y = if (i / 8) % 4 == 0 { None } else { Some(f64::from((i * 7 + i / 3) % 2)) };
            recs.push(ObservedRecord::source(vec![w1, w2], &v_index, a, y));
            if i % 3 == 0 {
                recs.push(ObservedRecord::target(vec![w1]));
            }
        }
        MissingDataset::new(recs, schema).unwrap()
    }

    #[test]
    fn saturated_fits_reproduce_frequencies() {
        let ds = fixture();
        let w = names(&["w1", "w2"]);
        let v = names(&["w1"]);
        let spec = NuisanceSpec::saturated(&w, &v);
        let fits = fit_nuisances(&ds, &spec, Truncation::NONE, (0.0, 1.0), true).unwrap();
        let g = fits.g_a.bind(&w).unwrap();
        let ps = fits.p_s_given_v.as_ref().unwrap().bind(&v).unwrap();
        for (w1, w2) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            let cell: Vec<_> = ds
                .records()
                .iter()
                .filter(|r| r.s && r.w() == [w1, w2])
                .collect();
            let freq = cell.iter().filter(|r| r.a == Some(true)).count() as f64 / cell.len() as f64;
            assert!((g.predict(&[w1, w2], None) - freq).abs() < 1e-8);
        }
        for w1 in [0.0, 1.0] {
            let cell: Vec<_> = ds.records().iter().filter(|r| r.v == [w1]).collect();
            let freq = cell.iter().filter(|r| r.s).count() as f64 / cell.len() as f64;
            assert!((ps.predict(&[w1], None) - freq).abs() < 1e-8);
        }
    }

    #[test]
    fn fixed_models_pass_through() {
        let ds = fixture();
        let w = names(&["w1", "w2"]);
        let v = names(&["w1"]);
        let mut spec = NuisanceSpec::main_effects(&w, &v);
        spec.g_a = NuisanceSource::Fixed(NuisanceModel::constant(0.3));
        let fits = fit_nuisances(&ds, &spec, Truncation::default(), (0.0, 1.0), false).unwrap();
        assert_eq!(fits.g_a, NuisanceModel::constant(0.3));
        assert!(fits.p_s_given_v.is_none());
    }

    #[test]
    fn fixed_model_with_unknown_feature_is_rejected() {
        let ds = fixture();
        let w = names(&["w1", "w2"]);
        let v = names(&["w1"]);
        let mut spec = NuisanceSpec::main_effects(&w, &v);
        spec.g_a = NuisanceSource::Fixed(NuisanceModel::Glm(
            crate::model::RegressionFit::with_coefficients(
                names(&["zz"]),
                DesignSpec::main_effects(&["zz"], Link::Logit),
                None,
                vec![0.0, 1.0],
            )
            .unwrap(),
        ));
        let err = fit_nuisances(&ds, &spec, Truncation::default(), (0.0, 1.0), false).unwrap_err();
        assert!(matches!(err, Error::Nuisance { nuisance: "g_a", .. }));
    }

    #[test]
    fn density_ratio_forms() {
        assert_eq!(DensityRatio::Unit.value(0.2, 0.5), 1.0);
        assert!((DensityRatio::Odds.value(0.25, 0.5) - 3.0).abs() < 1e-15);
        assert!((DensityRatio::OddsWithMarginal.value(0.25, 0.6) - 4.5).abs() < 1e-12);
    }
}
