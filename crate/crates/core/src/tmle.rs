//! Targeted maximum likelihood estimation of the transported treatment
//! effect when the outcome is subject to missingness and the target sample
//! only reveals `V ⊂ W`.
//!
//! The estimator targets the outcome regression `Q̄` with the clever
//! covariate `C_Y`, regresses the targeted `Q̄*(a, W)` on `V` in the source
//! sample and targets that reduced regression with `C_{W|V}`, and finally
//! averages `Q̄ʳ*(a, V)` over the target sample.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{MissingDataset, ObservedRecord, Schema, Strata};
use crate::design::{expit, logit};
use crate::eic::{eic_psi_a, ArmValues, EicDecomposition, MissingLaw, MissingNuisance};
use crate::error::{Error, Result};
use crate::glm;
use crate::linalg::Matrix;
use crate::model::{bound_probability, NuisanceModel, Truncation};
use crate::nuisance::{
    arm_probability, finite_prediction, fit_nuisances, fit_reduced_regression, outcome_bounds,
    treatment_layout, with_treatment, DensityRatio, NuisanceFits, NuisanceSpec, PositivityReport,
};
use crate::stats::{mean, sample_sd, score_tolerance, sparse_mean_sd, wald_interval};

/// Fluctuation submodel for the outcome regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluctuationMode {
    /// `logit Q̄_ε = logit Q̄ + ε C`.
    #[default]
    Covariate,
    /// `logit Q̄_ε = logit Q̄ + ε sign(C)`, fit with weights `|C|`.
    Weight,
    /// `Q̄_ε = Q̄ + ε C` under squared-error loss.
    Linear,
}

/// Which parameters the outcome fluctuation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetingScheme {
    /// One fluctuation per arm with `C_{ψ_a,Y}`.
    #[default]
    SeparateArms,
    /// A single fluctuation with `C_{ψ_1,Y} − C_{ψ_0,Y}`.
    JointAte,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmleConfig {
    pub nuisance: NuisanceSpec,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub fluctuation: FluctuationMode,
    #[serde(default)]
    pub targeting: TargetingScheme,
    #[serde(default)]
    pub density_ratio: DensityRatio,
    /// Outcome range used to map continuous outcomes onto `[0, 1]`.
    #[serde(default)]
    pub y_bounds: Option<(f64, f64)>,
    #[serde(default = "default_repeats")]
    pub max_stage_repeats: usize,
}

fn default_repeats() -> usize {
    10
}

impl TmleConfig {
    pub fn new(nuisance: NuisanceSpec) -> Self {
        TmleConfig {
            nuisance,
            truncation: Truncation::default(),
            fluctuation: FluctuationMode::default(),
            targeting: TargetingScheme::default(),
            density_ratio: DensityRatio::default(),
            y_bounds: None,
            max_stage_repeats: default_repeats(),
        }
    }

    /// Main-effect designs for the schema's columns.
    pub fn main_effects(schema: &Schema) -> Self {
        Self::new(NuisanceSpec::main_effects(&schema.w_columns, &schema.v_columns))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluctuationTarget {
    Psi0,
    Psi1,
    Ate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationResult {
    pub target: FluctuationTarget,
    pub method: String,
    /// Fitted fluctuation parameter; the sum over all passes.
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Mean of the solved score before and after the final pass.
    pub eic_residual_before: f64,
    pub eic_residual_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub psi1: f64,
    pub psi0: f64,
    pub ate: f64,
    /// Sample sd of the estimated EIC of the ATE.
    pub sigma_n: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
    /// `P_n D*` of the ATE after targeting.
    pub eic_mean: f64,
    pub sigma_psi1: f64,
    pub sigma_psi0: f64,
    pub eic_mean_psi1: f64,
    pub eic_mean_psi0: f64,
    pub fluctuations: Vec<FluctuationResult>,
    /// Second-stage `ε_r` per arm `[0, 1]` (missing-outcome estimator only).
    #[serde(default)]
    pub reduced_epsilon: Option<[f64; 2]>,
    /// Targeting passes (stage repeats or hazard iterations).
    pub iterations: usize,
    /// Whether the EIC equation was solved to tolerance.
    pub converged: bool,
    pub positivity: PositivityReport,
    /// IPCTW estimates `[ψ_0, ψ_1]` (survival estimator only).
    #[serde(default)]
    pub ipctw: Option<[f64; 2]>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EstimateReport {
    /// Assembles a report from per-unit EIC totals of each arm.
    pub(crate) fn from_eic(psi: [f64; 2], eic: &[[f64; 2]]) -> Self {
        let n = eic.len();
        let d0: Vec<f64> = eic.iter().map(|e| e[0]).collect();
        let d1: Vec<f64> = eic.iter().map(|e| e[1]).collect();
        let d: Vec<f64> = eic.iter().map(|e| e[1] - e[0]).collect();
        let ate = psi[1] - psi[0];
        let sigma_n = sample_sd(&d);
        let (ci_lo, ci_hi) = wald_interval(ate, sigma_n, n);
        EstimateReport {
            psi1: psi[1],
            psi0: psi[0],
            ate,
            sigma_n,
            ci_lo,
            ci_hi,
            n,
            eic_mean: mean(&d),
            sigma_psi1: sample_sd(&d1),
            sigma_psi0: sample_sd(&d0),
            eic_mean_psi1: mean(&d1),
            eic_mean_psi0: mean(&d0),
            fluctuations: Vec::new(),
            reduced_epsilon: None,
            iterations: 0,
            converged: true,
            positivity: PositivityReport::default(),
            ipctw: None,
            warnings: Vec::new(),
        }
    }

    /// Whether the EIC equation of the targeted parameter(s) holds to
    /// `max(1e-8, σ / (√n ln n))`.
    pub fn score_solved(&self, scheme: TargetingScheme) -> bool {
        let ate_ok = self.eic_mean.abs() <= score_tolerance(self.sigma_n, self.n);
        match scheme {
            TargetingScheme::JointAte => ate_ok,
            TargetingScheme::SeparateArms => {
                ate_ok
                    && self.eic_mean_psi1.abs() <= score_tolerance(self.sigma_psi1, self.n)
                    && self.eic_mean_psi0.abs() <= score_tolerance(self.sigma_psi0, self.n)
            }
        }
    }
}

/// One pass of the outcome fluctuation; `epsilon[a]` applies to arm `a`
/// (both entries equal under joint targeting).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeUpdate {
    pub epsilon: [f64; 2],
}

/// Applies one outcome fluctuation to a unit-scale prediction for `arm`.
/// `h` is the arm's clever covariate `C_{ψ_a,Y}` evaluated at `(a, W)`.
#[inline]
pub fn fluctuate_outcome(
    q: f64,
    h: f64,
    arm: bool,
    eps: f64,
    mode: FluctuationMode,
    scheme: TargetingScheme,
) -> f64 {
    let c = match scheme {
        TargetingScheme::SeparateArms => h,
        TargetingScheme::JointAte if arm => h,
        TargetingScheme::JointAte => -h,
    };
    match mode {
        FluctuationMode::Covariate => bound_probability(expit(logit(q) + eps * c)),
        FluctuationMode::Weight => {
            let sign = if c < 0.0 { -1.0 } else { 1.0 };
            bound_probability(expit(logit(q) + eps * sign))
        }
        FluctuationMode::Linear => q + eps * c,
    }
}

/// Unit-level quantities shared by the stages.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    /// `h[a][i] = ratio / (P(S=1) g(a|W) p_Δ(W,a))`; NaN where `W` is unknown.
    pub h: [Vec<f64>; 2],
    /// Outcome regression on the unit scale.
    pub q: [Vec<f64>; 2],
    pub g: [Vec<f64>; 2],
    pub p_delta: [Vec<f64>; 2],
    pub ratio: Vec<f64>,
    pub positivity: PositivityReport,
}

/// Evaluates the initial nuisances on every unit.
pub(crate) fn prepare(
    records: &[ObservedRecord],
    schema: &Schema,
    fits: &NuisanceFits,
    ratio_mode: DensityRatio,
) -> Result<Prepared> {
    let w_cols = &schema.w_columns;
    let wa = treatment_layout(w_cols);
    let g_a = fits.g_a.bind(w_cols)?;
    let p_delta = fits.p_delta.bind(&wa)?;
    let q_bar = [fits.q_bar[0].bind(&wa)?, fits.q_bar[1].bind(&wa)?];
    let selection = match (&fits.p_s_given_v, ratio_mode.uses_selection()) {
        (Some(m), true) => Some(m.bind(&schema.v_columns)?),
        (None, true) => return Err(Error::invalid("density ratio requires P(S=1|V)")),
        (_, false) => None,
    };
    let tr = fits.truncation;
    let (lo, hi) = fits.y_bounds;
    let v_equals_w = schema.v_equals_w();
    let v_index = schema.v_index();
    let n = records.len();
    let nan = || vec![f64::NAN; n];
    let mut out = Prepared {
        h: [nan(), nan()],
        q: [nan(), nan()],
        g: [nan(), nan()],
        p_delta: [nan(), nan()],
        ratio: vec![1.0; n],
        positivity: PositivityReport::default(),
    };
    let mut buf = Vec::new();
    let mut w_target = vec![0.0; w_cols.len()];
    for (i, r) in records.iter().enumerate() {
        if let Some(m) = &selection {
            let p = finite_prediction("p_s_given_v", m, &r.v, None)?;
            if tr.at_bound(p) {
                out.positivity.selection += 1;
            }
            out.ratio[i] = ratio_mode.value(tr.apply(p), fits.p_s1);
        }
        let w: &[f64] = match &r.w {
            Some(w) => w,
            None if v_equals_w => {
                for (j, &k) in v_index.iter().enumerate() {
                    w_target[k] = r.v[j];
                }
                &w_target
            }
            None => continue,
        };
        let g1 = finite_prediction("g_a", &g_a, w, None)?;
        if r.s && tr.at_bound(g1) {
            out.positivity.g_a += 1;
        }
        for arm in [false, true] {
            let k = usize::from(arm);
            let x = with_treatment(&mut buf, w, arm);
            let pd_raw = finite_prediction("p_delta", &p_delta, x, None)?;
            if r.s && r.treated(arm) && tr.at_bound(pd_raw) {
                out.positivity.p_delta += 1;
            }
            let g = arm_probability(g1, arm, &tr);
            let pd = tr.apply(pd_raw);
            let q = finite_prediction("q_bar", &q_bar[k], x, None)?;
            out.g[k][i] = g;
            out.p_delta[k][i] = pd;
            out.h[k][i] = out.ratio[i] / (fits.p_s1 * g * pd);
            out.q[k][i] = bound_probability((q - lo) / (hi - lo));
        }
    }
    Ok(out)
}

/// Unit-scale response of an observed source unit.
fn scaled_outcome(r: &ObservedRecord, bounds: (f64, f64)) -> f64 {
    (r.y.expect("observed outcome") - bounds.0) / (bounds.1 - bounds.0)
}

/// Mean over all units of `C (Y − Q)` on the unit scale, for the outcome
/// score of `target`.
fn outcome_score(
    records: &[ObservedRecord],
    prep: &Prepared,
    q: &[Vec<f64>; 2],
    bounds: (f64, f64),
    target: FluctuationTarget,
) -> f64 {
    let mut s = 0.0;
    for (i, r) in records.iter().enumerate() {
        if !(r.s && r.observed()) {
            continue;
        }
        let a = r.a == Some(true);
        let k = usize::from(a);
        let c = match target {
            FluctuationTarget::Psi1 if a => prep.h[1][i],
            FluctuationTarget::Psi0 if !a => prep.h[0][i],
            FluctuationTarget::Ate if a => prep.h[1][i],
            FluctuationTarget::Ate => -prep.h[0][i],
            _ => continue,
        };
        s += c * (scaled_outcome(r, bounds) - q[k][i]);
    }
    s * (bounds.1 - bounds.0) / records.len() as f64
}

/// Fits one fluctuation parameter by maximum likelihood (or least squares)
/// over the rows that inform it.
fn solve_epsilon(
    records: &[ObservedRecord],
    prep: &Prepared,
    q: &[Vec<f64>; 2],
    bounds: (f64, f64),
    target: FluctuationTarget,
    mode: FluctuationMode,
) -> Result<(f64, bool)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut offs = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if !(r.s && r.observed()) {
            continue;
        }
        let a = r.a == Some(true);
        let k = usize::from(a);
        let c = match target {
            FluctuationTarget::Psi1 if a => prep.h[1][i],
            FluctuationTarget::Psi0 if !a => prep.h[0][i],
            FluctuationTarget::Ate if a => prep.h[1][i],
            FluctuationTarget::Ate => -prep.h[0][i],
            _ => continue,
        };
        let y = scaled_outcome(r, bounds);
        match mode {
            FluctuationMode::Covariate => {
                xs.push(c);
                ws.push(1.0);
                offs.push(logit(q[k][i]));
            }
            FluctuationMode::Weight => {
                xs.push(if c < 0.0 { -1.0 } else { 1.0 });
                ws.push(c.abs());
                offs.push(logit(q[k][i]));
            }
            FluctuationMode::Linear => {
                xs.push(c);
                offs.push(q[k][i]);
            }
        }
        ys.push(y);
    }
    if xs.is_empty() || xs.iter().all(|&c| c == 0.0) {
        return Ok((0.0, true));
    }
    match mode {
        FluctuationMode::Linear => {
            let num: f64 = xs.iter().zip(&ys).zip(&offs).map(|((c, y), q)| c * (y - q)).sum();
            let den: f64 = xs.iter().map(|c| c * c).sum();
            Ok((num / den, true))
        }
        _ => {
            let x = Matrix::from_vec(xs.len(), 1, xs);
            let weights = if mode == FluctuationMode::Weight { Some(ws.as_slice()) } else { None };
            let sol = glm::fit_logistic(&x, &ys, weights, Some(&offs))
                .map_err(|e| Error::Numerical(alloc::format!("outcome fluctuation: {e}")))?;
            Ok((sol.coefficients[0], sol.converged))
        }
    }
}

/// Targets the unit-scale outcome regression `q` in place and returns the
/// pass's update.
pub(crate) fn target_outcome_regression(
    records: &[ObservedRecord],
    prep: &Prepared,
    q: &mut [Vec<f64>; 2],
    bounds: (f64, f64),
    mode: FluctuationMode,
    scheme: TargetingScheme,
    results: &mut Vec<FluctuationResult>,
) -> Result<OutcomeUpdate> {
    let targets: &[FluctuationTarget] = match scheme {
        TargetingScheme::SeparateArms => &[FluctuationTarget::Psi0, FluctuationTarget::Psi1],
        TargetingScheme::JointAte => &[FluctuationTarget::Ate],
    };
    let mut update = OutcomeUpdate { epsilon: [0.0; 2] };
    for &target in targets {
        let before = outcome_score(records, prep, q, bounds, target);
        let (eps, converged) = solve_epsilon(records, prep, q, bounds, target, mode)?;
        let arms: &[bool] = match target {
            FluctuationTarget::Psi0 => &[false],
            FluctuationTarget::Psi1 => &[true],
            FluctuationTarget::Ate => &[false, true],
        };
        for &arm in arms {
            let k = usize::from(arm);
            update.epsilon[k] = eps;
            for i in 0..records.len() {
                let h = prep.h[k][i];
                if h.is_finite() {
                    q[k][i] = fluctuate_outcome(q[k][i], h, arm, eps, mode, scheme);
                }
            }
        }
        let after = outcome_score(records, prep, q, bounds, target);
        match results.iter_mut().find(|r| r.target == target) {
            Some(r) => {
                r.epsilon += eps;
                r.iterations += 1;
                r.converged &= converged;
                r.eic_residual_before = before;
                r.eic_residual_after = after;
            }
            None => results.push(FluctuationResult {
                target,
                method: alloc::format!("{mode:?}").to_lowercase(),
                epsilon: eps,
                iterations: 1,
                converged,
                eic_residual_before: before,
                eic_residual_after: after,
            }),
        }
    }
    Ok(update)
}

/// Output of the reduced-regression stage for one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedFit {
    /// Least-squares fit over `V`; `None` when `V = W`.
    pub model: Option<NuisanceModel>,
    pub epsilon: f64,
    /// `Q̄ʳ*(a, V)` for every unit.
    pub values: Vec<f64>,
}

/// Regresses the targeted `Q̄*(a, W)` (original scale, one value per unit,
/// NaN for target units) on `V` over the source units and targets the fit
/// with `C_{W|V}`. `c_wv[i] = ratio(V_i) / P(S=1)`.
pub fn target_reduced_regression(
    records: &[ObservedRecord],
    schema: &Schema,
    q_star: &[f64],
    c_wv: &[f64],
    design: &crate::design::DesignSpec,
) -> Result<ReducedFit> {
    if schema.v_equals_w() {
        return Ok(ReducedFit {
            model: None,
            epsilon: 0.0,
            values: q_star.to_vec(),
        });
    }
    let src: Vec<f64> = records
        .iter()
        .zip(q_star)
        .filter(|(r, _)| r.s)
        .map(|(_, &q)| q)
        .collect();
    let model = fit_reduced_regression(records, &src, &schema.v_columns, design)?;
    let bound = model.bind(&schema.v_columns)?;
    let mut values: Vec<f64> = records.iter().map(|r| bound.predict(&r.v, None)).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, r) in records.iter().enumerate() {
        if r.s {
            num += c_wv[i] * (q_star[i] - values[i]);
            den += c_wv[i] * c_wv[i];
        }
    }
    let epsilon = if den > 0.0 { num / den } else { 0.0 };
    for (v, c) in values.iter_mut().zip(c_wv) {
        *v += epsilon * c;
    }
    Ok(ReducedFit {
        model: Some(model),
        epsilon,
        values,
    })
}

/// Stopping rule of the stage loop. Only the source-stratum components
/// enter, so that a source site can evaluate it without target data: the
/// target component has mean zero by construction of the plug-in.
fn source_score_solved(
    records: &[ObservedRecord],
    eic: &[[EicDecomposition; 2]],
    scheme: TargetingScheme,
    n: usize,
) -> bool {
    let part = |f: &dyn Fn(&[EicDecomposition; 2]) -> f64| {
        let (m, sd) = sparse_mean_sd(
            records.iter().zip(eic).filter(|(r, _)| r.s).map(|(_, e)| f(e)),
            n,
        );
        m.abs() <= score_tolerance(sd, n)
    };
    let ate = part(&|e| e[1].source_part() - e[0].source_part());
    match scheme {
        TargetingScheme::JointAte => ate,
        TargetingScheme::SeparateArms => {
            ate && part(&|e| e[0].source_part()) && part(&|e| e[1].source_part())
        }
    }
}

/// Everything produced by a missing-outcome TMLE fit.
#[derive(Debug, Clone)]
pub struct MissingFit {
    pub report: EstimateReport,
    pub fits: NuisanceFits,
    pub reduced: [ReducedFit; 2],
    /// Outcome fluctuation passes in application order.
    pub updates: Vec<OutcomeUpdate>,
    /// Per-unit EIC of `[Ψ_0, Ψ_1]`.
    pub eic: Vec<[EicDecomposition; 2]>,
    pub config: TmleConfig,
}

impl MissingFit {
    /// Per-unit EIC of the ATE.
    pub fn eic_ate(&self) -> Vec<EicDecomposition> {
        self.eic.iter().map(|e| e[1].minus(&e[0])).collect()
    }
}

/// Runs the full estimator.
pub fn estimate(data: &MissingDataset, config: &TmleConfig) -> Result<EstimateReport> {
    Ok(fit(data, config)?.report)
}

fn require_both(data: &MissingDataset) -> Result<()> {
    if data.strata() != Strata::Both {
        return Err(Error::invalid("estimation needs source and target units"));
    }
    Ok(())
}

/// Runs the full estimator and keeps the intermediate fits.
pub fn fit(data: &MissingDataset, config: &TmleConfig) -> Result<MissingFit> {
    require_both(data)?;
    let bounds = outcome_bounds(data, config.y_bounds)?;
    let fits = fit_nuisances(
        data,
        &config.nuisance,
        config.truncation,
        bounds,
        config.density_ratio.uses_selection(),
    )?;
    fit_with_nuisances(data, config, fits)
}

/// Targeting and inference given fitted nuisances.
pub fn fit_with_nuisances(
    data: &MissingDataset,
    config: &TmleConfig,
    fits: NuisanceFits,
) -> Result<MissingFit> {
    require_both(data)?;
    fit_targeted(data, config, fits, data.len())
}

/// Targeting given fitted nuisances, where `n_total` counts units of both
/// populations whether or not they are present in `data`. With source-only
/// data the point estimates are NaN but the targeted fits and the source
/// EIC contributions are exactly those of the pooled analysis.
pub(crate) fn fit_targeted(
    data: &MissingDataset,
    config: &TmleConfig,
    fits: NuisanceFits,
    n_total: usize,
) -> Result<MissingFit> {
    let records = data.records();
    let schema = data.schema();
    let bounds = fits.y_bounds;
    let span = bounds.1 - bounds.0;
    let prep = prepare(records, schema, &fits, config.density_ratio)?;
    let c_wv: Vec<f64> = prep.ratio.iter().map(|r| r / fits.p_s1).collect();
    let n_target = records.iter().filter(|r| !r.s).count();
    let v_equals_w = schema.v_equals_w();

    let mut q = prep.q.clone();
    let mut results = Vec::new();
    let mut updates = Vec::new();
    let mut passes = 0;
    loop {
        passes += 1;
        updates.push(target_outcome_regression(
            records,
            &prep,
            &mut q,
            bounds,
            config.fluctuation,
            config.targeting,
            &mut results,
        )?);
        let mut reduced = Vec::with_capacity(2);
        for k in 0..2 {
            let q_star: Vec<f64> = records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    if r.s || v_equals_w {
                        bounds.0 + span * q[k][i]
                    } else {
                        f64::NAN
                    }
                })
                .collect();
            reduced.push(target_reduced_regression(
                records,
                schema,
                &q_star,
                &c_wv,
                &config.nuisance.reduced,
            )?);
        }
        let reduced: [ReducedFit; 2] = [reduced.remove(0), reduced.remove(0)];

        let mut psi = [0.0; 2];
        for k in 0..2 {
            let s: f64 = records
                .iter()
                .zip(&reduced[k].values)
                .filter(|(r, _)| !r.s)
                .map(|(_, v)| v)
                .sum();
            psi[k] = s / n_target as f64;
        }

        let eic: Vec<[EicDecomposition; 2]> = records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                [false, true].map(|arm| {
                    let k = usize::from(arm);
                    let u = ArmValues {
                        g: prep.g[k][i],
                        p_delta: prep.p_delta[k][i],
                        ratio: prep.ratio[i],
                        q: bounds.0 + span * q[k][i],
                        q_r: reduced[k].values[i],
                    };
                    eic_psi_a(r, &u, fits.p_s1, arm, psi[k], v_equals_w)
                })
            })
            .collect();
        let totals: Vec<[f64; 2]> = eic.iter().map(|e| [e[0].total, e[1].total]).collect();
        let mut report = EstimateReport::from_eic(psi, &totals);
        let solved = source_score_solved(records, &eic, config.targeting, n_total);
        if solved || passes > config.max_stage_repeats {
            report.fluctuations = results;
            report.reduced_epsilon = Some([reduced[0].epsilon, reduced[1].epsilon]);
            report.iterations = passes;
            report.converged = solved;
            report.positivity = prep.positivity;
            if !solved {
                report
                    .warnings
                    .push("EIC equation not solved to tolerance".into());
            }
            if prep.positivity.total() > 0 {
                report.warnings.push(alloc::format!(
                    "{} nuisance predictions were truncated",
                    prep.positivity.total()
                ));
            }
            return Ok(MissingFit {
                report,
                fits,
                reduced,
                updates,
                eic,
                config: config.clone(),
            });
        }
    }
}

/// Monte-Carlo estimate of the exact remainder
/// `R(P, P0) = Ψ(P) − Ψ(P0) + P0 D*_P` of the ATE, with its MC standard
/// error. `draws` are samples from `P0`, `psi_p` is `[Ψ_0(P), Ψ_1(P)]`
/// and `psi_0` the truth.
pub fn exact_remainder_mc(
    law: &impl MissingNuisance,
    draws: &[ObservedRecord],
    psi_p: [f64; 2],
    psi_0: [f64; 2],
) -> Result<(f64, f64)> {
    let p_s1 = law.p_s1();
    let v_equals_w = law.v_equals_w();
    let mut d = Vec::with_capacity(draws.len());
    for r in draws {
        let u0 = law.arm_values(r, false)?;
        let u1 = law.arm_values(r, true)?;
        let e1 = eic_psi_a(r, &u1, p_s1, true, psi_p[1], v_equals_w);
        let e0 = eic_psi_a(r, &u0, p_s1, false, psi_p[0], v_equals_w);
        d.push(e1.total - e0.total);
    }
    let mc_se = sample_sd(&d) / libm::sqrt(d.len() as f64);
    let remainder = (psi_p[1] - psi_p[0]) - (psi_0[1] - psi_0[0]) + mean(&d);
    Ok((remainder, mc_se))
}

/// The law implied by a fit, with the untargeted outcome and reduced
/// regressions.
pub fn fitted_law(data: &MissingDataset, fit: &MissingFit) -> MissingLaw {
    let reduced = match (&fit.reduced[0].model, &fit.reduced[1].model) {
        (Some(m0), Some(m1)) => Some([m0.clone(), m1.clone()]),
        _ => None,
    };
    MissingLaw::from_fits(data.schema().clone(), &fit.fits, reduced, fit.config.density_ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Schema;

    fn dataset() -> MissingDataset {
        let schema = Schema::missing_outcome(&["w1", "w2"], &["w1"]);
        let v_index = schema.v_index();
        let mut recs = Vec::new();
        for i in 0..200u32 {
            let w1 = f64::from(i % 2);
            let w2 = f64::from((i / 2) % 2);
            let a = (i * 7 / 3) % 2 == 0;
            let y = if i % 5 == 0 {
                None
            } else {
                Some(f64::from(((i * 13) / 7 + u32::from(a)) % 2))
            };
            recs.push(ObservedRecord::source(vec![w1, w2], &v_index, a, y));
            if i % 2 == 0 {
                recs.push(ObservedRecord::target(vec![f64::from((i / 4) % 2)]));
            }
        }
        MissingDataset::new(recs, schema).unwrap()
    }

    #[test]
    fn every_mode_solves_its_eic_equation() {
        let ds = dataset();
        for mode in [FluctuationMode::Covariate, FluctuationMode::Weight, FluctuationMode::Linear] {
            for scheme in [TargetingScheme::SeparateArms, TargetingScheme::JointAte] {
                let mut cfg = TmleConfig::main_effects(ds.schema());
                cfg.fluctuation = mode;
                cfg.targeting = scheme;
                let r = estimate(&ds, &cfg).unwrap();
                assert!(r.converged, "{mode:?} {scheme:?}: {r:?}");
                assert!(r.score_solved(scheme));
            }
        }
    }

    #[test]
    fn ci_matches_sigma() {
        let ds = dataset();
        let r = estimate(&ds, &TmleConfig::main_effects(ds.schema())).unwrap();
        let half = 1.96 * r.sigma_n / libm::sqrt(r.n as f64);
        assert!((r.ci_hi - r.ate - half).abs() < 1e-12);
        assert!((r.ate - r.ci_lo - half).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&r.psi1) && (0.0..=1.0).contains(&r.psi0));
    }

    #[test]
    fn constant_covariate_reduces_to_mean_residual() {
        let ds = dataset();
        let recs = ds.records();
        let q: Vec<f64> = recs
            .iter()
            .enumerate()
            .map(|(i, r)| if r.s { (i % 3) as f64 / 3.0 } else { f64::NAN })
            .collect();
        let c = vec![2.0; recs.len()];
        let design = crate::design::DesignSpec::intercept_only(crate::design::Link::Identity);
        let fit = target_reduced_regression(recs, ds.schema(), &q, &c, &design).unwrap();
        // an intercept-only fit leaves residuals with mean zero
        assert!(fit.epsilon.abs() < 1e-12);
    }
}
