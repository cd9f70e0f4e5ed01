//! Transport of a treatment-specific survival probability
//! `Ψ_a = E_{W|S=0} S(t0 | W, A = a, S = 1)` under right censoring on a
//! discrete time grid, by targeting the conditional event hazard.
//!
//! Within a period the event is evaluated first and censoring only among
//! units that did not fail, so `Ḡ(t−) = ∏_{s<t} (1 − α(s))` is the
//! probability of still being under observation when period `t` starts.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Strata, SurvivalDataset, SurvivalRecord};
use crate::design::{expit, logit};
use crate::error::{Error, Result};
use crate::glm;
use crate::linalg::Matrix;
use crate::model::{bound_probability, BoundModel, Truncation};
use crate::nuisance::{
    arm_probability, finite_prediction, fit_hazards, treatment_layout, with_treatment, DensityRatio,
    HazardFits, HazardSpec, PositivityReport,
};
use crate::stats::{score_tolerance, sparse_mean_sd};
use crate::tmle::{EstimateReport, FluctuationResult, FluctuationTarget};

/// Which clever covariates the hazard fluctuation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HazardTargeting {
    /// A separate `ε_a` per arm, each fitted on that arm's rows.
    #[default]
    PerArm,
    /// Both clever covariates in one two-parameter fluctuation.
    Simultaneous,
    /// The single covariate `H_1 − H_0`, targeting the difference.
    Difference,
}

/// Where the factor `R(W) / P(S=1)` enters the fluctuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HazardFluctuation {
    /// As a weight in the log-likelihood, with covariate `H_a`.
    #[default]
    RatioWeight,
    /// Multiplied into the covariate, unweighted likelihood.
    RatioCovariate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalConfig {
    pub nuisance: HazardSpec,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub density_ratio: DensityRatio,
    #[serde(default)]
    pub targeting: HazardTargeting,
    #[serde(default)]
    pub fluctuation: HazardFluctuation,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
}

fn default_iterations() -> usize {
    25
}

impl SurvivalConfig {
    pub fn new(nuisance: HazardSpec) -> Self {
        SurvivalConfig {
            nuisance,
            truncation: Truncation::default(),
            density_ratio: DensityRatio::default(),
            targeting: HazardTargeting::default(),
            fluctuation: HazardFluctuation::default(),
            max_iterations: default_iterations(),
        }
    }

    pub fn main_effects(w_columns: &[String]) -> Self {
        Self::new(HazardSpec::main_effects(w_columns))
    }
}

/// Survival and censoring curves of one unit under one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurves {
    /// `S(t)` for `t = 0..=tau`.
    surv: Vec<f64>,
    /// `Ḡ(t−)` for `t = 0..=tau`; entry 0 is unused.
    gbar: Vec<f64>,
}

impl SurvivalCurves {
    /// Curves from event hazards `lambda[t-1]` and censoring hazards
    /// `alpha[t-1]`, `t = 1..=tau`.
    pub fn new(lambda: &[f64], alpha: &[f64]) -> Self {
        let tau = lambda.len();
        let mut surv = Vec::with_capacity(tau + 1);
        let mut gbar = Vec::with_capacity(tau + 1);
        surv.push(1.0);
        gbar.push(1.0);
        gbar.push(1.0);
        for t in 1..=tau {
            surv.push(surv[t - 1] * (1.0 - lambda[t - 1]));
            if t < tau {
                gbar.push(gbar[t] * (1.0 - alpha[t - 1]));
            }
        }
        SurvivalCurves { surv, gbar }
    }

    /// `S(t) = ∏_{s≤t} (1 − λ(s))`.
    pub fn survival(&self, t: u32) -> f64 {
        self.surv[t as usize]
    }

    /// `Ḡ(t−) = ∏_{s<t} (1 − α(s))`.
    pub fn censoring_survival_before(&self, t: u32) -> f64 {
        self.gbar[t as usize]
    }
}

/// `H_a(t, W)` for a unit with `A = a`:
/// `−1 / (g(a|W) Ḡ(t−)) · S(t0) / S(t) · I(t ≤ t0)`.
#[inline]
pub fn clever_covariate_h(t: u32, t0: u32, g: f64, curves: &SurvivalCurves) -> f64 {
    if t > t0 {
        return 0.0;
    }
    -curves.survival(t0) / (g * curves.censoring_survival_before(t) * curves.survival(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SurvivalEic {
    pub d_w: f64,
    pub d_lambda: f64,
    pub total: f64,
}

impl SurvivalEic {
    pub fn new(d_w: f64, d_lambda: f64) -> Self {
        SurvivalEic {
            d_w,
            d_lambda,
            total: d_w + d_lambda,
        }
    }
}

/// Nuisance values of one unit; `lambda[a]` is the current (possibly
/// targeted) event hazard under arm `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitHazards {
    pub g: [f64; 2],
    pub ratio: f64,
    pub alpha: [Vec<f64>; 2],
    pub lambda: [Vec<f64>; 2],
}

impl UnitHazards {
    pub fn curves(&self, arm: bool) -> SurvivalCurves {
        let k = usize::from(arm);
        SurvivalCurves::new(&self.lambda[k], &self.alpha[k])
    }
}

/// EIC of `Ψ_a` for one unit.
pub fn survival_eic(
    rec: &SurvivalRecord,
    arm: bool,
    u: &UnitHazards,
    curves: &SurvivalCurves,
    p_s1: f64,
    t0: u32,
    psi_a: f64,
) -> SurvivalEic {
    if !rec.s {
        return SurvivalEic::new((curves.survival(t0) - psi_a) / (1.0 - p_s1), 0.0);
    }
    if !rec.treated(arm) {
        return SurvivalEic::new(0.0, 0.0);
    }
    let k = usize::from(arm);
    let tt = rec.t_tilde.expect("validated");
    let event = rec.delta_event.expect("validated");
    let mut sum = 0.0;
    for t in 1..=tt.min(t0) {
        let d_n = if t == tt && event { 1.0 } else { 0.0 };
        sum += clever_covariate_h(t, t0, u.g[k], curves) * (d_n - u.lambda[k][t as usize - 1]);
    }
    SurvivalEic::new(0.0, u.ratio / p_s1 * sum)
}

/// [`HazardFits`] bound to the `W` layout.
#[derive(Debug, Clone)]
pub struct BoundHazards {
    lambda: BoundModel,
    alpha: BoundModel,
    g_a: BoundModel,
    selection: Option<BoundModel>,
    p_s1: f64,
    truncation: Truncation,
    ratio: DensityRatio,
    tau: u32,
}

impl BoundHazards {
    pub fn new(fits: &HazardFits, w_columns: &[String], ratio: DensityRatio) -> Result<Self> {
        let wa = treatment_layout(w_columns);
        let selection = match (&fits.p_s_given_w, ratio.uses_selection()) {
            (Some(m), true) => Some(m.bind(w_columns)?),
            (None, true) => return Err(Error::invalid("density ratio requires P(S=1|W)")),
            (_, false) => None,
        };
        Ok(BoundHazards {
            lambda: fits.lambda.bind(&wa)?,
            alpha: fits.alpha.bind(&wa)?,
            g_a: fits.g_a.bind(w_columns)?,
            selection,
            p_s1: fits.p_s1,
            truncation: fits.truncation,
            ratio,
            tau: fits.tau,
        })
    }

    /// Initial nuisance values at covariates `w`. `source` selects whether
    /// truncation hits count toward the treatment and censoring mechanisms.
    pub fn unit(&self, w: &[f64], source: bool, pos: &mut PositivityReport) -> Result<UnitHazards> {
        let tr = &self.truncation;
        let ratio = match &self.selection {
            Some(m) => {
                let p = finite_prediction("p_s_given_w", m, w, None)?;
                if tr.at_bound(p) {
                    pos.selection += 1;
                }
                self.ratio.value(tr.apply(p), self.p_s1)
            }
            None => 1.0,
        };
        let g1 = finite_prediction("g_a", &self.g_a, w, None)?;
        if source && tr.at_bound(g1) {
            pos.g_a += 1;
        }
        let mut buf = Vec::with_capacity(w.len() + 1);
        let tau = self.tau as usize;
        let mut u = UnitHazards {
            g: [arm_probability(g1, false, tr), arm_probability(g1, true, tr)],
            ratio,
            alpha: [vec![0.0; tau], vec![0.0; tau]],
            lambda: [vec![0.0; tau], vec![0.0; tau]],
        };
        for arm in [false, true] {
            let k = usize::from(arm);
            let x = with_treatment(&mut buf, w, arm);
            for t in 1..=self.tau {
                let l = finite_prediction("lambda", &self.lambda, x, Some(t))?;
                u.lambda[k][t as usize - 1] = bound_probability(l);
                let a = finite_prediction("alpha", &self.alpha, x, Some(t))?;
                // only the upper bound matters for positivity of Ḡ
                if source && t < self.tau && a >= tr.upper {
                    pos.alpha += 1;
                }
                u.alpha[k][t as usize - 1] = a.clamp(0.0, tr.upper);
            }
        }
        Ok(u)
    }

    pub fn p_s1(&self) -> f64 {
        self.p_s1
    }
}

/// One hazard fluctuation pass: `logit λ(·|W,a) += ε_a · cov_a(·, W)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardUpdate {
    pub epsilon: [f64; 2],
}

/// Multiplier of `H_a` in the fluctuation covariate of a unit.
#[inline]
fn covariate_factor(u: &UnitHazards, p_s1: f64, fluct: HazardFluctuation) -> f64 {
    match fluct {
        HazardFluctuation::RatioWeight => 1.0,
        HazardFluctuation::RatioCovariate => u.ratio / p_s1,
    }
}

/// Applies one update to a unit, recomputing its curves from the current
/// hazards first.
pub fn apply_hazard_update(
    u: &mut UnitHazards,
    update: &HazardUpdate,
    t0: u32,
    p_s1: f64,
    fluct: HazardFluctuation,
) {
    let f = covariate_factor(u, p_s1, fluct);
    for arm in [false, true] {
        let k = usize::from(arm);
        let eps = update.epsilon[k];
        if eps == 0.0 {
            continue;
        }
        let curves = u.curves(arm);
        for t in 1..=t0 {
            let h = clever_covariate_h(t, t0, u.g[k], &curves) * f;
            let l = &mut u.lambda[k][t as usize - 1];
            *l = bound_probability(expit(logit(*l) + eps * h));
        }
    }
}

/// Source-stratum score `P_n D_λ` and its sd over `n` units, per arm and
/// for the difference.
fn hazard_scores(
    records: &[SurvivalRecord],
    units: &[UnitHazards],
    t0: u32,
    p_s1: f64,
    n: usize,
) -> [(f64, f64); 3] {
    let mut parts: Vec<[f64; 2]> = Vec::new();
    for (r, u) in records.iter().zip(units) {
        if !r.s {
            continue;
        }
        let e = [false, true].map(|arm| {
            let c = u.curves(arm);
            survival_eic(r, arm, u, &c, p_s1, t0, 0.0).d_lambda
        });
        parts.push(e);
    }
    [
        sparse_mean_sd(parts.iter().map(|e| e[0]), n),
        sparse_mean_sd(parts.iter().map(|e| e[1]), n),
        sparse_mean_sd(parts.iter().map(|e| e[1] - e[0]), n),
    ]
}

fn scores_solved(scores: &[(f64, f64); 3], n: usize, targeting: HazardTargeting) -> bool {
    let ok = |(m, sd): (f64, f64)| m.abs() <= score_tolerance(sd, n);
    match targeting {
        HazardTargeting::Difference => ok(scores[2]),
        _ => ok(scores[0]) && ok(scores[1]) && ok(scores[2]),
    }
}

/// Fits the fluctuation parameter(s) of one pass.
fn solve_hazard_epsilon(
    records: &[SurvivalRecord],
    units: &[UnitHazards],
    t0: u32,
    p_s1: f64,
    config: &SurvivalConfig,
    arm_filter: Option<bool>,
) -> Result<(HazardUpdate, bool)> {
    let cols = if config.targeting == HazardTargeting::Simultaneous { 2 } else { 1 };
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    let mut off = Vec::new();
    for (r, u) in records.iter().zip(units) {
        if !r.s {
            continue;
        }
        let a = r.a == Some(true);
        if arm_filter.is_some_and(|f| f != a) {
            continue;
        }
        let k = usize::from(a);
        let tt = r.t_tilde.expect("validated");
        let event = r.delta_event.expect("validated");
        let curves = u.curves(a);
        let f = covariate_factor(u, p_s1, config.fluctuation);
        let weight = match config.fluctuation {
            HazardFluctuation::RatioWeight => u.ratio / p_s1,
            HazardFluctuation::RatioCovariate => 1.0,
        };
        for t in 1..=tt.min(t0) {
            let h = clever_covariate_h(t, t0, u.g[k], &curves) * f;
            match config.targeting {
                HazardTargeting::Simultaneous => {
                    x.push(if a { 0.0 } else { h });
                    x.push(if a { h } else { 0.0 });
                }
                HazardTargeting::Difference => x.push(if a { h } else { -h }),
                HazardTargeting::PerArm => x.push(h),
            }
            y.push(if t == tt && event { 1.0 } else { 0.0 });
            w.push(weight);
            off.push(logit(u.lambda[k][t as usize - 1]));
        }
    }
    if y.is_empty() {
        return Ok((HazardUpdate { epsilon: [0.0; 2] }, true));
    }
    let m = Matrix::from_vec(y.len(), cols, x);
    let weights = if w.iter().all(|&v| v == 1.0) { None } else { Some(w.as_slice()) };
    let sol = glm::fit_logistic(&m, &y, weights, Some(&off))
        .map_err(|e| Error::Numerical(alloc::format!("hazard fluctuation: {e}")))?;
    let c = &sol.coefficients;
    let epsilon = match (config.targeting, arm_filter) {
        (HazardTargeting::Simultaneous, _) => [c[0], c[1]],
        (HazardTargeting::Difference, _) => [-c[0], c[0]],
        (HazardTargeting::PerArm, Some(true)) => [0.0, c[0]],
        (HazardTargeting::PerArm, _) => [c[0], 0.0],
    };
    Ok((HazardUpdate { epsilon }, sol.converged))
}

/// Result of the iterative hazard targeting.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardTargetingResult {
    pub updates: Vec<HazardUpdate>,
    pub fluctuations: Vec<FluctuationResult>,
    pub iterations: usize,
    pub converged: bool,
    /// `|P_n D_λ|` of the difference after each pass, starting with the
    /// initial fit.
    pub residual_path: Vec<f64>,
}

/// Iteratively targets the hazards of `units` in place. At least one pass
/// is made; iteration stops once the source-stratum EIC equation holds to
/// `max(1e-8, σ / (√n ln n))`, `n` counting the units of both populations.
pub fn target_hazard(
    records: &[SurvivalRecord],
    units: &mut [UnitHazards],
    t0: u32,
    p_s1: f64,
    config: &SurvivalConfig,
    n: usize,
) -> Result<HazardTargetingResult> {
    let mut scores = hazard_scores(records, units, t0, p_s1, n);
    let mut residual_path = vec![scores[2].0.abs()];
    let mut fluctuations: Vec<FluctuationResult> = Vec::new();
    let mut updates = Vec::new();
    let targets: &[(FluctuationTarget, Option<bool>)] = match config.targeting {
        HazardTargeting::PerArm => &[
            (FluctuationTarget::Psi0, Some(false)),
            (FluctuationTarget::Psi1, Some(true)),
        ],
        HazardTargeting::Simultaneous => &[(FluctuationTarget::Psi1, None)],
        HazardTargeting::Difference => &[(FluctuationTarget::Ate, None)],
    };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations.max(1) {
        iterations += 1;
        let mut pass = HazardUpdate { epsilon: [0.0; 2] };
        let mut fit_converged = true;
        for &(_, filter) in targets {
            let (upd, ok) = solve_hazard_epsilon(records, units, t0, p_s1, config, filter)?;
            fit_converged &= ok;
            for k in 0..2 {
                if upd.epsilon[k] != 0.0 {
                    pass.epsilon[k] = upd.epsilon[k];
                }
            }
        }
        for u in units.iter_mut() {
            apply_hazard_update(u, &pass, t0, p_s1, config.fluctuation);
        }
        updates.push(pass);
        let before = scores;
        scores = hazard_scores(records, units, t0, p_s1, n);
        residual_path.push(scores[2].0.abs());
        let index = |t: FluctuationTarget| match t {
            FluctuationTarget::Psi0 => 0,
            FluctuationTarget::Psi1 => 1,
            FluctuationTarget::Ate => 2,
        };
        let records_of: &[FluctuationTarget] = match config.targeting {
            HazardTargeting::Difference => &[FluctuationTarget::Ate],
            _ => &[FluctuationTarget::Psi0, FluctuationTarget::Psi1],
        };
        for &target in records_of {
            let eps = match target {
                FluctuationTarget::Psi0 => pass.epsilon[0],
                _ => pass.epsilon[1],
            };
            let i = index(target);
            match fluctuations.iter_mut().find(|f| f.target == target) {
                Some(f) => {
                    f.epsilon += eps;
                    f.iterations += 1;
                    f.converged &= fit_converged;
                    f.eic_residual_before = before[i].0;
                    f.eic_residual_after = scores[i].0;
                }
                None => fluctuations.push(FluctuationResult {
                    target,
                    method: alloc::format!("{:?}-{:?}", config.targeting, config.fluctuation)
                        .to_lowercase(),
                    epsilon: eps,
                    iterations: 1,
                    converged: fit_converged,
                    eic_residual_before: before[i].0,
                    eic_residual_after: scores[i].0,
                }),
            }
        }
        if scores_solved(&scores, n, config.targeting) {
            converged = true;
            break;
        }
    }
    Ok(HazardTargetingResult {
        updates,
        fluctuations,
        iterations,
        converged,
        residual_path,
    })
}

/// IPCTW estimate `[ψ_0, ψ_1]`:
/// `(1/n) Σ R(W) I(S=1, A=a, survival beyond t0 observed) / (P(S=1) g(a|W) Ḡ(t0−))`.
pub fn ipctw_estimate(
    records: &[SurvivalRecord],
    units: &[UnitHazards],
    t0: u32,
    p_s1: f64,
) -> [f64; 2] {
    let n = records.len() as f64;

    let mut psi = [0.0; 2];
    for (r, u) in records.iter().zip(units) {
        if !(r.s && r.survives_beyond(t0)) {
            continue;
        }
        let a = r.a == Some(true);
        let k = usize::from(a);
        let curves = SurvivalCurves::new(&u.lambda[k], &u.alpha[k]);
        psi[k] += u.ratio / (p_s1 * u.g[k] * curves.censoring_survival_before(t0));
    }
    psi.map(|s| s / n)
}

/// Everything produced by a survival TMLE fit.
#[derive(Debug, Clone)]
pub struct SurvivalFit {
    pub report: EstimateReport,
    pub fits: HazardFits,
    pub targeting: HazardTargetingResult,
    /// Per-unit EIC of `[Ψ_0, Ψ_1]`.
    pub eic: Vec<[SurvivalEic; 2]>,
    /// Targeted `S*(t0 | a, W)` per unit.
    pub survival: Vec<[f64; 2]>,
    pub config: SurvivalConfig,
}

pub fn estimate_survival(data: &SurvivalDataset, config: &SurvivalConfig) -> Result<EstimateReport> {
    Ok(fit_survival(data, config)?.report)
}

fn require_both(data: &SurvivalDataset) -> Result<()> {
    if data.strata() != Strata::Both {
        return Err(Error::invalid("estimation needs source and target units"));
    }
    Ok(())
}

pub fn fit_survival(data: &SurvivalDataset, config: &SurvivalConfig) -> Result<SurvivalFit> {
    require_both(data)?;
    config.truncation.validate()?;
    let fits = fit_hazards(
        data,
        &config.nuisance,
        config.truncation,
        config.density_ratio.uses_selection(),
    )?;
    fit_survival_with(data, config, fits)
}

/// Targeting and inference given fitted hazards.
pub fn fit_survival_with(
    data: &SurvivalDataset,
    config: &SurvivalConfig,
    fits: HazardFits,
) -> Result<SurvivalFit> {
    require_both(data)?;
    fit_survival_targeted(data, config, fits, data.len())
}

/// Targeting given fitted hazards with `n_total` units in both populations;
/// see [`crate::tmle`] for the source-only use.
pub(crate) fn fit_survival_targeted(
    data: &SurvivalDataset,
    config: &SurvivalConfig,
    fits: HazardFits,
    n_total: usize,
) -> Result<SurvivalFit> {
    let records = data.records();
    let t0 = data.t0();
    if fits.tau != data.tau() {
        return Err(Error::invalid("hazard fits and data disagree on tau"));
    }
    let bound = BoundHazards::new(&fits, data.w_columns(), config.density_ratio)?;
    let p_s1 = fits.p_s1;
    let mut positivity = PositivityReport::default();
    let mut units = records
        .iter()
        .map(|r| bound.unit(&r.w, r.s, &mut positivity))
        .collect::<Result<Vec<_>>>()?;
    let ipctw = ipctw_estimate(records, &units, t0, p_s1);
    let targeting = target_hazard(records, &mut units, t0, p_s1, config, n_total)?;

    let curves: Vec<[SurvivalCurves; 2]> = units
        .iter()
        .map(|u| [u.curves(false), u.curves(true)])
        .collect();
    let survival: Vec<[f64; 2]> = curves
        .iter()
        .map(|c| [c[0].survival(t0), c[1].survival(t0)])
        .collect();
    let n_target = records.iter().filter(|r| !r.s).count() as f64;
    let mut psi = [0.0; 2];
    for (r, s) in records.iter().zip(&survival) {
        if !r.s {
            psi[0] += s[0];
            psi[1] += s[1];
        }
    }
    let psi = psi.map(|s| s / n_target);
    let eic: Vec<[SurvivalEic; 2]> = records
        .iter()
        .zip(&units)
        .zip(&curves)
        .map(|((r, u), c)| {
            [false, true].map(|arm| {
                let k = usize::from(arm);
                survival_eic(r, arm, u, &c[k], p_s1, t0, psi[k])
            })
        })
        .collect();
    let totals: Vec<[f64; 2]> = eic.iter().map(|e| [e[0].total, e[1].total]).collect();
    let mut report = EstimateReport::from_eic(psi, &totals);
    report.fluctuations = targeting.fluctuations.clone();
    report.iterations = targeting.iterations;
    report.converged = targeting.converged;
    report.positivity = positivity;
    report.ipctw = Some(ipctw);
    if !targeting.converged {
        report
            .warnings
            .push("hazard targeting stopped before the EIC equation was solved".into());
    }
    if positivity.total() > 0 {
        report.warnings.push(alloc::format!(
            "{} nuisance predictions were truncated",
            positivity.total()
        ));
    }
    Ok(SurvivalFit {
        report,
        fits,
        targeting,
        eic,
        survival,
        config: config.clone(),
    })
}

/// Monte-Carlo estimate of the exact remainder of the survival ATE with its
/// MC standard error; see [`crate::tmle::exact_remainder_mc`].
pub fn survival_remainder_mc(
    bound: &BoundHazards,
    draws: &[SurvivalRecord],
    t0: u32,
    psi_p: [f64; 2],
    psi_0: [f64; 2],
) -> Result<(f64, f64)> {
    let p_s1 = bound.p_s1();
    let mut pos = PositivityReport::default();
    let mut d = Vec::with_capacity(draws.len());
    for r in draws {
        let u = bound.unit(&r.w, r.s, &mut pos)?;
        let e = [false, true].map(|arm| {
            let c = u.curves(arm);
            survival_eic(r, arm, &u, &c, p_s1, t0, psi_p[usize::from(arm)]).total
        });
        d.push(e[1] - e[0]);
    }
    let mc_se = crate::stats::sample_sd(&d) / libm::sqrt(d.len() as f64);
    let remainder = (psi_p[1] - psi_p[0]) - (psi_0[1] - psi_0[0]) + crate::stats::mean(&d);
    Ok((remainder, mc_se))
}
