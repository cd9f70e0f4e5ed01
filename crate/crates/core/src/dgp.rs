//! Structural data generators with discrete covariates, so that the
//! statistical estimand and its counterfactual counterparts can be computed
//! exactly by enumeration.
//!
//! Draws use ChaCha8 seeded with `seed_from_u64(seed)`; replication `i` of a
//! study uses stream `i` of the same seed.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{MissingDataset, ObservedRecord, Schema, SurvivalDataset, SurvivalRecord};
use crate::design::{DesignSpec, Link, TimeEncoding};
use crate::eic::MissingLaw;
use crate::error::{Error, Result};
use crate::model::{BoundModel, NuisanceModel, RegressionFit, TableEntry, TableModel, Truncation};
use crate::nuisance::{treatment_layout, with_treatment, DensityRatio, HazardFits, HazardSpec, NuisanceSource, NuisanceSpec};

/// Default cap on the number of support points visited by enumeration.
pub const ENUMERATION_CAP: usize = 1_000_000;

/// RNG for replication `rep` of a study seeded with `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum OutcomeLaw {
    /// `Y ~ Bernoulli(mean(W, A))`.
    Bernoulli { mean: NuisanceModel },
    /// `Y = mean(W, A) + sd · N(0, 1)`.
    Gaussian { mean: NuisanceModel, sd: f64 },
}

impl OutcomeLaw {
    pub fn mean(&self) -> &NuisanceModel {
        match self {
            OutcomeLaw::Bernoulli { mean } | OutcomeLaw::Gaussian { mean, .. } => mean,
        }
    }
}

/// Generator for the missing-outcome problem. `W = V ++ W-only`; the
/// `W`-only coordinates are independent binary given `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingDgp {
    pub v_columns: Vec<String>,
    pub w_only_columns: Vec<String>,
    pub v_support: Vec<Vec<f64>>,
    pub v_prob_source: Vec<f64>,
    pub v_prob_target: Vec<f64>,
    /// `P(S = 1)`.
    pub p_source: f64,
    /// `P(w_j = 1 | V)` for each `W`-only column, over `V`.
    pub w_only: Vec<NuisanceModel>,
    /// Target-population law of the `W`-only columns. Differs from `w_only`
    /// only when the exchangeability of `W | V` across populations is to be
    /// violated.
    #[serde(default)]
    pub w_only_target: Option<Vec<NuisanceModel>>,
    /// `P(A = 1 | W)` over `W`.
    pub treatment: NuisanceModel,
    /// `P(Δ = 1 | W, A)` over `W ++ [a]`.
    pub missingness: NuisanceModel,
    /// Outcome law over `W ++ [a]`.
    pub outcome: OutcomeLaw,
}

/// Generator for the survival problem on `1..=tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDgp {
    pub w_columns: Vec<String>,
    pub w_support: Vec<Vec<f64>>,
    pub w_prob_source: Vec<f64>,
    pub w_prob_target: Vec<f64>,
    pub p_source: f64,
    pub treatment: NuisanceModel,
    /// `λ(t | W, A)` over `W ++ [a]` and time.
    pub event_hazard: NuisanceModel,
    /// `α(t | W, A)` over `W ++ [a]` and time.
    pub censoring_hazard: NuisanceModel,
    pub t0: u32,
    pub tau: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DgpSpec {
    Missing(MissingDgp),
    Survival(SurvivalDgp),
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DgpSpec::Missing(d) => d.validate(),
            DgpSpec::Survival(d) => d.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum TruthMethod {
    Enumeration { support: usize },
    MonteCarlo { draws: usize, mc_se: f64 },
}

/// Ground truth of a generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthReport {
    pub psi1: f64,
    pub psi0: f64,
    pub ate: f64,
    /// `E(Y_1 − Y_0 | S = 0)` (or the survival analogue).
    pub psi_f: f64,
    /// `E_{W|S=0} CATE(W)`.
    pub psi_f_r: f64,
    pub method: TruthMethod,
}

fn check_distribution(name: &str, p: &[f64], support: usize) -> Result<()> {
    if p.len() != support {
        return Err(Error::invalid(alloc::format!(
            "{name} has {} probabilities for {support} support points",
            p.len()
        )));
    }
    let total: f64 = p.iter().sum();
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(alloc::format!("{name} is not a probability vector")));
    }
    Ok(())
}

fn check_p_source(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p_source must lie in (0, 1)"));
    }
    Ok(())
}

fn categorical(rng: &mut impl Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // guards against rounding in the cumulative sum
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

#[inline]
fn bernoulli(rng: &mut impl Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

#[inline]
fn bit(b: bool) -> f64 {
    f64::from(u8::from(b))
}

/// The design a generating model was built from, if it has one.
fn design_of(model: &NuisanceModel) -> Option<NuisanceSource> {
    match model {
        NuisanceModel::Glm(f) => Some(NuisanceSource::Fit(f.design.clone())),
        _ => None,
    }
}

fn bind_all(models: &[NuisanceModel], features: &[String]) -> Result<Vec<BoundModel>> {
    models.iter().map(|m| m.bind(features)).collect()
}

struct BoundMissingDgp {
    w_only: Vec<BoundModel>,
    w_only_target: Option<Vec<BoundModel>>,
    treatment: BoundModel,
    missingness: BoundModel,
    mean: BoundModel,
    sd: Option<f64>,
}

impl MissingDgp {
    pub fn w_columns(&self) -> Vec<String> {
        let mut w = self.v_columns.clone();
        w.extend(self.w_only_columns.iter().cloned());
        w
    }

    pub fn schema(&self) -> Schema {
        Schema::missing_outcome(&self.w_columns(), &self.v_columns)
    }

    pub fn validate(&self) -> Result<()> {
        check_p_source(self.p_source)?;
        let k = self.v_columns.len();
        if self.v_support.iter().any(|p| p.len() != k) {
            return Err(Error::invalid("V support points have the wrong dimension"));
        }
        check_distribution("v_prob_source", &self.v_prob_source, self.v_support.len())?;
        check_distribution("v_prob_target", &self.v_prob_target, self.v_support.len())?;
        if self.w_only.len() != self.w_only_columns.len()
            || self
                .w_only_target
                .as_ref()
                .is_some_and(|t| t.len() != self.w_only_columns.len())
        {
            return Err(Error::invalid("one W-only model per W-only column is required"));
        }
        if let OutcomeLaw::Gaussian { sd, .. } = self.outcome {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::invalid("outcome sd must be finite and non-negative"));
            }
        }
        self.schema().v_index();
        self.bind().map(|_| ())
    }

    fn bind(&self) -> Result<BoundMissingDgp> {
        let w = self.w_columns();
        let wa = treatment_layout(&w);
        Ok(BoundMissingDgp {
            w_only: bind_all(&self.w_only, &self.v_columns)?,
            w_only_target: match &self.w_only_target {
                Some(t) => Some(bind_all(t, &self.v_columns)?),
                None => None,
            },
            treatment: self.treatment.bind(&w)?,
            missingness: self.missingness.bind(&wa)?,
            mean: self.outcome.mean().bind(&wa)?,
            sd: match self.outcome {
                OutcomeLaw::Gaussian { sd, .. } => Some(sd),
                OutcomeLaw::Bernoulli { .. } => None,
            },
        })
    }

    /// Draws `n` units without checking that both strata occur.
    pub fn draw(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<ObservedRecord>> {
        Ok(self.draw_full(n, rng)?.into_iter().map(|u| u.record).collect())
    }

    fn draw_full(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<FullUnit>> {
        let b = self.bind()?;
        let v_index: Vec<usize> = (0..self.v_columns.len()).collect();
        let mut buf = Vec::new();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let s = bernoulli(rng, self.p_source);
            let probs = if s { &self.v_prob_source } else { &self.v_prob_target };
            let v = self.v_support[categorical(rng, probs)].clone();
            let law = match (&b.w_only_target, s) {
                (Some(t), false) => t,
                _ => &b.w_only,
            };
            let mut w = v.clone();
            for m in law {
                w.push(bit(bernoulli(rng, m.predict(&v, None))));
            }
            // potential outcomes share the unit's exogenous noise
            let noise: f64 = match b.sd {
                Some(_) => rng.sample(StandardNormal),
                None => 0.0,
            };
            let u_y: f64 = rng.random();
            let potential = [false, true].map(|a| {
                let m = b.mean.predict(with_treatment(&mut buf, &w, a), None);
                match b.sd {
                    Some(sd) => m + sd * noise,
                    None => bit(u_y < m),
                }
            });
            let record = if s {
                let a = bernoulli(rng, b.treatment.predict(&w, None));
                let delta = bernoulli(rng, b.missingness.predict(with_treatment(&mut buf, &w, a), None));
                let y = delta.then(|| potential[usize::from(a)]);
                ObservedRecord::source(w.clone(), &v_index, a, y)
            } else {
                ObservedRecord::target(v)
            };
            out.push(FullUnit {
                record,
                w,
                potential,
            });
        }
        Ok(out)
    }

    /// Enumerates `(V, W)` cells of the target population under the source
    /// law of `W | V` (`identified = true`) or the target law.
    fn target_cells(&self, identified: bool, cap: usize) -> Result<Vec<(Vec<f64>, f64)>> {
        let m = self.w_only_columns.len();
        let support = self
            .v_support
            .len()
            .saturating_mul(1usize.checked_shl(m as u32).unwrap_or(usize::MAX));
        if m >= usize::BITS as usize || support > cap {
            return Err(Error::EnumerationInfeasible { support, cap });
        }
        let b = self.bind()?;
        let law = match (&b.w_only_target, identified) {
            (Some(t), false) => t,
            _ => &b.w_only,
        };
        let mut cells = Vec::new();
        for (v, &pv) in self.v_support.iter().zip(&self.v_prob_target) {
            if pv == 0.0 {
                continue;
            }
            let p1: Vec<f64> = law.iter().map(|l| l.predict(v, None)).collect();
            for mask in 0..(1usize << m) {
                let mut w = v.clone();
                let mut p = pv;
                for (j, &pj) in p1.iter().enumerate() {
                    let on = mask & (1 << j) != 0;
                    w.push(bit(on));
                    p *= if on { pj } else { 1.0 - pj };
                }
                if p > 0.0 {
                    cells.push((w, p));
                }
            }
        }
        Ok(cells)
    }

    /// Exact truth by enumeration.
    pub fn truth(&self, cap: usize) -> Result<TruthReport> {
        self.validate()?;
        let b = self.bind()?;
        let mut buf = Vec::new();
        let mut cate_mean = |cells: &[(Vec<f64>, f64)]| {
            let mut psi = [0.0; 2];
            for (w, p) in cells {
                for a in [false, true] {
                    psi[usize::from(a)] += p * b.mean.predict(with_treatment(&mut buf, w, a), None);
                }
            }
            psi
        };
        let identified = self.target_cells(true, cap)?;
        let psi = cate_mean(&identified);
        let counterfactual = cate_mean(&self.target_cells(false, cap)?);
        let ate = psi[1] - psi[0];
        let psi_f = counterfactual[1] - counterfactual[0];
        Ok(TruthReport {
            psi1: psi[1],
            psi0: psi[0],
            ate,
            psi_f,
            psi_f_r: psi_f,
            method: TruthMethod::Enumeration {
                support: identified.len(),
            },
        })
    }

    /// Monte-Carlo truth from `draws` target units. `Ψ_a` averages the
    /// outcome regression over `V ~ P(V | S=0)`, `W | V ~ P(W | V, S=1)`;
    /// `ψ^F` averages drawn potential outcomes of target units.
    pub fn truth_mc(&self, draws: usize, seed: u64) -> Result<TruthReport> {
        self.validate()?;
        if draws < 2 {
            return Err(Error::invalid("need at least two Monte-Carlo draws"));
        }
        let b = self.bind()?;
        let mut rng = replication_rng(seed, 0);
        let target_only = MissingDgp {
            p_source: 0.0,
            ..self.clone()
        };
        let mut buf = Vec::new();
        let mut psi = [0.0; 2];
        let mut diffs = Vec::with_capacity(draws);
        let mut f = Vec::with_capacity(draws);
        let mut f_r = 0.0;
        for _ in 0..draws {
            let unit = &target_only.draw_full(1, &mut rng)?[0];
            let v = &unit.record.v;
            let mut w_src = v.clone();
            for m in &b.w_only {
                w_src.push(bit(bernoulli(&mut rng, m.predict(v, None))));
            }
            let q = [false, true].map(|a| b.mean.predict(with_treatment(&mut buf, &w_src, a), None));
            psi[0] += q[0];
            psi[1] += q[1];
            diffs.push(q[1] - q[0]);
            let cate = [false, true].map(|a| b.mean.predict(with_treatment(&mut buf, &unit.w, a), None));
            f_r += cate[1] - cate[0];
            f.push(unit.potential[1] - unit.potential[0]);
        }
        let n = draws as f64;
        Ok(TruthReport {
            psi1: psi[1] / n,
            psi0: psi[0] / n,
            ate: (psi[1] - psi[0]) / n,
            psi_f: crate::stats::mean(&f),
            psi_f_r: f_r / n,
            method: TruthMethod::MonteCarlo {
                draws,
                mc_se: crate::stats::sample_sd(&diffs) / libm::sqrt(n),
            },
        })
    }

    /// The true nuisance functions, with `P(S = 1 | V)` and `Q̄ʳ` tabulated
    /// over the `V` support.
    pub fn true_law(&self) -> Result<MissingLaw> {
        self.validate()?;
        let b = self.bind()?;
        let schema = self.schema();
        let m = self.w_only_columns.len();
        let mut p_s = Vec::new();
        let mut q_r = [Vec::new(), Vec::new()];
        let mut buf = Vec::new();
        for (i, v) in self.v_support.iter().enumerate() {
            let num = self.p_source * self.v_prob_source[i];
            let den = num + (1.0 - self.p_source) * self.v_prob_target[i];
            p_s.push(TableEntry {
                key: v.clone(),
                value: if den > 0.0 { num / den } else { self.p_source },
            });
            let p1: Vec<f64> = b.w_only.iter().map(|l| l.predict(v, None)).collect();
            let mut acc = [0.0; 2];
            for mask in 0..(1usize << m) {
                let mut w = v.clone();
                let mut p = 1.0;
                for (j, &pj) in p1.iter().enumerate() {
                    let on = mask & (1 << j) != 0;
                    w.push(bit(on));
                    p *= if on { pj } else { 1.0 - pj };
                }
                for a in [false, true] {
                    acc[usize::from(a)] += p * b.mean.predict(with_treatment(&mut buf, &w, a), None);
                }
            }
            for k in 0..2 {
                q_r[k].push(TableEntry {
                    key: v.clone(),
                    value: acc[k],
                });
            }
        }
        let table = |entries: Vec<TableEntry>| {
            NuisanceModel::Table(TableModel {
                features: self.v_columns.clone(),
                entries,
            })
        };
        let [q0, q1] = q_r;
        Ok(MissingLaw {
            q_bar_r: if schema.v_equals_w() { None } else { Some([table(q0), table(q1)]) },
            schema,
            g_a: self.treatment.clone(),
            p_delta: self.missingness.clone(),
            p_s_given_v: Some(table(p_s)),
            q_bar: [self.outcome.mean().clone(), self.outcome.mean().clone()],
            p_s1: self.p_source,
            truncation: Truncation::NONE,
            ratio: DensityRatio::OddsWithMarginal,
        })
    }

    /// Nuisance designs that contain the truth: the generating designs of
    /// the treatment, missingness and outcome mechanisms, and saturated
    /// designs over the discrete `V` for selection and the reduced
    /// regression.
    pub fn correct_spec(&self) -> NuisanceSpec {
        let w = self.w_columns();
        let saturated = NuisanceSpec::saturated(&w, &self.v_columns);
        NuisanceSpec {
            g_a: design_of(&self.treatment).unwrap_or(saturated.g_a),
            p_delta: design_of(&self.missingness).unwrap_or(saturated.p_delta),
            q_bar: design_of(self.outcome.mean()).unwrap_or(saturated.q_bar.clone()),
            q_bar_per_arm: design_of(self.outcome.mean()).is_none(),
            ..saturated
        }
    }

    /// Designs that ignore every covariate except treatment in the outcome
    /// regression and every covariate in the other mechanisms.
    pub fn wrong_spec(&self) -> NuisanceSpec {
        NuisanceSpec {
            g_a: NuisanceSource::Fit(DesignSpec::intercept_only(Link::Logit)),
            p_delta: NuisanceSource::Fit(DesignSpec::intercept_only(Link::Logit)),
            p_s_given_v: NuisanceSource::Fit(DesignSpec::intercept_only(Link::Logit)),
            q_bar: NuisanceSource::Fit(DesignSpec::main_effects(&["a"], Link::Logit)),
            q_bar_per_arm: false,
            reduced: DesignSpec::intercept_only(Link::Identity),
            p_s1: None,
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<MissingDataset> {
        self.generate_replication(n, seed, 0)
    }

    pub fn generate_replication(&self, n: usize, seed: u64, rep: u64) -> Result<MissingDataset> {
        if n == 0 {
            return Err(Error::invalid("cannot generate an empty dataset"));
        }
        self.validate()?;
        let mut rng = replication_rng(seed, rep);
        MissingDataset::new(self.draw(n, &mut rng)?, self.schema())
    }
}

struct FullUnit {
    record: ObservedRecord,
    w: Vec<f64>,
    potential: [f64; 2],
}

struct BoundSurvivalDgp {
    treatment: BoundModel,
    event: BoundModel,
    censoring: BoundModel,
}

impl SurvivalDgp {
    pub fn validate(&self) -> Result<()> {
        check_p_source(self.p_source)?;
        if self.t0 == 0 || self.t0 > self.tau {
            return Err(Error::invalid("need 1 <= t0 <= tau"));
        }
        let p = self.w_columns.len();
        if self.w_support.iter().any(|w| w.len() != p) {
            return Err(Error::invalid("W support points have the wrong dimension"));
        }
        check_distribution("w_prob_source", &self.w_prob_source, self.w_support.len())?;
        check_distribution("w_prob_target", &self.w_prob_target, self.w_support.len())?;
        self.bind().map(|_| ())
    }

    fn bind(&self) -> Result<BoundSurvivalDgp> {
        let wa = treatment_layout(&self.w_columns);
        Ok(BoundSurvivalDgp {
            treatment: self.treatment.bind(&self.w_columns)?,
            event: self.event_hazard.bind(&wa)?,
            censoring: self.censoring_hazard.bind(&wa)?,
        })
    }

    fn survival_at(&self, b: &BoundSurvivalDgp, w: &[f64], a: bool, buf: &mut Vec<f64>) -> f64 {
        let x = with_treatment(buf, w, a);
        (1..=self.t0).map(|t| 1.0 - b.event.predict(x, Some(t))).product()
    }

    /// Draws `n` units without checking that both strata occur. Returns the
    /// records and, per unit, whether the latent event time of each arm
    /// exceeds `t0`.
    fn draw_full(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<(SurvivalRecord, [bool; 2])>> {
        let b = self.bind()?;
        let mut buf = Vec::new();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let s = bernoulli(rng, self.p_source);
            let probs = if s { &self.w_prob_source } else { &self.w_prob_target };
            let w = self.w_support[categorical(rng, probs)].clone();
            // one uniform per period shared by both potential event times
            let u: Vec<f64> = (0..self.tau).map(|_| rng.random()).collect();
            let event_time = |a: bool, buf: &mut Vec<f64>| {
                let x = with_treatment(buf, &w, a);
                (1..=self.tau).find(|&t| u[t as usize - 1] < b.event.predict(x, Some(t)))
            };
            let latent = [false, true].map(|a| event_time(a, &mut buf));
            let beyond = latent.map(|t| t.is_none_or(|t| t > self.t0));
            if !s {
                out.push((SurvivalRecord::target(w), beyond));
                continue;
            }
            let a = bernoulli(rng, b.treatment.predict(&w, None));
            let t_event = latent[usize::from(a)];
            let x = with_treatment(&mut buf, &w, a).to_vec();
            let mut rec = None;
            for t in 1..=self.tau {
                if t_event == Some(t) {
                    rec = Some(SurvivalRecord::source(w.clone(), a, t, true));
                    break;
                }
                if t == self.tau {
                    rec = Some(SurvivalRecord::source(w.clone(), a, t, false));
                    break;
                }
                if bernoulli(rng, b.censoring.predict(&x, Some(t))) {
                    rec = Some(SurvivalRecord::source(w.clone(), a, t, false));
                    break;
                }
            }
            out.push((rec.expect("loop always returns"), beyond));
        }
        Ok(out)
    }

    pub fn draw(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<SurvivalRecord>> {
        Ok(self.draw_full(n, rng)?.into_iter().map(|(r, _)| r).collect())
    }

    /// Exact truth by enumeration over the `W` support.
    pub fn truth(&self, cap: usize) -> Result<TruthReport> {
        self.validate()?;
        let support = self.w_support.len();
        if support > cap {
            return Err(Error::EnumerationInfeasible { support, cap });
        }
        let b = self.bind()?;
        let mut buf = Vec::new();
        let mut psi = [0.0; 2];
        for (w, &p) in self.w_support.iter().zip(&self.w_prob_target) {
            for a in [false, true] {
                psi[usize::from(a)] += p * self.survival_at(&b, w, a, &mut buf);
            }
        }
        let ate = psi[1] - psi[0];
        Ok(TruthReport {
            psi1: psi[1],
            psi0: psi[0],
            ate,
            psi_f: ate,
            psi_f_r: ate,
            method: TruthMethod::Enumeration { support },
        })
    }

    /// Monte-Carlo truth from `draws` target units with latent event times.
    pub fn truth_mc(&self, draws: usize, seed: u64) -> Result<TruthReport> {
        self.validate()?;
        if draws < 2 {
            return Err(Error::invalid("need at least two Monte-Carlo draws"));
        }
        let b = self.bind()?;
        let mut rng = replication_rng(seed, 0);
        let target_only = SurvivalDgp {
            p_source: 0.0,
            ..self.clone()
        };
        let mut buf = Vec::new();
        let mut f = Vec::with_capacity(draws);
        let mut cond = Vec::with_capacity(draws);
        let mut psi = [0.0; 2];
        for (rec, beyond) in target_only.draw_full(draws, &mut rng)? {
            let s = [false, true].map(|a| self.survival_at(&b, &rec.w, a, &mut buf));
            psi[0] += s[0];
            psi[1] += s[1];
            cond.push(s[1] - s[0]);
            f.push(bit(beyond[1]) - bit(beyond[0]));
        }
        let n = draws as f64;
        Ok(TruthReport {
            psi1: psi[1] / n,
            psi0: psi[0] / n,
            ate: (psi[1] - psi[0]) / n,
            psi_f: crate::stats::mean(&f),
            psi_f_r: crate::stats::mean(&cond),
            method: TruthMethod::MonteCarlo {
                draws,
                mc_se: crate::stats::sample_sd(&f) / libm::sqrt(n),
            },
        })
    }

    /// The true nuisances; `P(S = 1 | W)` is tabulated over the support.
    pub fn true_fits(&self) -> Result<HazardFits> {
        self.validate()?;
        let entries = self
            .w_support
            .iter()
            .zip(self.w_prob_source.iter().zip(&self.w_prob_target))
            .map(|(w, (&ps, &pt))| {
                let num = self.p_source * ps;
                let den = num + (1.0 - self.p_source) * pt;
                TableEntry {
                    key: w.clone(),
                    value: if den > 0.0 { num / den } else { self.p_source },
                }
            })
            .collect();
        Ok(HazardFits {
            lambda: self.event_hazard.clone(),
            alpha: self.censoring_hazard.clone(),
            g_a: self.treatment.clone(),
            p_s_given_w: Some(NuisanceModel::Table(TableModel {
                features: self.w_columns.clone(),
                entries,
            })),
            p_s1: self.p_source,
            truncation: Truncation::NONE,
            tau: self.tau,
        })
    }

    /// The generating designs, with a saturated selection model over the
    /// discrete `W`.
    pub fn correct_spec(&self) -> HazardSpec {
        let saturated = HazardSpec::saturated(&self.w_columns);
        HazardSpec {
            lambda: design_of(&self.event_hazard).unwrap_or(saturated.lambda),
            alpha: design_of(&self.censoring_hazard).unwrap_or(saturated.alpha),
            g_a: design_of(&self.treatment).unwrap_or(saturated.g_a),
            ..saturated
        }
    }

    /// Designs that drop every covariate (the event hazard keeps treatment
    /// and period indicators).
    pub fn wrong_spec(&self) -> HazardSpec {
        HazardSpec {
            lambda: NuisanceSource::Fit(
                DesignSpec::main_effects(&["a"], Link::Logit).with_time(TimeEncoding::Indicators),
            ),
            alpha: NuisanceSource::Fit(
                DesignSpec::intercept_only(Link::Logit).with_time(TimeEncoding::Indicators),
            ),
            g_a: NuisanceSource::Fit(DesignSpec::intercept_only(Link::Logit)),
            p_s_given_w: NuisanceSource::Fit(DesignSpec::intercept_only(Link::Logit)),
            p_s1: None,
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<SurvivalDataset> {
        self.generate_replication(n, seed, 0)
    }

    pub fn generate_replication(&self, n: usize, seed: u64, rep: u64) -> Result<SurvivalDataset> {
        if n == 0 {
            return Err(Error::invalid("cannot generate an empty dataset"));
        }
        self.validate()?;
        let mut rng = replication_rng(seed, rep);
        SurvivalDataset::new(self.draw(n, &mut rng)?, self.w_columns.clone(), self.t0, self.tau)
    }
}

/// Which nuisance blocks are correctly specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    BothCorrect,
    /// Outcome regressions (or the event hazard) correct only.
    QOnly,
    /// Treatment, missingness or censoring, and selection correct only.
    GOnly,
    Neither,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::BothCorrect,
        Scenario::QOnly,
        Scenario::GOnly,
        Scenario::Neither,
    ];

    fn q_correct(self) -> bool {
        matches!(self, Scenario::BothCorrect | Scenario::QOnly)
    }

    fn g_correct(self) -> bool {
        matches!(self, Scenario::BothCorrect | Scenario::GOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::BothCorrect => "both-correct",
            Scenario::QOnly => "q-only",
            Scenario::GOnly => "g-only",
            Scenario::Neither => "neither",
        }
    }
}

/// Combines the outcome block (`q_bar`, `reduced`) of one spec with the
/// mechanism block (`g_a`, `p_delta`, `p_s_given_v`) of another.
pub fn misspecify(correct: &NuisanceSpec, wrong: &NuisanceSpec, scenario: Scenario) -> NuisanceSpec {
    let q = if scenario.q_correct() { correct } else { wrong };
    let g = if scenario.g_correct() { correct } else { wrong };
    NuisanceSpec {
        g_a: g.g_a.clone(),
        p_delta: g.p_delta.clone(),
        p_s_given_v: g.p_s_given_v.clone(),
        q_bar: q.q_bar.clone(),
        q_bar_per_arm: q.q_bar_per_arm,
        reduced: q.reduced.clone(),
        p_s1: correct.p_s1,
    }
}

/// Survival analogue of [`misspecify`]: the outcome block is `lambda`, the
/// mechanism block `g_a`, `alpha`, `p_s_given_w`.
pub fn misspecify_hazards(correct: &HazardSpec, wrong: &HazardSpec, scenario: Scenario) -> HazardSpec {
    let q = if scenario.q_correct() { correct } else { wrong };
    let g = if scenario.g_correct() { correct } else { wrong };
    HazardSpec {
        lambda: q.lambda.clone(),
        alpha: g.alpha.clone(),
        g_a: g.g_a.clone(),
        p_s_given_w: g.p_s_given_w.clone(),
        p_s1: correct.p_s1,
    }
}

fn glm(features: &[String], design: DesignSpec, tau: Option<u32>, coefficients: Vec<f64>) -> NuisanceModel {
    NuisanceModel::Glm(
        RegressionFit::with_coefficients(features.to_vec(), design, tau, coefficients)
            .expect("built-in design matches its coefficients"),
    )
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Binary `V = (w1, w2)` and `W = (w1, w2, w3)` with a covariate shift in
/// `V` between populations and strong confounding through `w3`.
pub fn transport_missing() -> MissingDgp {
    let v = names(&["w1", "w2"]);
    let w = names(&["w1", "w2", "w3"]);
    let wa = treatment_layout(&w);
    MissingDgp {
        v_columns: v.clone(),
        w_only_columns: names(&["w3"]),
        v_support: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        v_prob_source: vec![0.3, 0.25, 0.25, 0.2],
        v_prob_target: vec![0.15, 0.25, 0.25, 0.35],
        p_source: 0.5,
        w_only: vec![glm(&v, DesignSpec::main_effects(&v, Link::Logit), None, vec![-0.3, 0.6, 0.3])],
        w_only_target: None,
        treatment: glm(&w, DesignSpec::main_effects(&w, Link::Logit), None, vec![-1.0, 0.4, -0.4, 2.0]),
        missingness: glm(
            &wa,
            DesignSpec::main_effects(&wa, Link::Logit),
            None,
            vec![2.0, -0.5, 0.0, -1.0, 0.5],
        ),
        outcome: OutcomeLaw::Bernoulli {
            mean: glm(
                &wa,
                DesignSpec::main_effects(&wa, Link::Logit)
                    .with_interaction(&["w2", "a"])
                    .with_interaction(&["w1", "a"]),
                None,
                vec![-1.5, 0.8, -0.5, 2.5, 1.0, -0.8, 0.6],
            ),
        },
    }
}

/// Binary `W = (w1, w2)`, `tau = 5`, `t0 = 3`, covariate shift between
/// populations and confounding through `w1`.
pub fn transport_survival() -> SurvivalDgp {
    let w = names(&["w1", "w2"]);
    let wa = treatment_layout(&w);
    let hazard = DesignSpec::main_effects(&wa, Link::Logit)
        .with_interaction(&["w2", "a"])
        .with_time(TimeEncoding::Indicators);
    SurvivalDgp {
        w_columns: w.clone(),
        w_support: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        w_prob_source: vec![0.35, 0.25, 0.25, 0.15],
        w_prob_target: vec![0.15, 0.25, 0.25, 0.35],
        p_source: 0.5,
        treatment: glm(&w, DesignSpec::main_effects(&w, Link::Logit), None, vec![-1.0, 2.0, 0.5]),
        event_hazard: glm(
            &wa,
            hazard,
            Some(5),
            vec![-2.2, -2.0, -1.9, -1.8, -1.7, 2.5, 0.5, -0.8, 0.6],
        ),
        censoring_hazard: glm(
            &wa,
            DesignSpec::main_effects(&wa, Link::Logit).with_time(TimeEncoding::Indicators),
            Some(5),
            vec![-2.5, -2.4, -2.3, -2.2, -2.1, 0.8, 0.0, 0.5],
        ),
        t0: 3,
        tau: 5,
    }
}
