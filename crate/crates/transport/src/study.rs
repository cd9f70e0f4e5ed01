//! Replicated generate-then-estimate experiments over the double-robustness
//! scenarios, reporting the full and less-aggressive estimators side by side.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use transport_tmle_core::dgp::{
    misspecify, misspecify_hazards, DgpSpec, MissingDgp, Scenario, SurvivalDgp, TruthReport, ENUMERATION_CAP,
};
use transport_tmle_core::federated::{fit_less_aggressive, fit_less_aggressive_survival};
use transport_tmle_core::survival::{estimate_survival, HazardTargeting, SurvivalConfig};
use transport_tmle_core::tmle::{estimate, TargetingScheme, TmleConfig};
use transport_tmle_core::EstimateReport;

use crate::config::{EstimatorConfig, Overrides};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Full,
    LessAggressive,
}

impl Estimator {
    pub const BOTH: [Estimator; 2] = [Estimator::Full, Estimator::LessAggressive];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Full => "full",
            Estimator::LessAggressive => "less-aggressive",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    /// Monte-Carlo draws for the truth when enumeration is infeasible.
    pub truth_draws: usize,
    pub overrides: Overrides,
}

impl StudyConfig {
    pub fn new(n: usize, replications: usize, seed: u64) -> Self {
        StudyConfig {
            n,
            replications,
            seed,
            scenarios: Scenario::ALL.to_vec(),
            jobs: None,
            truth_draws: 1_000_000,
            overrides: Overrides::default(),
        }
    }
}

/// One fitted replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub ate: f64,
    /// `σ_n / √n`.
    pub se: f64,
    pub covered: bool,
    pub abs_score: f64,
    pub score_solved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: Scenario,
    pub estimator: Estimator,
    pub replications: usize,
    pub failures: usize,
    pub bias: f64,
    /// Monte-Carlo standard error of the bias, `sd / √R`.
    pub mc_se: f64,
    /// Empirical sd of the estimates across replications.
    pub sd: f64,
    /// Mean of the estimated standard errors `σ_n / √n`.
    pub mean_se: f64,
    pub coverage: f64,
    pub mean_abs_score: f64,
    /// Replications whose EIC equation was solved to tolerance.
    pub score_solved: usize,
}

impl Summary {
    fn from_replicates(scenario: Scenario, estimator: Estimator, truth: f64, reps: &[Option<Replicate>]) -> Self {
        let ok: Vec<&Replicate> = reps.iter().flatten().collect();
        let r = ok.len() as f64;
        let est: Vec<f64> = ok.iter().map(|x| x.ate).collect();
        let mean = est.iter().sum::<f64>() / r;
        let sd = (est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
        Summary {
            scenario,
            estimator,
            replications: ok.len(),
            failures: reps.len() - ok.len(),
            bias: mean - truth,
            mc_se: sd / r.sqrt(),
            sd,
            mean_se: ok.iter().map(|x| x.se).sum::<f64>() / r,
            coverage: ok.iter().filter(|x| x.covered).count() as f64 / r,
            mean_abs_score: ok.iter().map(|x| x.abs_score).sum::<f64>() / r,
            score_solved: ok.iter().filter(|x| x.score_solved).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub estimand: String,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub truth: TruthReport,
    pub rows: Vec<Summary>,
}

impl StudyReport {
    pub fn row(&self, scenario: Scenario, estimator: Estimator) -> Option<&Summary> {
        self.rows
            .iter()
            .find(|s| s.scenario == scenario && s.estimator == estimator)
    }

    const FIELDS: [&'static str; 9] = [
        "replications",
        "failures",
        "bias",
        "mc_se",
        "sd",
        "mean_se",
        "coverage",
        "mean_abs_pn_eic",
        "score_solved",
    ];

    /// One line per scenario with a column block per estimator.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario");
        for e in Estimator::BOTH {
            for f in Self::FIELDS {
                let _ = write!(out, ",{}_{f}", e.name().replace('-', "_"));
            }
        }
        out.push('\n');
        for scenario in self.scenarios() {
            out.push_str(scenario.name());
            for e in Estimator::BOTH {
                match self.row(scenario, e) {
                    Some(s) => {
                        let _ = write!(
                            out,
                            ",{},{},{},{},{},{},{},{},{}",
                            s.replications,
                            s.failures,
                            s.bias,
                            s.mc_se,
                            s.sd,
                            s.mean_se,
                            s.coverage,
                            s.mean_abs_score,
                            s.score_solved
                        );
                    }
                    None => out.push_str(&",".repeat(Self::FIELDS.len())),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{} estimand, n = {}, {} replications, seed {}, true ATE {:.5}\n",
            self.estimand, self.n, self.replications, self.seed, self.truth.ate
        );
        let _ = writeln!(
            out,
            "{:<14} {:<16} {:>9} {:>8} {:>8} {:>8} {:>8} {:>10} {:>5}",
            "scenario", "estimator", "bias", "mc_se", "sd", "mean_se", "cover", "|Pn D*|", "fail"
        );
        for s in &self.rows {
            let _ = writeln!(
                out,
                "{:<14} {:<16} {:>9.5} {:>8.5} {:>8.5} {:>8.5} {:>8.3} {:>10.2e} {:>5}",
                s.scenario.name(),
                s.estimator.name(),
                s.bias,
                s.mc_se,
                s.sd,
                s.mean_se,
                s.coverage,
                s.mean_abs_score,
                s.failures
            );
        }
        out
    }

    fn scenarios(&self) -> Vec<Scenario> {
        let mut v: Vec<Scenario> = Vec::new();
        for s in &self.rows {
            if !v.contains(&s.scenario) {
                v.push(s.scenario);
            }
        }
        v
    }
}

/// Enumerated truth, or Monte-Carlo truth when the support is too large.
pub fn truth_of(spec: &DgpSpec, draws: usize, seed: u64) -> Result<TruthReport> {
    use transport_tmle_core::Error as CoreError;
    let exact = match spec {
        DgpSpec::Missing(d) => d.truth(ENUMERATION_CAP),
        DgpSpec::Survival(d) => d.truth(ENUMERATION_CAP),
    };
    match exact {
        Err(CoreError::EnumerationInfeasible { .. }) => Ok(match spec {
            DgpSpec::Missing(d) => d.truth_mc(draws, seed)?,
            DgpSpec::Survival(d) => d.truth_mc(draws, seed)?,
        }),
        other => Ok(other?),
    }
}

fn hazard_scheme(t: HazardTargeting) -> TargetingScheme {
    match t {
        HazardTargeting::Difference => TargetingScheme::JointAte,
        HazardTargeting::PerArm | HazardTargeting::Simultaneous => TargetingScheme::SeparateArms,
    }
}

fn replicate(report: &EstimateReport, truth: f64, scheme: TargetingScheme) -> Replicate {
    Replicate {
        ate: report.ate,
        se: report.sigma_n / (report.n as f64).sqrt(),
        covered: report.ci_lo <= truth && truth <= report.ci_hi,
        abs_score: report.eic_mean.abs(),
        score_solved: report.score_solved(scheme),
    }
}

/// Per-scenario estimator configurations.
fn configs(spec: &DgpSpec, scenarios: &[Scenario], overrides: &Overrides) -> Vec<EstimatorConfig> {
    scenarios
        .iter()
        .map(|&s| {
            let mut c = match spec {
                DgpSpec::Missing(d) => {
                    EstimatorConfig::MissingOutcome(TmleConfig::new(misspecify(&d.correct_spec(), &d.wrong_spec(), s)))
                }
                DgpSpec::Survival(d) => EstimatorConfig::Survival(SurvivalConfig::new(misspecify_hazards(
                    &d.correct_spec(),
                    &d.wrong_spec(),
                    s,
                ))),
            };
            overrides.apply_estimator(&mut c);
            c
        })
        .collect()
}

/// `[scenario][estimator]` outcomes of one replication.
type RepOutcome = Vec<[Option<Replicate>; 2]>;

fn run_missing(d: &MissingDgp, cfgs: &[EstimatorConfig], n: usize, seed: u64, rep: u64, truth: f64) -> Result<RepOutcome> {
    let data = d.generate_replication(n, seed, rep)?;
    Ok(cfgs
        .iter()
        .map(|c| {
            let EstimatorConfig::MissingOutcome(c) = c else { unreachable!() };
            let full = estimate(&data, c).ok();
            let la = fit_less_aggressive(&data, c).ok().map(|f| f.report);
            [full, la].map(|r| r.map(|r| replicate(&r, truth, c.targeting)))
        })
        .collect())
}

fn run_survival(d: &SurvivalDgp, cfgs: &[EstimatorConfig], n: usize, seed: u64, rep: u64, truth: f64) -> Result<RepOutcome> {
    let data = d.generate_replication(n, seed, rep)?;
    Ok(cfgs
        .iter()
        .map(|c| {
            let EstimatorConfig::Survival(c) = c else { unreachable!() };
            let scheme = hazard_scheme(c.targeting);
            let full = estimate_survival(&data, c).ok();
            let la = fit_less_aggressive_survival(&data, c).ok().map(|f| f.report);
            [full, la].map(|r| r.map(|r| replicate(&r, truth, scheme)))
        })
        .collect())
}

/// Runs the study. Replications run in parallel and are aggregated in
/// replication order, so the report depends only on the inputs.
pub fn run_study(spec: &DgpSpec, config: &StudyConfig) -> Result<StudyReport> {
    spec.validate()?;
    if config.n == 0 || config.replications < 2 {
        return Err(Error::config("a study needs n > 0 and at least two replications"));
    }
    if config.scenarios.is_empty() {
        return Err(Error::config("no scenarios selected"));
    }
    let truth = truth_of(spec, config.truth_draws, config.seed)?;
    let cfgs = configs(spec, &config.scenarios, &config.overrides);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = config.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build().map_err(|e| Error::config(e.to_string()))?;
    let outcomes: Vec<RepOutcome> = pool.install(|| {
        (0..config.replications as u64)
            .into_par_iter()
            .map(|rep| match spec {
                DgpSpec::Missing(d) => run_missing(d, &cfgs, config.n, config.seed, rep, truth.ate),
                DgpSpec::Survival(d) => run_survival(d, &cfgs, config.n, config.seed, rep, truth.ate),
            })
            .collect::<Result<_>>()
    })?;

    let mut rows = Vec::new();
    for (i, &scenario) in config.scenarios.iter().enumerate() {
        for (k, estimator) in Estimator::BOTH.into_iter().enumerate() {
            let reps: Vec<Option<Replicate>> = outcomes.iter().map(|o| o[i][k]).collect();
            rows.push(Summary::from_replicates(scenario, estimator, truth.ate, &reps));
        }
    }
    Ok(StudyReport {
        estimand: match spec {
            DgpSpec::Missing(_) => "missing-outcome".into(),
            DgpSpec::Survival(_) => "survival".into(),
        },
        n: config.n,
        replications: config.replications,
        seed: config.seed,
        truth,
        rows,
    })
}
