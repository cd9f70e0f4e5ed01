//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use transport_tmle_core::dgp::{transport_missing, transport_survival, DgpSpec, Scenario, TruthReport};
use transport_tmle_core::federated::{
    apply_export, export_missing, export_survival, TargetData, TargetedModelExport,
};
use transport_tmle_core::nuisance::DensityRatio;
use transport_tmle_core::survival::{estimate_survival, HazardFluctuation, HazardTargeting};
use transport_tmle_core::tmle::{estimate, FluctuationMode, TargetingScheme};
use transport_tmle_core::{DataSummary, EstimateReport, MissingDataset, Schema, Strata, SurvivalDataset, Truncation};

use crate::config::{parse_columns, parse_truncation, parse_variant, EstimatorConfig, Overrides, RunConfig};
use crate::error::{Error, Result};
use crate::io::{pad_target_columns, read_json, read_table, to_json, write_json, write_table, write_text};
use crate::study::{run_study, truth_of, StudyConfig};

#[derive(Parser, Debug)]
#[command(name = "transport-tmle", version)]
#[command(about = "Transport treatment effects from a source to a target population with TMLE")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a data file against a schema and print its summary.
    Validate(ValidateArgs),
    /// Missing-outcome estimator.
    Estimate(EstimateArgs),
    /// Right-censored survival estimator.
    EstimateSurvival(EstimateArgs),
    /// Draw a dataset from a generator.
    Simulate(SimulateArgs),
    /// Ground truth of a generator.
    Truth(TruthArgs),
    /// Replicated double-robustness and coverage study.
    Study(StudyArgs),
    /// Fit the less-aggressive estimator on source data and export the targeted model.
    ExportModel(ExportArgs),
    /// Complete estimation at the target site from an exported model.
    ApplyModel(ApplyArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct SchemaArgs {
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated covariate columns W.
    #[arg(long)]
    pub w: Option<String>,
    /// Comma-separated target covariates V (a subset of W; defaults to W).
    #[arg(long)]
    pub v: Option<String>,
    /// Time point of the survival estimand.
    #[arg(long)]
    pub t0: Option<u32>,
    /// Last follow-up period.
    #[arg(long)]
    pub tau: Option<u32>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TuningArgs {
    /// Probability truncation bounds as `lower,upper`.
    #[arg(long, value_parser = parse_truncation)]
    pub truncation: Option<Truncation>,
    /// odds-with-marginal, odds or unit.
    #[arg(long, value_parser = parse_variant::<DensityRatio>)]
    pub density_ratio: Option<DensityRatio>,
    /// Force the density ratio to one.
    #[arg(long)]
    pub less_aggressive: bool,
    /// covariate, weight or linear.
    #[arg(long, value_parser = parse_variant::<FluctuationMode>)]
    pub fluctuation: Option<FluctuationMode>,
    /// separate-arms or joint-ate.
    #[arg(long, value_parser = parse_variant::<TargetingScheme>)]
    pub targeting: Option<TargetingScheme>,
    /// per-arm, simultaneous or difference.
    #[arg(long, value_parser = parse_variant::<HazardTargeting>)]
    pub hazard_targeting: Option<HazardTargeting>,
    /// ratio-weight or ratio-covariate.
    #[arg(long, value_parser = parse_variant::<HazardFluctuation>)]
    pub hazard_fluctuation: Option<HazardFluctuation>,
    /// Targeting passes (stage repeats or hazard iterations).
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

impl TuningArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            truncation: self.truncation,
            density_ratio: self.density_ratio,
            less_aggressive: self.less_aggressive,
            fluctuation: self.fluctuation,
            targeting: self.targeting,
            hazard_targeting: self.hazard_targeting,
            hazard_fluctuation: self.hazard_fluctuation,
            max_iterations: self.max_iterations,
        }
    }
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// Treat the data as survival data.
    #[arg(long)]
    pub survival: bool,
    /// Which strata the file must contain: both, source or target.
    #[arg(long, default_value = "both", value_parser = parse_variant::<Strata>)]
    pub strata: Strata,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Report path; the report goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    Missing,
    Survival,
}

#[derive(Args, Debug, Clone)]
pub struct GeneratorArgs {
    /// Generator specification (JSON).
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    pub spec: Option<PathBuf>,
    /// A built-in generator.
    #[arg(long, value_enum)]
    pub builtin: Option<Builtin>,
}

impl GeneratorArgs {
    fn load(&self) -> Result<DgpSpec> {
        let spec = match (&self.spec, self.builtin) {
            (Some(path), _) => read_json(path)?,
            (None, Some(Builtin::Missing)) => DgpSpec::Missing(transport_missing()),
            (None, Some(Builtin::Survival)) => DgpSpec::Survival(transport_survival()),
            (None, None) => return Err(Error::config("either --spec or --builtin is required")),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replication stream within the seed.
    #[arg(long, default_value_t = 0)]
    pub rep: u64,
    /// Pooled output.
    #[arg(long, required_unless_present_any = ["source_out", "write_spec"])]
    pub out: Option<PathBuf>,
    /// Source rows only.
    #[arg(long, requires = "target_out")]
    pub source_out: Option<PathBuf>,
    /// Target rows only, covariates V.
    #[arg(long, requires = "source_out")]
    pub target_out: Option<PathBuf>,
    /// Also write the generator specification.
    #[arg(long)]
    pub write_spec: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TruthArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Monte-Carlo draws when the support is too large to enumerate.
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_draws: usize,
    /// Always use Monte Carlo.
    #[arg(long)]
    pub monte_carlo: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Comma-separated scenarios: both-correct, q-only, g-only, neither.
    #[arg(long)]
    pub scenarios: Option<String>,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Summary table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Source-site data (S = 1 rows only).
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// Survival problem (otherwise missing-outcome unless the config says so).
    #[arg(long)]
    pub survival: bool,
    /// Number of target units the bundle will be applied to.
    #[arg(long)]
    pub n_target: usize,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ApplyArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Target-site covariates (S = 0 rows only).
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// JSON document written by the estimation subcommands.
#[derive(Debug, Serialize)]
pub struct EstimateOutput<'a> {
    pub data: DataSummary,
    pub config: &'a RunConfig,
    pub report: &'a EstimateReport,
}

fn run_config(args: &SchemaArgs, survival: bool) -> Result<RunConfig> {
    let columns = args.w.as_deref().map(parse_columns);
    let mut config = match &args.config {
        Some(path) => {
            let mut c: RunConfig = read_json(path)?;
            if c.is_survival() != survival {
                return Err(Error::config(format!(
                    "{} holds a {} configuration",
                    path.display(),
                    if c.is_survival() { "survival" } else { "missing-outcome" }
                )));
            }
            if let Some(w) = &columns {
                c.schema.w_columns = w.clone();
            }
            c
        }
        None => {
            let w = columns.ok_or_else(|| Error::config("--w is required without --config"))?;
            if survival {
                let (Some(t0), Some(tau)) = (args.t0, args.tau) else {
                    return Err(Error::config("survival needs --t0 and --tau"));
                };
                RunConfig::survival_main_effects(Schema::survival(&w, t0, tau))
            } else {
                let v = args.v.as_deref().map(parse_columns).unwrap_or_else(|| w.clone());
                RunConfig::missing_main_effects(Schema::missing_outcome(&w, &v))
            }
        }
    };
    if let Some(v) = &args.v {
        config.schema.v_columns = parse_columns(v);
    }
    if survival {
        config.schema.v_columns = config.schema.w_columns.clone();
    }
    if args.t0.is_some() {
        config.schema.t0 = args.t0;
    }
    if args.tau.is_some() {
        config.schema.tau = args.tau;
    }
    Ok(config)
}

enum Loaded {
    Missing(MissingDataset),
    Survival(SurvivalDataset),
}

impl Loaded {
    fn summary(&self) -> DataSummary {
        match self {
            Loaded::Missing(d) => d.summary(),
            Loaded::Survival(d) => d.summary(),
        }
    }
}

fn load_data(path: &Path, schema: &Schema, survival: bool, strata: Strata) -> Result<Loaded> {
    let mut table = read_table(path)?;
    if strata == Strata::Target {
        let header = if survival {
            schema.survival_header()
        } else {
            schema.missing_header()
        };
        // covariates the target holds must be present; the rest is absent by design
        let optional: Vec<String> = header.into_iter().filter(|c| !schema.v_columns.contains(c)).collect();
        pad_target_columns(&mut table, &optional);
    }
    Ok(if survival {
        Loaded::Survival(SurvivalDataset::from_raw_with(&table, schema, strata)?)
    } else {
        Loaded::Missing(MissingDataset::from_raw_with(&table, schema.clone(), strata)?)
    })
}

fn emit(out: Option<&Path>, json: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn summary_line(r: &EstimateReport) -> String {
    format!(
        "ATE {:.5} (95% CI {:.5} to {:.5}), psi1 {:.5}, psi0 {:.5}, n = {}",
        r.ate, r.ci_lo, r.ci_hi, r.psi1, r.psi0, r.n
    )
}

fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let config = run_config(&args.schema, args.survival)?;
    let data = load_data(&args.data, &config.schema, args.survival, args.strata)?;
    print!("{}", to_json(&data.summary()));
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs, survival: bool) -> Result<()> {
    let mut config = run_config(&args.schema, survival)?;
    args.tuning.overrides().apply(&mut config);
    config.validate()?;
    let data = load_data(&args.data, &config.schema, survival, Strata::Both)?;
    let report = match (&data, &config.estimator) {
        (Loaded::Missing(d), EstimatorConfig::MissingOutcome(c)) => estimate(d, c)?,
        (Loaded::Survival(d), EstimatorConfig::Survival(c)) => estimate_survival(d, c)?,
        _ => unreachable!("configuration matches the subcommand"),
    };
    let output = EstimateOutput {
        data: data.summary(),
        config: &config,
        report: &report,
    };
    emit(args.out.as_deref(), &to_json(&output))?;
    if args.out.is_some() {
        println!("{}", summary_line(&report));
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let spec = args.generator.load()?;
    if let Some(path) = &args.write_spec {
        write_json(path, &spec)?;
    }
    if args.out.is_none() && args.source_out.is_none() {
        return Ok(());
    }
    let table = match &spec {
        DgpSpec::Missing(d) => d.generate_replication(args.n, args.seed, args.rep)?.to_raw(),
        DgpSpec::Survival(d) => d.generate_replication(args.n, args.seed, args.rep)?.to_raw(),
    };
    if let Some(path) = &args.out {
        write_table(path, &table)?;
    }
    if let (Some(src), Some(tgt)) = (&args.source_out, &args.target_out) {
        let s = table.header.iter().position(|h| h == "s").expect("s column");
        let (source, target): (Vec<_>, Vec<_>) = table.rows.iter().cloned().partition(|r| r[s] == Some(1.0));
        write_table(
            src,
            &transport_tmle_core::RawTable {
                header: table.header.clone(),
                rows: source,
            },
        )?;
        write_table(tgt, &target_columns(&spec, &table.header, target))?;
    }
    Ok(())
}

/// Keeps only `s` and the covariates a target site holds.
fn target_columns(spec: &DgpSpec, header: &[String], rows: Vec<Vec<Option<f64>>>) -> transport_tmle_core::RawTable {
    let mut keep = vec!["s".to_string()];
    match spec {
        DgpSpec::Missing(d) => keep.extend(d.v_columns.iter().cloned()),
        DgpSpec::Survival(d) => keep.extend(d.w_columns.iter().cloned()),
    }
    let idx: Vec<usize> = keep
        .iter()
        .map(|k| header.iter().position(|h| h == k).expect("generated column"))
        .collect();
    transport_tmle_core::RawTable {
        header: keep,
        rows: rows.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect(),
    }
}

fn cmd_truth(args: &TruthArgs) -> Result<()> {
    let spec = args.generator.load()?;
    let truth: TruthReport = if args.monte_carlo {
        match &spec {
            DgpSpec::Missing(d) => d.truth_mc(args.mc_draws, args.seed)?,
            DgpSpec::Survival(d) => d.truth_mc(args.mc_draws, args.seed)?,
        }
    } else {
        truth_of(&spec, args.mc_draws, args.seed)?
    };
    emit(args.out.as_deref(), &to_json(&truth))
}

fn cmd_study(args: &StudyArgs) -> Result<()> {
    let spec = args.generator.load()?;
    let mut config = StudyConfig::new(args.n, args.reps, args.seed);
    config.jobs = args.jobs;
    config.overrides = args.tuning.overrides();
    if let Some(s) = &args.scenarios {
        config.scenarios = parse_columns(s)
            .iter()
            .map(|name| parse_variant::<Scenario>(name).map_err(Error::config))
            .collect::<Result<_>>()?;
    }
    let report = run_study(&spec, &config)?;
    print!("{}", report.table());
    if let Some(path) = &args.csv {
        write_text(path, &report.to_csv())?;
    }
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> Result<()> {
    let survival = args.survival
        || match &args.schema.config {
            Some(path) => read_json::<RunConfig>(path)?.is_survival(),
            None => false,
        };
    let mut config = run_config(&args.schema, survival)?;
    args.tuning.overrides().apply(&mut config);
    config.validate()?;
    let data = load_data(&args.data, &config.schema, survival, Strata::Source)?;
    let export = match (&data, &config.estimator) {
        (Loaded::Missing(d), EstimatorConfig::MissingOutcome(c)) => export_missing(d, c, args.n_target)?,
        (Loaded::Survival(d), EstimatorConfig::Survival(c)) => export_survival(d, c, args.n_target)?,
        _ => unreachable!("configuration matches the problem"),
    };
    write_json(&args.out, &export)?;
    println!(
        "exported {} source contributions (P(S=1) = {:.4})",
        export.n_source, export.p_s1
    );
    Ok(())
}

fn cmd_apply(args: &ApplyArgs) -> Result<()> {
    let export: TargetedModelExport = read_json(&args.bundle)?;
    export.check_version()?;
    let schema = export.target_schema();
    let survival = schema.t0.is_some();
    let report = match load_data(&args.target, &schema, survival, Strata::Target)? {
        Loaded::Missing(d) => apply_export(&export, TargetData::Missing(&d))?,
        Loaded::Survival(d) => apply_export(&export, TargetData::Survival(&d))?,
    };
    emit(args.out.as_deref(), &to_json(&report))?;
    if args.out.is_some() {
        println!("{}", summary_line(&report));
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Estimate(a) => cmd_estimate(a, false),
        Command::EstimateSurvival(a) => cmd_estimate(a, true),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Truth(a) => cmd_truth(a),
        Command::Study(a) => cmd_study(a),
        Command::ExportModel(a) => cmd_export(a),
        Command::ApplyModel(a) => cmd_apply(a),
    }
}
