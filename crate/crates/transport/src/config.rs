//! Run configuration shared by the estimation subcommands.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use transport_tmle_core::nuisance::{DensityRatio, HazardSpec, NuisanceSpec};
use transport_tmle_core::survival::{HazardFluctuation, HazardTargeting, SurvivalConfig};
use transport_tmle_core::tmle::{FluctuationMode, TargetingScheme, TmleConfig};
use transport_tmle_core::{Schema, Truncation};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimand", rename_all = "kebab-case")]
pub enum EstimatorConfig {
    MissingOutcome(TmleConfig),
    Survival(SurvivalConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: Schema,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
}

fn one() -> usize {
    1
}

impl RunConfig {
    /// Main-effect logistic designs for every mechanism.
    pub fn missing_main_effects(schema: Schema) -> Self {
        let spec = NuisanceSpec::main_effects(&schema.w_columns, &schema.v_columns);
        RunConfig {
            schema,
            estimator: EstimatorConfig::MissingOutcome(TmleConfig::new(spec)),
            seed: 0,
            replications: 1,
        }
    }

    pub fn survival_main_effects(schema: Schema) -> Self {
        let spec = HazardSpec::main_effects(&schema.w_columns);
        RunConfig {
            schema,
            estimator: EstimatorConfig::Survival(SurvivalConfig::new(spec)),
            seed: 0,
            replications: 1,
        }
    }

    pub fn is_survival(&self) -> bool {
        matches!(self.estimator, EstimatorConfig::Survival(_))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config("replications must be positive"));
        }
        match &self.estimator {
            EstimatorConfig::MissingOutcome(c) => {
                c.truncation.validate()?;
                if c.max_stage_repeats == 0 {
                    return Err(Error::config("max_stage_repeats must be positive"));
                }
                if let Some((lo, hi)) = c.y_bounds {
                    if lo >= hi || !lo.is_finite() || !hi.is_finite() {
                        return Err(Error::config("y_bounds must be finite with lower < upper"));
                    }
                }
            }
            EstimatorConfig::Survival(c) => {
                c.truncation.validate()?;
                if c.max_iterations == 0 {
                    return Err(Error::config("max_iterations must be positive"));
                }
                match (self.schema.t0, self.schema.tau) {
                    (Some(t0), Some(tau)) if 1 <= t0 && t0 <= tau => {}
                    _ => return Err(Error::config("survival needs 1 <= t0 <= tau in the schema")),
                }
            }
        }
        Ok(())
    }
}

/// Command-line settings that take precedence over a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub truncation: Option<Truncation>,
    pub density_ratio: Option<DensityRatio>,
    pub less_aggressive: bool,
    pub fluctuation: Option<FluctuationMode>,
    pub targeting: Option<TargetingScheme>,
    pub hazard_targeting: Option<HazardTargeting>,
    pub hazard_fluctuation: Option<HazardFluctuation>,
    pub max_iterations: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        self.apply_estimator(&mut config.estimator);
    }

    pub fn apply_estimator(&self, estimator: &mut EstimatorConfig) {
        let ratio = if self.less_aggressive {
            Some(DensityRatio::Unit)
        } else {
            self.density_ratio
        };
        match estimator {
            EstimatorConfig::MissingOutcome(c) => {
                set(&mut c.truncation, self.truncation);
                set(&mut c.density_ratio, ratio);
                set(&mut c.fluctuation, self.fluctuation);
                set(&mut c.targeting, self.targeting);
                set(&mut c.max_stage_repeats, self.max_iterations);
            }
            EstimatorConfig::Survival(c) => {
                set(&mut c.truncation, self.truncation);
                set(&mut c.density_ratio, ratio);
                set(&mut c.targeting, self.hazard_targeting);
                set(&mut c.fluctuation, self.hazard_fluctuation);
                set(&mut c.max_iterations, self.max_iterations);
            }
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Parses a kebab-case variant name through the type's serde names.
pub fn parse_variant<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// `lower,upper`.
pub fn parse_truncation(s: &str) -> std::result::Result<Truncation, String> {
    let (lo, hi) = s.split_once(',').ok_or("expected `lower,upper`")?;
    let t = Truncation {
        lower: lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?,
        upper: hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?,
    };
    t.validate().map_err(|e| e.to_string())?;
    Ok(t)
}

/// Comma-separated column names; empty input is an empty list.
pub fn parse_columns(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn missing() -> RunConfig {
        RunConfig::missing_main_effects(Schema::missing_outcome(&["w1", "w2"], &["w1"]))
    }

    #[test]
    fn config_json_round_trip() {
        let c = missing();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains(r#""estimand":"missing-outcome""#));
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
    }

    #[test]
    fn overrides_win() {
        let mut c = missing();
        Overrides {
            less_aggressive: true,
            density_ratio: Some(DensityRatio::Odds),
            fluctuation: Some(FluctuationMode::Linear),
            ..Default::default()
        }
        .apply(&mut c);
        let EstimatorConfig::MissingOutcome(t) = &c.estimator else { unreachable!() };
        assert_eq!(t.density_ratio, DensityRatio::Unit);
        assert_eq!(t.fluctuation, FluctuationMode::Linear);
    }

    #[test]
    fn parsers() {
        assert_eq!(parse_variant::<TargetingScheme>("joint-ate"), Ok(TargetingScheme::JointAte));
        assert!(parse_variant::<TargetingScheme>("joint").is_err());
        assert_eq!(parse_truncation("0.01, 0.99").unwrap().upper, 0.99);
        assert!(parse_truncation("0.9,0.1").is_err());
        assert_eq!(parse_columns("w1, w2,"), ["w1", "w2"]);
    }

    #[test]
    fn survival_needs_ordered_times() {
        let mut c = RunConfig::survival_main_effects(Schema::survival(&["w1"], 3, 2));
        assert!(c.validate().is_err());
        c.schema.t0 = Some(2);
        c.validate().unwrap();
    }
}
