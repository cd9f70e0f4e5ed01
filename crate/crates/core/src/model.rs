//! Fitted (or injected) nuisance functions and their prediction interface.
//!
//! Models refer to their inputs by name. Before use a model is bound to the
//! feature layout a pipeline supplies, which resolves the names once.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::design::{logit, Design, DesignSpec, Link};
use crate::error::{Error, Result};
use crate::glm::{self, FitWarning};
use crate::linalg::Matrix;

/// Probability truncation applied to every mechanism that enters a
/// denominator of a clever covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub lower: f64,
    pub upper: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            lower: 0.005,
            upper: 0.995,
        }
    }
}

impl Truncation {
    pub const NONE: Truncation = Truncation {
        lower: 0.0,
        upper: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.lower >= 0.0 && self.upper <= 1.0 && self.lower < self.upper) {
            return Err(Error::invalid(format!(
                "truncation bounds [{}, {}] are not a sub-interval of [0, 1]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, p: f64) -> f64 {
        p.clamp(self.lower, self.upper)
    }

    /// True when `p` sits on (or beyond) a bound and was altered or pinned.
    #[inline]
    pub fn at_bound(&self, p: f64) -> bool {
        p <= self.lower || p >= self.upper
    }
}

/// Bound for outcome-regression and hazard predictions on the probability
/// scale so that their logits stay finite.
pub const OUTCOME_BOUND: f64 = 1e-9;

#[inline]
pub fn bound_probability(p: f64) -> f64 {
    p.clamp(OUTCOME_BOUND, 1.0 - OUTCOME_BOUND)
}

#[inline]
pub fn bounded_logit(p: f64) -> f64 {
    logit(bound_probability(p))
}

/// A generalized linear model over named features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub features: Vec<String>,
    pub design: DesignSpec,
    #[serde(default)]
    pub tau: Option<u32>,
    pub coefficients: Vec<f64>,
    /// Affine map `(lo, hi)` from the unit interval to the response scale,
    /// used when a logit link models a bounded continuous response.
    #[serde(default)]
    pub response_scale: Option<(f64, f64)>,
    #[serde(default = "yes")]
    pub converged: bool,
    #[serde(default)]
    pub weighted: bool,
    #[serde(default)]
    pub warnings: Vec<FitWarning>,
}

fn yes() -> bool {
    true
}

impl RegressionFit {
    /// A model with given coefficients (no fitting).
    pub fn with_coefficients(
        features: Vec<String>,
        design: DesignSpec,
        tau: Option<u32>,
        coefficients: Vec<f64>,
    ) -> Result<Self> {
        let compiled = design.compile(&features, tau)?;
        if compiled.ncols() != coefficients.len() {
            return Err(Error::invalid(format!(
                "design has {} columns but {} coefficients were given",
                compiled.ncols(),
                coefficients.len()
            )));
        }
        Ok(RegressionFit {
            features,
            design,
            tau,
            coefficients,
            response_scale: None,
            converged: true,
            weighted: false,
            warnings: Vec::new(),
        })
    }

    pub fn link(&self) -> Link {
        self.design.link
    }

    /// Convenience prediction for a row laid out as `self.features`. Prefer
    /// [`NuisanceModel::bind`] in loops.
    pub fn predict(&self, x: &[f64], t: Option<u32>, offset: f64) -> Result<f64> {
        let design = self.design.compile(&self.features, self.tau)?;
        let eta = design.eta(&self.coefficients, x, t) + offset;
        Ok(scale_back(self.response_scale, self.design.link.inverse(eta)))
    }
}

#[inline]
fn scale_back(scale: Option<(f64, f64)>, v: f64) -> f64 {
    match scale {
        Some((lo, hi)) => lo + (hi - lo) * v,
        None => v,
    }
}

/// Lookup table over discrete feature values (used for injected truths).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableModel {
    pub features: Vec<String>,
    pub entries: Vec<TableEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub key: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum NuisanceModel {
    Glm(RegressionFit),
    Constant { value: f64 },
    Table(TableModel),
}

impl NuisanceModel {
    pub fn constant(value: f64) -> Self {
        NuisanceModel::Constant { value }
    }

    /// Feature names the model reads; empty for constants.
    pub fn features(&self) -> &[String] {
        match self {
            NuisanceModel::Glm(f) => &f.features,
            NuisanceModel::Constant { .. } => &[],
            NuisanceModel::Table(t) => &t.features,
        }
    }

    /// Names actually needed for prediction.
    pub fn required_features(&self) -> Vec<&str> {
        match self {
            NuisanceModel::Glm(f) => {
                let mut cols: Vec<&str> = f.design.referenced_columns().collect();
                cols.sort_unstable();
                cols.dedup();
                cols
            }
            NuisanceModel::Constant { .. } => Vec::new(),
            NuisanceModel::Table(t) => t.features.iter().map(String::as_str).collect(),
        }
    }

    /// Resolves the model's feature names against `available`, the layout of
    /// the rows that will be passed to [`BoundModel::predict`].
    pub fn bind(&self, available: &[String]) -> Result<BoundModel> {
        let missing = |name: &str| {
            Error::SchemaMismatch(format!("model feature `{name}` is not available"))
        };
        Ok(match self {
            NuisanceModel::Glm(f) => {
                for c in f.design.referenced_columns() {
                    if !available.iter().any(|a| a == c) {
                        return Err(missing(c));
                    }
                }
                let design = f.design.compile(available, f.tau)?;
                if design.ncols() != f.coefficients.len() {
                    return Err(Error::invalid("coefficient count does not match design"));
                }
                BoundModel::Glm {
                    design,
                    coefficients: f.coefficients.clone(),
                    link: f.design.link,
                    scale: f.response_scale,
                }
            }
            NuisanceModel::Constant { value } => BoundModel::Constant(*value),
            NuisanceModel::Table(t) => {
                let idx = t
                    .features
                    .iter()
                    .map(|name| {
                        available
                            .iter()
                            .position(|a| a == name)
                            .ok_or_else(|| missing(name))
                    })
                    .collect::<Result<Vec<_>>>()?;
                BoundModel::Table {
                    idx,
                    entries: t.entries.clone(),
                }
            }
        })
    }
}

/// A model ready for prediction against a fixed feature layout.
#[derive(Debug, Clone)]
pub enum BoundModel {
    Glm {
        design: Design,
        coefficients: Vec<f64>,
        link: Link,
        scale: Option<(f64, f64)>,
    },
    Constant(f64),
    Table {
        idx: Vec<usize>,
        entries: Vec<TableEntry>,
    },
}

impl BoundModel {
    /// Prediction on the response scale. Table lookups of unseen keys give
    /// NaN.
    #[inline]
    pub fn predict(&self, x: &[f64], t: Option<u32>) -> f64 {
        match self {
            BoundModel::Glm {
                design,
                coefficients,
                link,
                scale,
            } => scale_back(*scale, link.inverse(design.eta(coefficients, x, t))),
            BoundModel::Constant(v) => *v,
            BoundModel::Table { idx, entries } => entries
                .iter()
                .find(|e| e.key.iter().zip(idx).all(|(k, &i)| *k == x[i]))
                .map_or(f64::NAN, |e| e.value),
        }
    }
}

/// One row of a regression sample.
#[derive(Debug, Clone, Copy)]
pub struct FitRow<'a> {
    pub x: &'a [f64],
    pub t: Option<u32>,
    pub y: f64,
    pub weight: f64,
}

/// Fits a GLM with the given design. `response_scale` maps bounded
/// continuous responses onto `[0, 1]` for logit fits and is ignored for the
/// identity link. A logit-link fit whose responses are
/// all 0 or all 1 has its MLE on the boundary and becomes a constant model.
pub fn fit_model<'a>(
    spec: &DesignSpec,
    features: &[String],
    tau: Option<u32>,
    rows: impl IntoIterator<Item = FitRow<'a>>,
    response_scale: Option<(f64, f64)>,
) -> Result<NuisanceModel> {
    let design = spec.compile(features, tau)?;
    let p = design.ncols();
    // Only the logit link needs responses on the unit interval.
    let response_scale = response_scale.filter(|_| spec.link == Link::Logit);
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    let mut buf = Vec::with_capacity(p);
    for r in rows {
        design.row_into(r.x, r.t, &mut buf);
        data.extend_from_slice(&buf);
        let yi = match response_scale {
            Some((lo, hi)) => (r.y - lo) / (hi - lo),
            None => r.y,
        };
        y.push(yi);
        w.push(r.weight);
    }
    if y.is_empty() {
        return Err(Error::invalid("no rows to fit"));
    }
    let weighted = w.iter().any(|&v| v != 1.0);
    let x = Matrix::from_vec(y.len(), p, data);
    let weights = if weighted { Some(w.as_slice()) } else { None };

    if spec.link == Link::Logit {
        let mut active = y.iter().zip(&w).filter(|(_, &wi)| wi > 0.0).map(|(v, _)| *v);
        if let Some(first) = active.next() {
            if (first == 0.0 || first == 1.0) && active.all(|v| v == first) {
                return Ok(NuisanceModel::constant(scale_back(response_scale, first)));
            }
        }
    }

    let sol = match spec.link {
        Link::Logit => glm::fit_logistic(&x, &y, weights, None)?,
        Link::Identity => glm::fit_linear(&x, &y, weights)?,
    };
    Ok(NuisanceModel::Glm(RegressionFit {
        features: features.to_vec(),
        design: spec.clone(),
        tau,
        coefficients: sol.coefficients,
        response_scale,
        converged: sol.converged,
        weighted,
        warnings: sol.warnings,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::expit;
    use alloc::string::ToString;
    use alloc::vec;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn zero_coefficients_logit_predicts_half() {
        let fit = RegressionFit::with_coefficients(
            names(&["x"]),
            DesignSpec::main_effects(&["x"], Link::Logit),
            None,
            vec![0.0, 0.0],
        )
        .unwrap();
        assert_eq!(fit.predict(&[3.0], None, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn identity_prediction_is_linear() {
        let fit = RegressionFit::with_coefficients(
            names(&["x"]),
            DesignSpec::main_effects(&["x"], Link::Identity),
            None,
            vec![0.0, 1.0],
        )
        .unwrap();
        assert_eq!(fit.predict(&[2.0], None, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn hand_computed_logit_prediction() {
        let fit = RegressionFit::with_coefficients(
            names(&["x", "z"]),
            DesignSpec::main_effects(&["x", "z"], Link::Logit),
            None,
            vec![-0.5, 0.25, 2.0],
        )
        .unwrap();
        let p = fit.predict(&[2.0, 1.0], None, 0.5).unwrap();
        // eta = -0.5 + 0.5 + 2 + offset 0.5 = 2.5
        assert!((p - 1.0 / (1.0 + libm::exp(-2.5))).abs() < 1e-15);
        assert!((p - expit(2.5)).abs() < 1e-15);
    }

    #[test]
    fn bind_reorders_features() {
        let fit = NuisanceModel::Glm(
            RegressionFit::with_coefficients(
                names(&["a", "b"]),
                DesignSpec::main_effects(&["a", "b"], Link::Identity),
                None,
                vec![1.0, 10.0, 100.0],
            )
            .unwrap(),
        );
        let bound = fit.bind(&names(&["b", "a", "c"])).unwrap();
        assert_eq!(bound.predict(&[2.0, 3.0, 7.0], None), 1.0 + 30.0 + 200.0);
        assert!(matches!(
            fit.bind(&names(&["a"])),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn truncation_clamps() {
        let tr = Truncation::default();
        assert_eq!(tr.apply(0.0001), 0.005);
        assert_eq!(tr.apply(0.5), 0.5);
        assert_eq!(Truncation::NONE.apply(0.0001), 0.0001);
    }

    #[test]
    fn scaled_identity_fit_predicts_on_original_scale() {
        let feats = names(&["x"]);
        let xs = [[0.0], [1.0], [2.0]];
        let ys = [3.0, 5.0, 7.0];
        let rows = xs.iter().zip(ys).map(|(x, y)| FitRow {
            x,
            t: None,
            y,
            weight: 1.0,
        });
        let m = fit_model(
            &DesignSpec::main_effects(&["x"], Link::Identity),
            &feats,
            None,
            rows,
            Some((3.0, 7.0)),
        )
        .unwrap();
        let b = m.bind(&feats).unwrap();
        assert!((b.predict(&[1.5], None) - 6.0).abs() < 1e-12);
    }
}
