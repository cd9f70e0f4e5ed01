//! Named regression designs compiled against a model's feature list.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    #[default]
    Logit,
    Identity,
}

impl Link {
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logit => expit(eta),
            Link::Identity => eta,
        }
    }
}

/// How the discrete time index enters a hazard design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeEncoding {
    #[default]
    None,
    /// `t` as a numeric covariate.
    Linear,
    /// One indicator per period `1..=tau`, replacing the intercept.
    Indicators,
    /// Every term (intercept included) crossed with the period indicators;
    /// nonparametric in `t` within each covariate stratum.
    Crossed,
}

/// A design over named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub columns: Vec<String>,
    /// Product terms; each entry lists two or more columns.
    #[serde(default)]
    pub interactions: Vec<Vec<String>>,
    #[serde(default = "default_true")]
    pub include_intercept: bool,
    #[serde(default)]
    pub link: Link,
    #[serde(default)]
    pub time: TimeEncoding,
}

fn default_true() -> bool {
    true
}

impl DesignSpec {
    pub fn main_effects<S: AsRef<str>>(columns: &[S], link: Link) -> Self {
        DesignSpec {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            interactions: Vec::new(),
            include_intercept: true,
            link,
            time: TimeEncoding::None,
        }
    }

    pub fn intercept_only(link: Link) -> Self {
        Self::main_effects::<&str>(&[], link)
    }

    /// Main effects plus every higher-order product of `columns`. For binary
    /// columns this spans all functions of the columns.
    pub fn saturated<S: AsRef<str>>(columns: &[S], link: Link) -> Self {
        let names: Vec<String> = columns.iter().map(|c| c.as_ref().to_string()).collect();
        let k = names.len();
        assert!(k < 20, "saturated design over too many columns");
        let mut interactions = Vec::new();
        for mask in 1u32..(1 << k) {
            if mask.count_ones() < 2 {
                continue;
            }
            let term: Vec<String> = (0..k)
                .filter(|j| mask & (1 << j) != 0)
                .map(|j| names[j].clone())
                .collect();
            interactions.push(term);
        }
        interactions.sort_by_key(Vec::len);
        DesignSpec {
            columns: names,
            interactions,
            include_intercept: true,
            link,
            time: TimeEncoding::None,
        }
    }

    pub fn with_time(mut self, time: TimeEncoding) -> Self {
        self.time = time;
        self
    }

    pub fn with_interaction<S: AsRef<str>>(mut self, term: &[S]) -> Self {
        self.interactions
            .push(term.iter().map(|c| c.as_ref().to_string()).collect());
        self
    }

    /// Every column name the design references.
    pub fn referenced_columns(&self) -> impl Iterator<Item = &str> {
        self.columns
            .iter()
            .chain(self.interactions.iter().flatten())
            .map(String::as_str)
    }

    /// Resolves names against `features`. `tau` is required by
    /// indicator-based time encodings.
    pub fn compile(&self, features: &[String], tau: Option<u32>) -> Result<Design> {
        let index = |name: &str| -> Result<usize> {
            features
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| Error::UnknownColumn(name.to_string()))
        };
        let mut terms = Vec::with_capacity(self.columns.len() + self.interactions.len());
        for c in &self.columns {
            terms.push(Term::single(index(c)?));
        }
        for inter in &self.interactions {
            if inter.is_empty() {
                return Err(Error::invalid("empty interaction term"));
            }
            for c in inter {
                if !self.columns.contains(c) {
                    return Err(Error::invalid(alloc::format!(
                        "interaction references `{c}` which is not a main effect"
                    )));
                }
            }
            let idx = inter.iter().map(|c| index(c)).collect::<Result<Vec<_>>>()?;
            terms.push(Term(idx));
        }
        let tau = match self.time {
            TimeEncoding::Indicators | TimeEncoding::Crossed => match tau {
                Some(t) if t >= 1 => t,
                _ => {
                    return Err(Error::invalid(
                        "time-indicator design needs a positive tau",
                    ))
                }
            },
            _ => tau.unwrap_or(0),
        };
        Ok(Design {
            intercept: self.include_intercept,
            terms,
            time: self.time,
            tau,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Term(Vec<usize>);

impl Term {
    fn single(i: usize) -> Self {
        Term(alloc::vec![i])
    }

    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        self.0.iter().map(|&i| x[i]).product()
    }
}

/// A design bound to feature positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    intercept: bool,
    terms: Vec<Term>,
    time: TimeEncoding,
    tau: u32,
}

impl Design {
    fn block_len(&self) -> usize {
        usize::from(self.intercept) + self.terms.len()
    }

    pub fn ncols(&self) -> usize {
        match self.time {
            TimeEncoding::None => self.block_len(),
            TimeEncoding::Linear => self.block_len() + 1,
            TimeEncoding::Indicators => self.tau as usize + self.terms.len(),
            TimeEncoding::Crossed => self.tau as usize * (1 + self.terms.len()),
        }
    }

    pub fn needs_time(&self) -> bool {
        self.time != TimeEncoding::None
    }

    fn check_time(&self, t: Option<u32>) -> u32 {
        match (self.time, t) {
            (TimeEncoding::None, _) => 0,
            (_, Some(t)) => t,
            (_, None) => panic!("time-dependent design evaluated without a time index"),
        }
    }

    /// Writes the design row for features `x` at period `t`.
    pub fn row_into(&self, x: &[f64], t: Option<u32>, out: &mut Vec<f64>) {
        out.clear();
        let t = self.check_time(t);
        match self.time {
            TimeEncoding::None | TimeEncoding::Linear => {
                if self.intercept {
                    out.push(1.0);
                }
                out.extend(self.terms.iter().map(|term| term.eval(x)));
                if self.time == TimeEncoding::Linear {
                    out.push(f64::from(t));
                }
            }
            TimeEncoding::Indicators => {
                for s in 1..=self.tau {
                    out.push(if s == t { 1.0 } else { 0.0 });
                }
                out.extend(self.terms.iter().map(|term| term.eval(x)));
            }
            TimeEncoding::Crossed => {
                let width = 1 + self.terms.len();
                out.resize(self.ncols(), 0.0);
                if (1..=self.tau).contains(&t) {
                    let base = (t as usize - 1) * width;
                    out[base] = 1.0;
                    for (j, term) in self.terms.iter().enumerate() {
                        out[base + 1 + j] = term.eval(x);
                    }
                }
            }
        }
    }

    /// Linear predictor `row(x, t) · beta` without materializing the row.
    #[inline]
    pub fn eta(&self, beta: &[f64], x: &[f64], t: Option<u32>) -> f64 {
        let t = self.check_time(t);
        match self.time {
            TimeEncoding::None | TimeEncoding::Linear => {
                let mut k = 0;
                let mut acc = 0.0;
                if self.intercept {
                    acc += beta[0];
                    k = 1;
                }
                for (j, term) in self.terms.iter().enumerate() {
                    acc += beta[k + j] * term.eval(x);
                }
                if self.time == TimeEncoding::Linear {
                    acc += beta[k + self.terms.len()] * f64::from(t);
                }
                acc
            }
            TimeEncoding::Indicators => {
                let tau = self.tau as usize;
                let mut acc = if (1..=self.tau).contains(&t) {
                    beta[t as usize - 1]
                } else {
                    0.0
                };
                for (j, term) in self.terms.iter().enumerate() {
                    acc += beta[tau + j] * term.eval(x);
                }
                acc
            }
            TimeEncoding::Crossed => {
                if !(1..=self.tau).contains(&t) {
                    return 0.0;
                }
                let width = 1 + self.terms.len();
                let base = (t as usize - 1) * width;
                let mut acc = beta[base];
                for (j, term) in self.terms.iter().enumerate() {
                    acc += beta[base + 1 + j] * term.eval(x);
                }
                acc
            }
        }
    }
}

#[inline]
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + libm::exp(-eta))
    } else {
        let e = libm::exp(eta);
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}
