//! Observed-data records for both estimation problems and their validation.
//!
//! A missing-outcome unit is `O = (S, S·(W, A, Δ, ΔY), (1 − S)·V)` with `V` a
//! named coordinate subset of `W`. A survival unit is
//! `O = (S, W, S·A, S·T̃, S·Δ)` on the discrete grid `1..=tau`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column names that the file formats reserve.
pub const RESERVED: [&str; 7] = ["s", "a", "delta", "y", "t", "t_tilde", "delta_event"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Schema {
    #[serde(default)]
    pub v_columns: Vec<String>,
    pub w_columns: Vec<String>,
    #[serde(default)]
    pub t0: Option<u32>,
    #[serde(default)]
    pub tau: Option<u32>,
}

impl Schema {
    pub fn missing_outcome<S: AsRef<str>>(w_columns: &[S], v_columns: &[S]) -> Self {
        Schema {
            v_columns: v_columns.iter().map(|c| c.as_ref().to_string()).collect(),
            w_columns: w_columns.iter().map(|c| c.as_ref().to_string()).collect(),
            t0: None,
            tau: None,
        }
    }

    pub fn survival<S: AsRef<str>>(w_columns: &[S], t0: u32, tau: u32) -> Self {
        Schema {
            v_columns: w_columns.iter().map(|c| c.as_ref().to_string()).collect(),
            w_columns: w_columns.iter().map(|c| c.as_ref().to_string()).collect(),
            t0: Some(t0),
            tau: Some(tau),
        }
    }

    fn check_names(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.w_columns {
            if RESERVED.contains(&c.as_str()) {
                return Err(Error::SchemaMismatch(format!("`{c}` is a reserved column name")));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate covariate `{c}`")));
            }
        }
        let mut vseen = BTreeSet::new();
        for v in &self.v_columns {
            if !seen.contains(v.as_str()) {
                return Err(Error::SchemaMismatch(format!(
                    "V column `{v}` is not one of the W columns"
                )));
            }
            if !vseen.insert(v.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate V column `{v}`")));
            }
        }
        Ok(())
    }

    /// Positions of the V columns within W.
    pub fn v_index(&self) -> Vec<usize> {
        self.v_columns
            .iter()
            .map(|v| self.w_columns.iter().position(|w| w == v).expect("checked"))
            .collect()
    }

    /// W columns that are not part of V, in W order.
    pub fn w_only_columns(&self) -> Vec<String> {
        self.w_columns
            .iter()
            .filter(|w| !self.v_columns.contains(w))
            .cloned()
            .collect()
    }

    /// `V = W` as sets of columns.
    pub fn v_equals_w(&self) -> bool {
        self.v_columns.len() == self.w_columns.len()
            && self.w_columns.iter().all(|w| self.v_columns.contains(w))
    }

    /// Column order of the missing-outcome file format.
    pub fn missing_header(&self) -> Vec<String> {
        let mut h = Vec::with_capacity(self.w_columns.len() + 4);
        h.push("s".to_string());
        h.extend(self.v_columns.iter().cloned());
        h.extend(self.w_only_columns());
        h.extend(["a", "delta", "y"].map(String::from));
        h
    }

    pub fn survival_header(&self) -> Vec<String> {
        let mut h = Vec::with_capacity(self.w_columns.len() + 4);
        h.push("s".to_string());
        h.extend(self.w_columns.iter().cloned());
        h.extend(["a", "t_tilde", "delta_event"].map(String::from));
        h
    }
}

/// Parsed rows with absent cells as `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

/// A missing-outcome unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedRecord {
    pub s: bool,
    pub v: Vec<f64>,
    pub w: Option<Vec<f64>>,
    pub a: Option<bool>,
    pub delta: Option<bool>,
    pub y: Option<f64>,
}

impl ObservedRecord {
    pub fn target(v: Vec<f64>) -> Self {
        ObservedRecord {
            s: false,
            v,
            w: None,
            a: None,
            delta: None,
            y: None,
        }
    }

    /// A source unit; `v` is projected from `w` with `v_index`.
    pub fn source(w: Vec<f64>, v_index: &[usize], a: bool, y: Option<f64>) -> Self {
        ObservedRecord {
            s: true,
            v: v_index.iter().map(|&i| w[i]).collect(),
            w: Some(w),
            a: Some(a),
            delta: Some(y.is_some()),
            y,
        }
    }

    fn check(&self, row: usize, schema: &Schema, v_index: &[usize]) -> Result<()> {
        let fail = |reason: &str| Error::StructuralViolation {
            row,
            reason: reason.to_string(),
        };
        if self.v.len() != schema.v_columns.len() {
            return Err(fail("V has the wrong dimension"));
        }
        if self.v.iter().any(|x| !x.is_finite()) {
            return Err(fail("non-finite covariate"));
        }
        if !self.s {
            if self.w.is_some() || self.a.is_some() || self.delta.is_some() || self.y.is_some() {
                return Err(fail("S=0 units carry only V"));
            }
            return Ok(());
        }
        let w = self.w.as_ref().ok_or_else(|| fail("S=1 unit without W"))?;
        if w.len() != schema.w_columns.len() || w.iter().any(|x| !x.is_finite()) {
            return Err(fail("W missing or non-finite"));
        }
        if v_index.iter().zip(&self.v).any(|(&i, v)| w[i] != *v) {
            return Err(fail("V is not the projection of W"));
        }
        if self.a.is_none() {
            return Err(fail("S=1 unit without treatment"));
        }
        match (self.delta, self.y) {
            (None, _) => Err(fail("S=1 unit without missingness indicator")),
            (Some(true), None) => Err(fail("delta=1 but outcome missing")),
            (Some(false), Some(_)) => Err(fail("outcome present with delta=0")),
            (Some(true), Some(y)) if !y.is_finite() => Err(fail("non-finite outcome")),
            _ => Ok(()),
        }
    }

    pub fn w(&self) -> &[f64] {
        self.w.as_deref().unwrap_or(&[])
    }

    pub fn treated(&self, arm: bool) -> bool {
        self.a == Some(arm)
    }

    pub fn observed(&self) -> bool {
        self.delta == Some(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n: usize,
    pub n_source: usize,
    pub n_target: usize,
    /// Share of source units with a missing outcome, or censored before
    /// `tau` for survival data.
    pub incomplete_rate: f64,
}

/// Validated missing-outcome data. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingDataset {
    records: Vec<ObservedRecord>,
    schema: Schema,
    v_index: Vec<usize>,
    strata: Strata,
}

/// Which populations a dataset must contain. Estimation needs both; a
/// federated source site holds only `S = 1` units and a target site only
/// `S = 0` units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strata {
    #[default]
    Both,
    Source,
    Target,
}

fn require_strata(n_source: usize, n_target: usize, strata: Strata) -> Result<()> {
    let (need_source, need_target) = match strata {
        Strata::Both => (true, true),
        Strata::Source => (true, false),
        Strata::Target => (false, true),
    };
    if need_target && n_target == 0 {
        return Err(Error::EmptyStratum { stratum: 0 });
    }
    if need_source && n_source == 0 {
        return Err(Error::EmptyStratum { stratum: 1 });
    }
    if !need_target && n_target > 0 {
        return Err(Error::invalid("source-only data contains S=0 units"));
    }
    if !need_source && n_source > 0 {
        return Err(Error::invalid("target-only data contains S=1 units"));
    }
    Ok(())
}

impl MissingDataset {
    pub fn new(records: Vec<ObservedRecord>, schema: Schema) -> Result<Self> {
        Self::with_strata(records, schema, Strata::Both)
    }

    pub fn with_strata(records: Vec<ObservedRecord>, schema: Schema, strata: Strata) -> Result<Self> {
        schema.check_names()?;
        let v_index = schema.v_index();
        for (i, r) in records.iter().enumerate() {
            r.check(i, &schema, &v_index)?;
        }
        let n_source = records.iter().filter(|r| r.s).count();
        require_strata(n_source, records.len() - n_source, strata)?;
        Ok(MissingDataset {
            records,
            schema,
            v_index,
            strata,
        })
    }

    /// Builds records from a parsed table; columns are located by name.
    pub fn from_raw(table: &RawTable, schema: Schema) -> Result<Self> {
        Self::from_raw_with(table, schema, Strata::Both)
    }

    pub fn from_raw_with(table: &RawTable, schema: Schema, strata: Strata) -> Result<Self> {
        schema.check_names()?;
        let col = column_locator(&table.header, &schema.missing_header())?;
        let v_index = schema.v_index();
        let mut records = Vec::with_capacity(table.rows.len());
        for (i, row) in table.rows.iter().enumerate() {
            if row.len() != table.header.len() {
                return Err(Error::StructuralViolation {
                    row: i,
                    reason: format!("expected {} cells, found {}", table.header.len(), row.len()),
                });
            }
            let get = |name: &str| row[col(name)];
            let s = binary(i, "s", get("s"))?.ok_or_else(|| Error::StructuralViolation {
                row: i,
                reason: "missing S".into(),
            })?;
            let v = schema
                .v_columns
                .iter()
                .map(|c| {
                    get(c).ok_or_else(|| Error::StructuralViolation {
                        row: i,
                        reason: format!("missing V covariate `{c}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let w_cells: Vec<Option<f64>> = schema.w_columns.iter().map(|c| get(c)).collect();
            let w_only_present = schema
                .w_only_columns()
                .iter()
                .any(|c| get(c).is_some());
            let w = if s {
                Some(
                    w_cells
                        .iter()
                        .zip(&schema.w_columns)
                        .map(|(x, c)| {
                            x.ok_or_else(|| Error::StructuralViolation {
                                row: i,
                                reason: format!("missing W covariate `{c}`"),
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            } else if w_only_present {
                return Err(Error::StructuralViolation {
                    row: i,
                    reason: "S=0 units carry only V".into(),
                });
            } else {
                None
            };
            let rec = ObservedRecord {
                s,
                v,
                w,
                a: binary(i, "a", get("a"))?,
                delta: binary(i, "delta", get("delta"))?,
                y: get("y"),
            };
            rec.check(i, &schema, &v_index)?;
            records.push(rec);
        }
        let n_source = records.iter().filter(|r| r.s).count();
        require_strata(n_source, records.len() - n_source, strata)?;
        Ok(MissingDataset {
            records,
            schema,
            v_index,
            strata,
        })
    }

    pub fn strata(&self) -> Strata {
        self.strata
    }

    /// Inverse of [`MissingDataset::from_raw`], in the canonical column order.
    pub fn to_raw(&self) -> RawTable {
        let header = self.schema.missing_header();
        let w_only: Vec<usize> = self
            .schema
            .w_only_columns()
            .iter()
            .map(|c| self.schema.w_columns.iter().position(|w| w == c).unwrap())
            .collect();
        let rows = self
            .records
            .iter()
            .map(|r| {
                let mut row = Vec::with_capacity(header.len());
                row.push(Some(f64::from(u8::from(r.s))));
                row.extend(r.v.iter().map(|&x| Some(x)));
                row.extend(w_only.iter().map(|&j| r.w.as_ref().map(|w| w[j])));
                row.push(r.a.map(|a| f64::from(u8::from(a))));
                row.push(r.delta.map(|d| f64::from(u8::from(d))));
                row.push(r.y);
                row
            })
            .collect();
        RawTable { header, rows }
    }

    pub fn records(&self) -> &[ObservedRecord] {
        &self.records
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn v_index(&self) -> &[usize] {
        &self.v_index
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_source(&self) -> usize {
        self.records.iter().filter(|r| r.s).count()
    }

    pub fn summary(&self) -> DataSummary {
        let n_source = self.n_source();
        let missing = self
            .records
            .iter()
            .filter(|r| r.s && r.delta == Some(false))
            .count();
        DataSummary {
            n: self.records.len(),
            n_source,
            n_target: self.records.len() - n_source,
            incomplete_rate: missing as f64 / n_source as f64,
        }
    }

    /// Outcomes observed in the source sample, if all are 0/1.
    pub fn binary_outcome(&self) -> bool {
        self.records
            .iter()
            .filter_map(|r| r.y)
            .all(|y| y == 0.0 || y == 1.0)
    }

    /// Range of the observed outcomes.
    pub fn outcome_range(&self) -> (f64, f64) {
        self.records
            .iter()
            .filter_map(|r| r.y)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
                (lo.min(y), hi.max(y))
            })
    }
}

/// A survival unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub s: bool,
    pub w: Vec<f64>,
    pub a: Option<bool>,
    pub t_tilde: Option<u32>,
    pub delta_event: Option<bool>,
}

impl SurvivalRecord {
    pub fn target(w: Vec<f64>) -> Self {
        SurvivalRecord {
            s: false,
            w,
            a: None,
            t_tilde: None,
            delta_event: None,
        }
    }

    pub fn source(w: Vec<f64>, a: bool, t_tilde: u32, event: bool) -> Self {
        SurvivalRecord {
            s: true,
            w,
            a: Some(a),
            t_tilde: Some(t_tilde),
            delta_event: Some(event),
        }
    }

    fn check(&self, row: usize, p: usize, tau: u32) -> Result<()> {
        let fail = |reason: &str| Error::StructuralViolation {
            row,
            reason: reason.to_string(),
        };
        if self.w.len() != p || self.w.iter().any(|x| !x.is_finite()) {
            return Err(fail("W missing or non-finite"));
        }
        if !self.s {
            if self.a.is_some() || self.t_tilde.is_some() || self.delta_event.is_some() {
                return Err(fail("S=0 units carry only W"));
            }
            return Ok(());
        }
        match (self.a, self.t_tilde, self.delta_event) {
            (Some(_), Some(t), Some(_)) if (1..=tau).contains(&t) => Ok(()),
            (Some(_), Some(t), Some(_)) => Err(fail(&format!("t_tilde={t} outside 1..={tau}"))),
            _ => Err(fail("S=1 unit without treatment, time or event indicator")),
        }
    }

    pub fn treated(&self, arm: bool) -> bool {
        self.a == Some(arm)
    }

    /// Observed to survive beyond `t0`: follow-up past `t0`, or censored at
    /// `t0` (censoring in a period is evaluated after the event).
    pub fn survives_beyond(&self, t0: u32) -> bool {
        match (self.t_tilde, self.delta_event) {
            (Some(t), Some(event)) => t > t0 || (t == t0 && !event),
            _ => false,
        }
    }
}

/// Validated survival data on the grid `1..=tau` with horizon `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    records: Vec<SurvivalRecord>,
    w_columns: Vec<String>,
    t0: u32,
    tau: u32,
    strata: Strata,
}

impl SurvivalDataset {
    pub fn new(records: Vec<SurvivalRecord>, w_columns: Vec<String>, t0: u32, tau: u32) -> Result<Self> {
        Self::with_strata(records, w_columns, t0, tau, Strata::Both)
    }

    pub fn with_strata(
        records: Vec<SurvivalRecord>,
        w_columns: Vec<String>,
        t0: u32,
        tau: u32,
        strata: Strata,
    ) -> Result<Self> {
        let schema = Schema {
            v_columns: Vec::new(),
            w_columns,
            t0: Some(t0),
            tau: Some(tau),
        };
        schema.check_names()?;
        check_horizon(t0, tau)?;
        let p = schema.w_columns.len();
        for (i, r) in records.iter().enumerate() {
            r.check(i, p, tau)?;
        }
        let n_source = records.iter().filter(|r| r.s).count();
        require_strata(n_source, records.len() - n_source, strata)?;
        Ok(SurvivalDataset {
            records,
            w_columns: schema.w_columns,
            t0,
            tau,
            strata,
        })
    }

    pub fn strata(&self) -> Strata {
        self.strata
    }

    pub fn from_raw(table: &RawTable, schema: &Schema) -> Result<Self> {
        Self::from_raw_with(table, schema, Strata::Both)
    }

    pub fn from_raw_with(table: &RawTable, schema: &Schema, strata: Strata) -> Result<Self> {
        let (t0, tau) = match (schema.t0, schema.tau) {
            (Some(t0), Some(tau)) => (t0, tau),
            _ => return Err(Error::SchemaMismatch("survival data needs t0 and tau".into())),
        };
        schema.check_names()?;
        let col = column_locator(&table.header, &schema.survival_header())?;
        let mut records = Vec::with_capacity(table.rows.len());
        for (i, row) in table.rows.iter().enumerate() {
            if row.len() != table.header.len() {
                return Err(Error::StructuralViolation {
                    row: i,
                    reason: format!("expected {} cells, found {}", table.header.len(), row.len()),
                });
            }
            let get = |name: &str| row[col(name)];
            let s = binary(i, "s", get("s"))?.ok_or_else(|| Error::StructuralViolation {
                row: i,
                reason: "missing S".into(),
            })?;
            let w = schema
                .w_columns
                .iter()
                .map(|c| {
                    get(c).ok_or_else(|| Error::StructuralViolation {
                        row: i,
                        reason: format!("missing covariate `{c}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let t_tilde = match get("t_tilde") {
                None => None,
                Some(t) if libm::trunc(t) == t && t >= 1.0 && t <= f64::from(u32::MAX) => Some(t as u32),
                Some(t) => {
                    return Err(Error::StructuralViolation {
                        row: i,
                        reason: format!("t_tilde={t} is not a positive integer"),
                    })
                }
            };
            records.push(SurvivalRecord {
                s,
                w,
                a: binary(i, "a", get("a"))?,
                t_tilde,
                delta_event: binary(i, "delta_event", get("delta_event"))?,
            });
        }
        Self::with_strata(records, schema.w_columns.clone(), t0, tau, strata)
    }

    pub fn to_raw(&self) -> RawTable {
        let schema = Schema {
            v_columns: Vec::new(),
            w_columns: self.w_columns.clone(),
            t0: Some(self.t0),
            tau: Some(self.tau),
        };
        let rows = self
            .records
            .iter()
            .map(|r| {
                let mut row = Vec::with_capacity(self.w_columns.len() + 4);
                row.push(Some(f64::from(u8::from(r.s))));
                row.extend(r.w.iter().map(|&x| Some(x)));
                row.push(r.a.map(|a| f64::from(u8::from(a))));
                row.push(r.t_tilde.map(f64::from));
                row.push(r.delta_event.map(|d| f64::from(u8::from(d))));
                row
            })
            .collect();
        RawTable {
            header: schema.survival_header(),
            rows,
        }
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn w_columns(&self) -> &[String] {
        &self.w_columns
    }

    pub fn t0(&self) -> u32 {
        self.t0
    }

    pub fn tau(&self) -> u32 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Same units with a different horizon.
    pub fn with_t0(&self, t0: u32) -> Result<Self> {
        check_horizon(t0, self.tau)?;
        Ok(SurvivalDataset {
            t0,
            ..self.clone()
        })
    }

    pub fn summary(&self) -> DataSummary {
        let n_source = self.records.iter().filter(|r| r.s).count();
        let censored = self
            .records
            .iter()
            .filter(|r| r.s && r.delta_event == Some(false) && r.t_tilde < Some(self.tau))
            .count();
        DataSummary {
            n: self.records.len(),
            n_source,
            n_target: self.records.len() - n_source,
            incomplete_rate: censored as f64 / n_source as f64,
        }
    }

    /// One row per source unit and period `t = 1..=T̃`.
    pub fn person_time(&self) -> Vec<PersonTimeRow> {
        person_time_expand(self)
    }
}

fn check_horizon(t0: u32, tau: u32) -> Result<()> {
    if tau == 0 || t0 == 0 || t0 > tau {
        return Err(Error::invalid(format!(
            "need 1 <= t0 <= tau, got t0={t0}, tau={tau}"
        )));
    }
    Ok(())
}

/// One at-risk period of a source unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PersonTimeRow {
    /// Index of the unit in the dataset.
    pub unit: usize,
    pub t: u32,
    /// `dN(t) = I(T̃ = t, Δ = 1)`.
    pub event: bool,
    /// `dA_c(t) = I(T̃ = t, Δ = 0)`.
    pub censored: bool,
}

impl PersonTimeRow {
    /// Every expanded row is in the risk set `I(T̃ ≥ t)`.
    pub fn at_risk(&self) -> bool {
        true
    }
}

/// Expands source units into the risk-set representation.
pub fn person_time_expand(data: &SurvivalDataset) -> Vec<PersonTimeRow> {
    let mut rows = Vec::new();
    for (unit, r) in data.records.iter().enumerate() {
        let (Some(tt), Some(event)) = (r.t_tilde, r.delta_event) else {
            continue;
        };
        for t in 1..=tt {
            let last = t == tt;
            rows.push(PersonTimeRow {
                unit,
                t,
                event: last && event,
                censored: last && !event,
            });
        }
    }
    rows
}

fn binary(row: usize, name: &str, v: Option<f64>) -> Result<Option<bool>> {
    match v {
        None => Ok(None),
        Some(0.0) => Ok(Some(false)),
        Some(1.0) => Ok(Some(true)),
        Some(x) => Err(Error::StructuralViolation {
            row,
            reason: format!("`{name}` must be 0 or 1, found {x}"),
        }),
    }
}

fn column_locator<'h>(
    header: &'h [String],
    expected: &[String],
) -> Result<impl Fn(&str) -> usize + 'h> {
    for e in expected {
        if !header.iter().any(|h| h == e) {
            return Err(Error::SchemaMismatch(format!("missing column `{e}`")));
        }
    }
    for h in header {
        if !expected.contains(h) {
            return Err(Error::SchemaMismatch(format!("unexpected column `{h}`")));
        }
    }
    Ok(move |name: &str| header.iter().position(|h| h == name).expect("checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn missing_schema() -> Schema {
        Schema::missing_outcome(&["w1", "w2"], &["w1"])
    }

    fn table(rows: Vec<Vec<Option<f64>>>) -> RawTable {
        RawTable {
            header: missing_schema().missing_header(),
            rows,
        }
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            missing_schema().missing_header(),
            vec!["s", "w1", "w2", "a", "delta", "y"]
        );
    }

    #[test]
    fn delta_zero_forces_missing_outcome() {
        let t = table(vec![
            vec![Some(1.0), Some(1.0), Some(2.0), Some(1.0), Some(0.0), None],
            vec![Some(0.0), Some(1.0), None, None, None, None],
        ]);
        let ds = MissingDataset::from_raw(&t, missing_schema()).unwrap();
        assert_eq!(ds.records()[0].y, None);
        assert_eq!(ds.records()[0].v, vec![1.0]);
    }

    #[test]
    fn target_row_with_treatment_is_rejected() {
        let t = table(vec![
            vec![Some(1.0), Some(1.0), Some(2.0), Some(1.0), Some(1.0), Some(0.5)],
            vec![Some(0.0), Some(1.0), None, Some(1.0), None, None],
        ]);
        assert!(matches!(
            MissingDataset::from_raw(&t, missing_schema()),
            Err(Error::StructuralViolation { row: 1, .. })
        ));
    }

    #[test]
    fn outcome_with_delta_zero_is_rejected() {
        let t = table(vec![
            vec![Some(1.0), Some(1.0), Some(2.0), Some(1.0), Some(0.0), Some(1.0)],
            vec![Some(0.0), Some(1.0), None, None, None, None],
        ]);
        assert!(matches!(
            MissingDataset::from_raw(&t, missing_schema()),
            Err(Error::StructuralViolation { row: 0, .. })
        ));
    }

    #[test]
    fn empty_strata_are_rejected() {
        let t = table(vec![vec![Some(0.0), Some(1.0), None, None, None, None]]);
        assert_eq!(
            MissingDataset::from_raw(&t, missing_schema()),
            Err(Error::EmptyStratum { stratum: 1 })
        );
    }

    #[test]
    fn three_row_fixture_counts() {
        let t = table(vec![
            vec![Some(1.0), Some(0.0), Some(1.0), Some(1.0), Some(1.0), Some(1.0)],
            vec![Some(0.0), Some(1.0), None, None, None, None],
            vec![Some(1.0), Some(1.0), Some(0.0), Some(0.0), Some(0.0), None],
        ]);
        let ds = MissingDataset::from_raw(&t, missing_schema()).unwrap();
        let s = ds.summary();
        assert_eq!((s.n, s.n_source, s.n_target), (3, 2, 1));
        assert_eq!(s.incomplete_rate, 0.5);
        assert_eq!(ds.to_raw(), t);
    }

    #[test]
    fn v_must_be_subset_of_w() {
        let schema = Schema::missing_outcome(&["w1"], &["zz"]);
        assert!(matches!(
            MissingDataset::new(vec![], schema),
            Err(Error::SchemaMismatch(_))
        ));
    }

    fn surv(records: Vec<SurvivalRecord>) -> SurvivalDataset {
        SurvivalDataset::new(records, vec!["w".into()], 2, 3).unwrap()
    }

    #[test]
    fn person_time_event_unit() {
        let ds = surv(vec![
            SurvivalRecord::source(vec![0.0], true, 3, true),
            SurvivalRecord::target(vec![1.0]),
        ]);
        let pt = ds.person_time();
        assert_eq!(pt.len(), 3);
        assert_eq!(pt.iter().map(|r| r.event).collect::<Vec<_>>(), vec![false, false, true]);
        assert!(pt.iter().all(|r| !r.censored && r.at_risk()));
    }

    #[test]
    fn person_time_censored_unit() {
        let ds = surv(vec![
            SurvivalRecord::source(vec![0.0], false, 1, false),
            SurvivalRecord::target(vec![1.0]),
        ]);
        let pt = ds.person_time();
        assert_eq!(pt.len(), 1);
        assert!(!pt[0].event && pt[0].censored);
    }

    #[test]
    fn person_time_row_count_is_sum_of_follow_up() {
        let ds = surv(vec![
            SurvivalRecord::source(vec![0.0], false, 2, false),
            SurvivalRecord::source(vec![1.0], true, 3, true),
            SurvivalRecord::target(vec![1.0]),
        ]);
        assert_eq!(ds.person_time().len(), 5);
    }

    #[test]
    fn survival_time_outside_grid_is_rejected() {
        let r = SurvivalDataset::new(
            vec![
                SurvivalRecord::source(vec![0.0], false, 4, false),
                SurvivalRecord::target(vec![1.0]),
            ],
            vec!["w".into()],
            2,
            3,
        );
        assert!(matches!(r, Err(Error::StructuralViolation { row: 0, .. })));
    }

    #[test]
    fn survives_beyond_counts_censoring_at_horizon() {
        assert!(SurvivalRecord::source(vec![], true, 2, false).survives_beyond(2));
        assert!(!SurvivalRecord::source(vec![], true, 2, true).survives_beyond(2));
        assert!(!SurvivalRecord::source(vec![], true, 1, false).survives_beyond(2));
        assert!(SurvivalRecord::source(vec![], true, 3, true).survives_beyond(2));
    }
}
