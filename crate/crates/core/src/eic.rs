//! Clever covariates and the efficient influence curve of the
//! missing-outcome transport parameter `Ψ_a`.
//!
//! `D* = D_V + D_Y + D_{W|V}` with
//!
//! * `D_V = I(S=0)/P(S=0) (Q̄ʳ(a,V) − ψ_a)`,
//! * `D_Y = C_Y (Y − Q̄(a,W))`,
//!   `C_Y = I(A=a, Δ=1, S=1) / (P(S=1) g(a|W) p_Δ(W,a)) · ratio(V)`,
//! * `D_{W|V} = C_{W|V} (Q̄(a,W) − Q̄ʳ(a,V))`, `C_{W|V} = I(S=1)/P(S=1) · ratio(V)`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{ObservedRecord, Schema};
use crate::error::Result;
use crate::model::{BoundModel, NuisanceModel, Truncation};
use crate::nuisance::{arm_probability, finite_prediction, treatment_layout, with_treatment, DensityRatio, NuisanceFits};

/// Per-unit EIC components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EicDecomposition {
    pub d_v: f64,
    pub d_y: f64,
    pub d_wv: f64,
    pub total: f64,
}

impl EicDecomposition {
    pub fn new(d_v: f64, d_y: f64, d_wv: f64) -> Self {
        EicDecomposition {
            d_v,
            d_y,
            d_wv,
            total: d_v + d_y + d_wv,
        }
    }

    /// Componentwise `self − other`.
    pub fn minus(&self, other: &EicDecomposition) -> Self {
        EicDecomposition::new(self.d_v - other.d_v, self.d_y - other.d_y, self.d_wv - other.d_wv)
    }

    /// Source-stratum part `D_Y + D_{W|V}`.
    pub fn source_part(&self) -> f64 {
        self.d_y + self.d_wv
    }
}

/// Nuisance values of one unit for one arm. Entries that need `W` are NaN
/// for target units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmValues {
    /// Truncated `g(a | W)`.
    pub g: f64,
    /// Truncated `p_Δ(W, a)`.
    pub p_delta: f64,
    /// Density-ratio factor at `V`.
    pub ratio: f64,
    /// `Q̄(a, W)`.
    pub q: f64,
    /// `Q̄ʳ(a, V)`.
    pub q_r: f64,
}

#[inline]
pub fn clever_covariate_y(rec: &ObservedRecord, u: &ArmValues, p_s1: f64, arm: bool) -> f64 {
    if rec.s && rec.treated(arm) && rec.observed() {
        u.ratio / (p_s1 * u.g * u.p_delta)
    } else {
        0.0
    }
}

#[inline]
pub fn clever_covariate_wv(rec: &ObservedRecord, u: &ArmValues, p_s1: f64) -> f64 {
    if rec.s {
        u.ratio / p_s1
    } else {
        0.0
    }
}

/// EIC of `Ψ_a` at `psi_a`. `v_equals_w` forces `D_{W|V} = 0`, which holds
/// analytically because then `Q̄ʳ = Q̄`.
pub fn eic_psi_a(
    rec: &ObservedRecord,
    u: &ArmValues,
    p_s1: f64,
    arm: bool,
    psi_a: f64,
    v_equals_w: bool,
) -> EicDecomposition {
    if !rec.s {
        return EicDecomposition::new((u.q_r - psi_a) / (1.0 - p_s1), 0.0, 0.0);
    }
    let c_y = clever_covariate_y(rec, u, p_s1, arm);
    let d_y = if c_y == 0.0 {
        0.0
    } else {
        c_y * (rec.y.expect("observed outcome") - u.q)
    };
    let d_wv = if v_equals_w {
        0.0
    } else {
        clever_covariate_wv(rec, u, p_s1) * (u.q - u.q_r)
    };
    EicDecomposition::new(0.0, d_y, d_wv)
}

/// EIC of `Ψ_1 − Ψ_0`.
pub fn eic_ate(
    rec: &ObservedRecord,
    u: &[ArmValues; 2],
    p_s1: f64,
    psi: [f64; 2],
    v_equals_w: bool,
) -> EicDecomposition {
    let d1 = eic_psi_a(rec, &u[1], p_s1, true, psi[1], v_equals_w);
    let d0 = eic_psi_a(rec, &u[0], p_s1, false, psi[0], v_equals_w);
    d1.minus(&d0)
}

/// Evaluates nuisance values of arbitrary units.
pub trait MissingNuisance {
    fn arm_values(&self, rec: &ObservedRecord, arm: bool) -> Result<ArmValues>;
    fn p_s1(&self) -> f64;
    fn v_equals_w(&self) -> bool;
}

/// A complete set of missing-outcome nuisance functions, as fitted or as
/// known truths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingLaw {
    pub schema: Schema,
    pub g_a: NuisanceModel,
    pub p_delta: NuisanceModel,
    pub p_s_given_v: Option<NuisanceModel>,
    pub q_bar: [NuisanceModel; 2],
    /// Absent when `V = W`, where `Q̄ʳ = Q̄`.
    pub q_bar_r: Option<[NuisanceModel; 2]>,
    pub p_s1: f64,
    pub truncation: Truncation,
    pub ratio: DensityRatio,
}

impl MissingLaw {
    pub fn from_fits(
        schema: Schema,
        fits: &NuisanceFits,
        q_bar_r: Option<[NuisanceModel; 2]>,
        ratio: DensityRatio,
    ) -> Self {
        MissingLaw {
            schema,
            g_a: fits.g_a.clone(),
            p_delta: fits.p_delta.clone(),
            p_s_given_v: fits.p_s_given_v.clone(),
            q_bar: fits.q_bar.clone(),
            q_bar_r,
            p_s1: fits.p_s1,
            truncation: fits.truncation,
            ratio,
        }
    }

    pub fn bind(&self) -> Result<BoundMissingLaw> {
        let w = &self.schema.w_columns;
        let v = &self.schema.v_columns;
        let wa = treatment_layout(w);
        let p_s_given_v = match (&self.p_s_given_v, self.ratio.uses_selection()) {
            (Some(m), true) => Some(m.bind(v)?),
            (None, true) => {
                return Err(crate::Error::invalid("density ratio requires P(S=1|V)"));
            }
            (_, false) => None,
        };
        let q_bar_r = match &self.q_bar_r {
            Some([m0, m1]) => Some([m0.bind(v)?, m1.bind(v)?]),
            None if self.schema.v_equals_w() => None,
            None => return Err(crate::Error::invalid("reduced regression missing for V != W")),
        };
        Ok(BoundMissingLaw {
            g_a: self.g_a.bind(w)?,
            p_delta: self.p_delta.bind(&wa)?,
            p_s_given_v,
            q_bar: [self.q_bar[0].bind(&wa)?, self.q_bar[1].bind(&wa)?],
            q_bar_r,
            v_index: self.schema.v_index(),
            p_s1: self.p_s1,
            truncation: self.truncation,
            ratio: self.ratio,
            v_equals_w: self.schema.v_equals_w(),
        })
    }
}

/// [`MissingLaw`] bound to the data layouts.
#[derive(Debug, Clone)]
pub struct BoundMissingLaw {
    g_a: BoundModel,
    p_delta: BoundModel,
    p_s_given_v: Option<BoundModel>,
    q_bar: [BoundModel; 2],
    q_bar_r: Option<[BoundModel; 2]>,
    v_index: Vec<usize>,
    p_s1: f64,
    truncation: Truncation,
    ratio: DensityRatio,
    v_equals_w: bool,
}

impl BoundMissingLaw {
    /// `W` of a unit; for target units only available when `V = W`.
    fn full_w(&self, rec: &ObservedRecord) -> Option<Vec<f64>> {
        if let Some(w) = &rec.w {
            return Some(w.clone());
        }
        if !self.v_equals_w {
            return None;
        }
        let mut w = alloc::vec![0.0; self.v_index.len()];
        for (j, &i) in self.v_index.iter().enumerate() {
            w[i] = rec.v[j];
        }
        Some(w)
    }
}

impl MissingNuisance for BoundMissingLaw {
    fn arm_values(&self, rec: &ObservedRecord, arm: bool) -> Result<ArmValues> {
        let ratio = match &self.p_s_given_v {
            Some(m) => {
                let p = self.truncation.apply(finite_prediction("p_s_given_v", m, &rec.v, None)?);
                self.ratio.value(p, self.p_s1)
            }
            None => 1.0,
        };
        let k = usize::from(arm);
        let (g, p_delta, q) = match self.full_w(rec) {
            Some(w) => {
                let mut buf = Vec::with_capacity(w.len() + 1);
                let wa = with_treatment(&mut buf, &w, arm);
                let g1 = finite_prediction("g_a", &self.g_a, &w, None)?;
                let pd = self
                    .truncation
                    .apply(finite_prediction("p_delta", &self.p_delta, wa, None)?);
                let q = finite_prediction("q_bar", &self.q_bar[k], wa, None)?;
                (arm_probability(g1, arm, &self.truncation), pd, q)
            }
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        let q_r = match &self.q_bar_r {
            Some(m) => finite_prediction("q_bar_r", &m[k], &rec.v, None)?,
            None => q,
        };
        Ok(ArmValues {
            g,
            p_delta,
            ratio,
            q,
            q_r,
        })
    }

    fn p_s1(&self) -> f64 {
        self.p_s1
    }

    fn v_equals_w(&self) -> bool {
        self.v_equals_w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn values(g: f64, p_delta: f64, ratio: f64) -> ArmValues {
        ArmValues {
            g,
            p_delta,
            ratio,
            q: 0.4,
            q_r: 0.3,
        }
    }

    #[test]
    fn clever_covariates_on_target_units_vanish() {
        let r = ObservedRecord::target(vec![1.0]);
        let u = values(0.5, 1.0, 1.0);
        assert_eq!(clever_covariate_y(&r, &u, 0.5, true), 0.0);
        assert_eq!(clever_covariate_wv(&r, &u, 0.5), 0.0);
    }

    #[test]
    fn clever_covariate_arithmetic() {
        let r = ObservedRecord::source(vec![1.0], &[0], true, Some(1.0));
        assert_eq!(clever_covariate_y(&r, &values(0.5, 1.0, 1.0), 0.5, true), 4.0);
        assert_eq!(clever_covariate_y(&r, &values(0.5, 1.0, 3.0), 0.5, true), 12.0);
        assert_eq!(clever_covariate_y(&r, &values(0.5, 1.0, 3.0), 0.5, false), 0.0);
        assert_eq!(clever_covariate_wv(&r, &values(0.5, 1.0, 1.0), 0.5), 2.0);
    }

    #[test]
    fn missing_outcome_has_no_outcome_component() {
        let r = ObservedRecord::source(vec![1.0], &[0], true, None);
        let d = eic_psi_a(&r, &values(0.5, 0.5, 1.0), 0.5, true, 0.2, false);
        assert_eq!(d.d_y, 0.0);
        assert!((d.d_wv - 2.0 * 0.1).abs() < 1e-15);
        assert_eq!(d.d_v, 0.0);
    }

    #[test]
    fn outcome_at_regression_value_gives_zero_outcome_component() {
        let r = ObservedRecord::source(vec![1.0], &[0], false, Some(0.4));
        let d = eic_psi_a(&r, &values(0.5, 0.5, 1.0), 0.5, false, 0.2, false);
        assert_eq!(d.d_y, 0.0);
    }

    #[test]
    fn ate_is_componentwise_difference() {
        let r = ObservedRecord::target(vec![0.0]);
        let u = [values(0.5, 1.0, 1.0), ArmValues { q_r: 0.9, ..values(0.5, 1.0, 1.0) }];
        let d = eic_ate(&r, &u, 0.5, [0.1, 0.2], false);
        assert!((d.d_v - ((0.9 - 0.2) / 0.5 - (0.3 - 0.1) / 0.5)).abs() < 1e-15);
        assert_eq!(d.total, d.d_v);
    }
}
