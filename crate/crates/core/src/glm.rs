//! Weighted logistic (IRLS) and linear least-squares fitters.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::design::expit;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, PivotedCholesky};

pub const MAX_ITERATIONS: usize = 100;
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Coefficients are clamped to `[-COEF_BOUND, COEF_BOUND]` under separation.
pub const COEF_BOUND: f64 = 40.0;
/// Fitted coefficients at least this large are reported as separation; the
/// Newton steps vanish before the bound is reached.
pub const SEPARATION_THRESHOLD: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FitWarning {
    /// Coefficients diverged and were clamped.
    Separation { columns: Vec<usize> },
    /// Collinear columns were dropped (coefficient fixed at zero).
    RankDeficient { dropped: Vec<usize> },
    NotConverged { iterations: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmSolution {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<FitWarning>,
}

fn check_inputs(x: &Matrix, y: &[f64], weights: Option<&[f64]>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "design has {} rows but {} responses",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("no rows to fit"));
    }
    if !x.is_finite() {
        return Err(Error::invalid("non-finite design entry"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite response"));
    }
    if let Some(w) = weights {
        if w.len() != y.len() {
            return Err(Error::invalid("weight vector length mismatch"));
        }
        if w.iter().any(|&v| v.is_nan() || v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid("all weights are zero"));
        }
    }
    Ok(())
}

/// Columns that are collinear under the case weights alone.
fn structurally_dropped(x: &Matrix, w: &[f64]) -> Vec<usize> {
    let zeros = vec![0.0; x.nrows()];
    let (xtwx, _) = x.weighted_normal_equations(w, &zeros);
    PivotedCholesky::factor(&xtwx).dropped()
}

#[inline]
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + libm::log1p(libm::exp(-eta))
    } else {
        libm::log1p(libm::exp(eta))
    }
}

fn log_likelihood(eta: &[f64], y: &[f64], w: &[f64]) -> f64 {
    eta.iter()
        .zip(y)
        .zip(w)
        .map(|((&e, &yi), &wi)| if wi == 0.0 { 0.0 } else { wi * (yi * e - softplus(e)) })
        .sum()
}

fn linear_predictor(x: &Matrix, beta: &[f64], offset: Option<&[f64]>) -> Vec<f64> {
    let mut eta = x.mul_vec(beta);
    if let Some(off) = offset {
        for (e, o) in eta.iter_mut().zip(off) {
            *e += o;
        }
    }
    eta
}

/// Maximizes the weighted Bernoulli log-likelihood
/// `Σ wᵢ [yᵢ log pᵢ + (1 − yᵢ) log(1 − pᵢ)]`, `logit pᵢ = xᵢᵀβ + offsetᵢ`,
/// by Newton–Raphson (IRLS) with step halving. Responses may be fractional
/// in `[0, 1]` (quasi-binomial).
pub fn fit_logistic(
    x: &Matrix,
    y: &[f64],
    weights: Option<&[f64]>,
    offset: Option<&[f64]>,
) -> Result<GlmSolution> {
    check_inputs(x, y, weights)?;
    if y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::invalid("logistic responses must lie in [0, 1]"));
    }
    if let Some(off) = offset {
        if off.len() != y.len() || off.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("offset must be finite with one entry per row"));
        }
    }
    let n = x.nrows();
    let p = x.ncols();
    let unit = vec![1.0; n];
    let w = weights.unwrap_or(&unit);

    let mut warnings = Vec::new();
    let dropped = structurally_dropped(x, w);
    if !dropped.is_empty() {
        warnings.push(FitWarning::RankDeficient {
            dropped: dropped.clone(),
        });
    }

    let mut beta = vec![0.0; p];
    let mut eta = linear_predictor(x, &beta, offset);
    let mut ll = log_likelihood(&eta, y, w);
    let mut converged = false;
    let mut iterations = 0;
    let mut irls_w = vec![0.0; n];
    let mut resid = vec![0.0; n];

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for i in 0..n {
            let pi = expit(eta[i]);
            irls_w[i] = w[i] * pi * (1.0 - pi);
            // score contribution per unit IRLS weight is handled below
            resid[i] = if irls_w[i] > 0.0 {
                w[i] * (y[i] - pi) / irls_w[i]
            } else {
                0.0
            };
        }
        let (mut hess, grad) = x.weighted_normal_equations(&irls_w, &resid);
        for &j in &dropped {
            for k in 0..p {
                hess.set(j, k, 0.0);
                hess.set(k, j, 0.0);
            }
        }
        let step = PivotedCholesky::factor(&hess).solve(&grad);

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta
                .iter()
                .zip(&step)
                .map(|(b, s)| (b + scale * s).clamp(-COEF_BOUND, COEF_BOUND))
                .collect();
            let cand_eta = linear_predictor(x, &cand, offset);
            let cand_ll = log_likelihood(&cand_eta, y, w);
            if cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) {
                accepted = Some((cand, cand_eta, cand_ll));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cand_eta, cand_ll)) = accepted else {
            converged = true;
            break;
        };
        let change = beta
            .iter()
            .zip(&cand)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = cand;
        eta = cand_eta;
        ll = cand_ll;
        if change < STEP_TOLERANCE {
            converged = true;
            break;
        }
    }

    let clamped: Vec<usize> = (0..p).filter(|&j| beta[j].abs() >= SEPARATION_THRESHOLD).collect();
    if !clamped.is_empty() {
        warnings.push(FitWarning::Separation { columns: clamped });
    }
    if !converged {
        warnings.push(FitWarning::NotConverged { iterations });
    }
    Ok(GlmSolution {
        coefficients: beta,
        converged,
        iterations,
        warnings,
    })
}

/// Weighted least squares `(XᵀΛX)⁻¹XᵀΛy`; collinear columns are dropped in
/// column order.
pub fn fit_linear(x: &Matrix, y: &[f64], weights: Option<&[f64]>) -> Result<GlmSolution> {
    check_inputs(x, y, weights)?;
    let unit = vec![1.0; x.nrows()];
    let w = weights.unwrap_or(&unit);
    let (xtwx, xtwy) = x.weighted_normal_equations(w, y);
    let chol = PivotedCholesky::factor(&xtwx);
    let dropped = chol.dropped();
    let mut warnings = Vec::new();
    if !dropped.is_empty() {
        warnings.push(FitWarning::RankDeficient { dropped });
    }
    Ok(GlmSolution {
        coefficients: chol.solve(&xtwy),
        converged: true,
        iterations: 1,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn intercept(n: usize) -> Matrix {
        Matrix::from_vec(n, 1, vec![1.0; n])
    }

    #[test]
    fn intercept_only_half() {
        let fit = fit_logistic(&intercept(4), &[1.0, 0.0, 1.0, 0.0], None, None).unwrap();
        assert!(fit.converged);
        assert_abs_diff_eq!(fit.coefficients[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn intercept_only_three_quarters() {
        let fit = fit_logistic(&intercept(4), &[1.0, 1.0, 1.0, 0.0], None, None).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], libm::log(3.0), epsilon = 1e-12);
    }

    #[test]
    fn separated_responses_are_clamped() {
        let fit = fit_logistic(&intercept(3), &[1.0, 1.0, 1.0], None, None).unwrap();
        assert!(fit.coefficients[0] >= SEPARATION_THRESHOLD && fit.coefficients[0] <= COEF_BOUND);
        assert!(fit
            .warnings
            .iter()
            .any(|w| matches!(w, FitWarning::Separation { .. })));
    }

    #[test]
    fn offset_shifts_intercept() {
        // with offset 1 the fitted intercept is logit(3/4) - 1
        let off = [1.0; 4];
        let fit = fit_logistic(&intercept(4), &[1.0, 1.0, 1.0, 0.0], None, Some(&off)).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], libm::log(3.0) - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_weights() {
        let x = intercept(2);
        assert!(fit_logistic(&x, &[1.0, 0.0], Some(&[0.0, 0.0]), None).is_err());
        assert!(fit_logistic(&x, &[1.0, 0.0], Some(&[-1.0, 1.0]), None).is_err());
        assert!(fit_logistic(&x, &[2.0, 0.0], None, None).is_err());
    }

    #[test]
    fn linear_mean_and_exact_fit() {
        let fit = fit_linear(&intercept(3), &[1.0, 2.0, 3.0], None).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-14);

        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 3.0]]);
        let fit = fit_linear(&x, &[0.0, 2.0, 6.0], None).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_rank_deficiency_is_reported() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]);
        let fit = fit_linear(&x, &[1.0, 2.0, 3.0], None).unwrap();
        assert_eq!(
            fit.warnings,
            vec![FitWarning::RankDeficient { dropped: vec![1] }]
        );
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-12);
    }
}
