//! Standard errors from a central-difference Hessian of the marginal
//! log-likelihood.
//!
//! The Hessian is taken in an unconstrained parameterisation (intercepts as
//! is, main effects on the log scale, mixing weights as log-odds against
//! class 0) and mapped back to the natural scale with the delta method.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::em::FitResult;
use crate::error::{DcmError, Result};
use crate::math::{exp, fabs, log, sqrt};
use crate::model::{marginal_loglik, ModelSpec, ParameterSet, ResponseMatrix};

/// Relative finite-difference step.
pub const HESSIAN_REL_STEP: f64 = 1e-5;
/// Normal quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;
/// A main effect closer than this multiple of the floor gets a boundary flag.
pub const BOUNDARY_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub label: String,
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub boundary_warning: bool,
}

impl ParameterEstimate {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn overlaps(&self, other: &ParameterEstimate) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub estimates: Vec<ParameterEstimate>,
    /// Natural-scale covariance, row-major, ordered like `ParameterSet::to_vector`.
    pub covariance: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Inference {
    pub fn standard_errors(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.se).collect()
    }

    pub fn ci95(&self) -> Vec<(f64, f64)> {
        self.estimates.iter().map(|e| (e.lower, e.upper)).collect()
    }
}

impl FitResult {
    /// Copies standard errors and intervals onto the fit.
    pub fn attach_inference(&mut self, inference: &Inference) {
        self.standard_errors = Some(inference.standard_errors());
        self.ci95 = Some(inference.ci95());
        for w in &inference.warnings {
            if !self.warnings.contains(w) {
                self.warnings.push(w.clone());
            }
        }
    }
}

/// Central-difference Hessian of `f` at `x`; step `rel_step * max(|x_j|, 1)`.
/// Returned row-major.
pub fn numerical_hessian<F>(mut f: F, x: &[f64], rel_step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let p = x.len();
    let steps: Vec<f64> = x.iter().map(|v| rel_step * fabs(*v).max(1.0)).collect();
    let f0 = f(x)?;
    let mut h = vec![0.0; p * p];
    let mut point = x.to_vec();
    let mut eval = |point: &mut Vec<f64>, moves: &[(usize, f64)]| -> Result<f64> {
        for &(j, d) in moves {
            point[j] += d;
        }
        let v = f(point);
        for &(j, d) in moves {
            point[j] -= d;
        }
        v
    };
    for j in 0..p {
        let hj = steps[j];
        let up = eval(&mut point, &[(j, hj)])?;
        let down = eval(&mut point, &[(j, -hj)])?;
        h[j * p + j] = (up - 2.0 * f0 + down) / (hj * hj);
        for k in 0..j {
            let hk = steps[k];
            let pp = eval(&mut point, &[(j, hj), (k, hk)])?;
            let pm = eval(&mut point, &[(j, hj), (k, -hk)])?;
            let mp = eval(&mut point, &[(j, -hj), (k, hk)])?;
            let mm = eval(&mut point, &[(j, -hj), (k, -hk)])?;
            let v = (pp - pm - mp + mm) / (4.0 * hj * hk);
            h[j * p + k] = v;
            h[k * p + j] = v;
        }
    }
    Ok(h)
}

/// Inverse of the negated Hessian of a log-likelihood (the asymptotic
/// covariance). Fails with eigenvalue diagnostics when not positive definite.
pub fn covariance_from_hessian(hessian: &[f64], p: usize) -> Result<Vec<f64>> {
    let neg = DMatrix::from_row_slice(p, p, hessian).map(|v| -v);
    let sym = (&neg + neg.transpose()) * 0.5;
    match sym.clone().cholesky() {
        Some(chol) => {
            let inv = chol.inverse();
            Ok((0..p).flat_map(|r| (0..p).map(move |c| (r, c))).map(|(r, c)| inv[(r, c)]).collect())
        }
        None => {
            let eig = sym.symmetric_eigenvalues();
            Err(DcmError::NotPositiveDefinite {
                min_eigenvalue: eig.iter().copied().fold(f64::INFINITY, f64::min),
                max_eigenvalue: eig.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        }
    }
}

/// Maps natural parameters to the unconstrained vector used for the Hessian.
pub fn to_unconstrained(params: &ParameterSet) -> Result<Vec<f64>> {
    if params.main_effects.iter().any(|m| *m <= 0.0) {
        return Err(DcmError::Input("main effects must be positive for log transform".into()));
    }
    let p0 = params.structural[0];
    if params.structural.iter().any(|p| *p <= 0.0) {
        return Err(DcmError::Input("structural weight at zero; log-odds undefined".into()));
    }
    let mut theta = params.intercepts.clone();
    theta.extend(params.main_effects.iter().map(|m| log(*m)));
    theta.extend(params.structural[1..].iter().map(|p| log(p / p0)));
    Ok(theta)
}

pub fn from_unconstrained(spec: &ModelSpec, theta: &[f64]) -> ParameterSet {
    let n_items = spec.n_items();
    let n_me = spec.n_main_effects();
    let intercepts = theta[..n_items].to_vec();
    let main_effects = theta[n_items..n_items + n_me].iter().map(|t| exp(*t)).collect();
    let logits = &theta[n_items + n_me..];
    let max = logits.iter().copied().fold(0.0, f64::max);
    let mut w: Vec<f64> = core::iter::once(exp(-max))
        .chain(logits.iter().map(|t| exp(t - max)))
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    ParameterSet {
        intercepts,
        main_effects,
        structural: w,
    }
}

/// Jacobian of natural parameters with respect to the unconstrained ones.
fn jacobian(spec: &ModelSpec, params: &ParameterSet) -> DMatrix<f64> {
    let n_items = spec.n_items();
    let n_me = spec.n_main_effects();
    let p = spec.n_free_params();
    let mut j = DMatrix::zeros(p, p);
    for i in 0..n_items {
        j[(i, i)] = 1.0;
    }
    for k in 0..n_me {
        j[(n_items + k, n_items + k)] = params.main_effects[k];
    }
    let off = n_items + n_me;
    let pi = &params.structural;
    for c in 1..pi.len() {
        for d in 1..pi.len() {
            let delta = if c == d { 1.0 } else { 0.0 };
            j[(off + c - 1, off + d - 1)] = pi[c] * (delta - pi[d]);
        }
    }
    j
}

/// Standard errors and 95% Wald intervals for every free parameter.
pub fn standard_errors(fit: &FitResult, data: &ResponseMatrix) -> Result<Inference> {
    let spec = &fit.spec;
    let theta = to_unconstrained(&fit.params)?;
    let p = theta.len();
    let hessian = numerical_hessian(
        |t| marginal_loglik(&from_unconstrained(spec, t), spec, data),
        &theta,
        HESSIAN_REL_STEP,
    )?;
    let cov_theta = covariance_from_hessian(&hessian, p)?;
    let cov_theta = DMatrix::from_row_slice(p, p, &cov_theta);
    let jac = jacobian(spec, &fit.params);
    let cov = &jac * cov_theta * jac.transpose();

    let labels = ParameterSet::labels(spec, &fit.item_ids);
    let values = fit.params.to_vector();
    let n_items = spec.n_items();
    let n_me = spec.n_main_effects();
    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push(String::from("standard errors computed at a non-converged solution"));
    }
    let estimates = (0..p)
        .map(|k| {
            let se = sqrt(cov[(k, k)].max(0.0));
            let boundary = (n_items..n_items + n_me).contains(&k)
                && values[k] < BOUNDARY_FACTOR * spec.main_effect_floor;
            if boundary {
                warnings.push(format!("{} is within {BOUNDARY_FACTOR}x of the floor", labels[k]));
            }
            ParameterEstimate {
                label: labels[k].clone(),
                estimate: values[k],
                se,
                lower: values[k] - Z_95 * se,
                upper: values[k] + Z_95 * se,
                boundary_warning: boundary,
            }
        })
        .collect();
    let covariance = (0..p).flat_map(|r| (0..p).map(move |c| (r, c))).map(|(r, c)| cov[(r, c)]).collect();
    Ok(Inference {
        estimates,
        covariance,
        warnings,
    })
}
