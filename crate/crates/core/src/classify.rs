//! Posterior probabilities of proficiency, threshold classification, the
//! total-score to posterior table and cutscores.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::em::FitResult;
use crate::error::{DcmError, Result};
use crate::math::{log, log_sigmoid, log_sum_exp, sigmoid, softplus};
use crate::model::{check_compatible, class_bit, total_score, Family, ModelSpec, ParameterSet, ResponseMatrix};

/// Two posteriors closer than this are the same value in a score table.
pub const DISTINCT_TOL: f64 = 1e-9;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Proficient,
    NotProficient,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Proficient => "PROFICIENT",
            Status::NotProficient => "NOT_PROFICIENT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub examinee_id: String,
    pub posterior_proficient: f64,
    pub status: Status,
    pub total_score: usize,
    pub complete: bool,
}

/// Ties at exactly the threshold classify as proficient.
pub fn classify(posterior: f64, threshold: f64) -> Status {
    if posterior >= threshold {
        Status::Proficient
    } else {
        Status::NotProficient
    }
}

fn require_single_attribute(spec: &ModelSpec) -> Result<()> {
    if spec.n_attributes != 1 {
        return Err(DcmError::ModelMismatch(format!(
            "operation needs a single-attribute model, got {} attributes",
            spec.n_attributes
        )));
    }
    Ok(())
}

fn check_row(spec: &ModelSpec, row: &[Option<bool>]) -> Result<()> {
    if row.len() != spec.n_items() {
        return Err(DcmError::Input(format!(
            "row has {} responses, model has {} items",
            row.len(),
            spec.n_items()
        )));
    }
    if row.iter().all(Option::is_none) {
        return Err(DcmError::UndefinedPosterior("row has no observed responses".into()));
    }
    Ok(())
}

/// Posterior of mastery (`alpha = 1`) for a single-attribute model.
pub fn posterior_proficiency(fit: &FitResult, row: &[Option<bool>]) -> Result<f64> {
    proficiency_posterior(&fit.params, &fit.spec, row)
}

/// [`posterior_proficiency`] from bare parameters.
pub fn proficiency_posterior(params: &ParameterSet, spec: &ModelSpec, row: &[Option<bool>]) -> Result<f64> {
    require_single_attribute(spec)?;
    check_row(spec, row)?;
    let mut log_odds = log(params.structural[1]) - log(params.structural[0]);
    for (i, x) in row.iter().enumerate() {
        let Some(x) = x else { continue };
        let eta0 = params.intercepts[i];
        let eta1 = eta0 + params.main_effect_for(spec, i);
        log_odds += if *x {
            log_sigmoid(eta1) - log_sigmoid(eta0)
        } else {
            log_sigmoid(-eta1) - log_sigmoid(-eta0)
        };
    }
    Ok(sigmoid(log_odds))
}

/// Marginal posterior of mastery for every attribute.
pub fn attribute_posteriors(params: &ParameterSet, spec: &ModelSpec, row: &[Option<bool>]) -> Result<Vec<f64>> {
    check_row(spec, row)?;
    let n_classes = spec.n_classes();
    let mut joint = vec![0.0; n_classes];
    for (c, j) in joint.iter_mut().enumerate() {
        *j = log(params.structural[c]);
        for (i, x) in row.iter().enumerate() {
            let Some(x) = x else { continue };
            let eta = params.logit(spec, i, c);
            *j += if *x { log_sigmoid(eta) } else { log_sigmoid(-eta) };
        }
    }
    let lse = log_sum_exp(&joint);
    if !lse.is_finite() {
        return Err(DcmError::NumericalDegeneracy("row has zero total likelihood".into()));
    }
    let mut out = vec![0.0; spec.n_attributes];
    for (c, j) in joint.iter().enumerate() {
        let w = libm::exp(j - lse);
        for (a, o) in out.iter_mut().enumerate() {
            if class_bit(c, a, spec.n_attributes) == 1 {
                *o += w;
            }
        }
    }
    Ok(out)
}

/// Posterior of mastery implied by a total score under the one-parameter
/// LCDM with complete responses:
/// `logit = ln(pi1/pi0) + lambda1 s + sum_i [sp(l_i0) - sp(l_i0 + lambda1)]`.
pub fn closed_form_posterior(params: &ParameterSet, spec: &ModelSpec, total: usize) -> Result<f64> {
    if spec.family != Family::OnePlcdm {
        return Err(DcmError::ModelMismatch(
            "the score-based posterior only exists for the one-parameter LCDM".into(),
        ));
    }
    require_single_attribute(spec)?;
    if total > spec.n_items() {
        return Err(DcmError::Input(format!(
            "score {total} exceeds the test length {}",
            spec.n_items()
        )));
    }
    let slope = params.main_effects[0];
    let mut log_odds = log(params.structural[1]) - log(params.structural[0]) + slope * total as f64;
    for l0 in &params.intercepts {
        log_odds += softplus(*l0) - softplus(l0 + slope);
    }
    Ok(sigmoid(log_odds))
}

/// Smallest total score whose posterior reaches `threshold`.
pub fn derive_cutscore(fit: &FitResult, threshold: f64) -> Result<Option<usize>> {
    cutscore(&fit.params, &fit.spec, threshold)
}

pub fn cutscore(params: &ParameterSet, spec: &ModelSpec, threshold: f64) -> Result<Option<usize>> {
    for s in 0..=spec.n_items() {
        if closed_form_posterior(params, spec, s)? >= threshold {
            return Ok(Some(s));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub total_score: usize,
    /// Distinct posterior values (ascending) at this score.
    pub posteriors: Vec<f64>,
    pub count: usize,
    pub mean_posterior: f64,
    pub min_posterior: f64,
    pub max_posterior: f64,
}

impl ScoreRow {
    pub fn spread(&self) -> f64 {
        self.max_posterior - self.min_posterior
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePosteriorTable {
    pub rows: Vec<ScoreRow>,
    /// Examinees with missing responses; they are not grouped by score.
    pub incomplete_examinees: Vec<String>,
    pub distinct_tol: f64,
}

pub fn score_posterior_table(fit: &FitResult, data: &ResponseMatrix) -> Result<ScorePosteriorTable> {
    score_table(&fit.params, &fit.spec, data)
}

pub fn score_table(params: &ParameterSet, spec: &ModelSpec, data: &ResponseMatrix) -> Result<ScorePosteriorTable> {
    require_single_attribute(spec)?;
    check_compatible(params, spec, data)?;
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut incomplete = Vec::new();
    for (e, row) in data.rows().enumerate() {
        if row.iter().any(Option::is_none) {
            incomplete.push(data.examinee_ids()[e].clone());
            continue;
        }
        let post = proficiency_posterior(params, spec, row)?;
        groups.entry(total_score(row)).or_default().push(post);
    }
    let rows = groups
        .into_iter()
        .map(|(score, mut values)| {
            values.sort_by(f64::total_cmp);
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            ScoreRow {
                total_score: score,
                posteriors: distinct_values(&values, DISTINCT_TOL),
                count,
                mean_posterior: mean,
                min_posterior: values[0],
                max_posterior: values[count - 1],
            }
        })
        .collect();
    Ok(ScorePosteriorTable {
        rows,
        incomplete_examinees: incomplete,
        distinct_tol: DISTINCT_TOL,
    })
}

/// Greedy clustering of sorted values: a new value starts whenever it is more
/// than `tol` above the first member of the current cluster.
fn distinct_values(sorted: &[f64], tol: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &v in sorted {
        match out.last() {
            Some(&anchor) if v - anchor <= tol => {}
            _ => out.push(v),
        }
    }
    out
}

/// Posterior, status and total score for every examinee.
pub fn classify_examinees(fit: &FitResult, data: &ResponseMatrix, threshold: f64) -> Result<Vec<ClassificationResult>> {
    require_single_attribute(&fit.spec)?;
    check_compatible(&fit.params, &fit.spec, data)?;
    data.rows()
        .enumerate()
        .map(|(e, row)| {
            let post = proficiency_posterior(&fit.params, &fit.spec, row)?;
            Ok(ClassificationResult {
                examinee_id: data.examinee_ids()[e].clone(),
                posterior_proficient: post,
                status: classify(post, threshold),
                total_score: total_score(row),
                complete: row.iter().all(Option::is_some),
            })
        })
        .collect()
}
